#include "lad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "lad/rng.hpp"

namespace lad {

namespace {

thread_local int g_no_grad_depth = 0;

std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::shared_ptr<TensorImpl> new_impl(std::vector<int64_t> shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->val.assign(static_cast<size_t>(impl->size()), 0.0);
  return impl;
}

bool any_requires(std::initializer_list<const Tensor*> ts) {
  if (g_no_grad_depth > 0) return false;
  for (const Tensor* t : ts)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

}  // namespace

Tensor wrap_impl(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

Tensor Tensor::leaf(std::vector<int64_t> shape, std::vector<double> values,
                    bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  int64_t n = impl->size();
  LAD_CHECK(static_cast<int64_t>(values.size()) == n, "leaf: ", values.size(),
            " values for shape ", shape_str(impl->shape));
  impl->val = std::move(values);
  impl->requires_grad = requires_grad && g_no_grad_depth == 0;
  return wrap_impl(std::move(impl));
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  auto impl = new_impl(std::move(shape));
  impl->requires_grad = requires_grad && g_no_grad_depth == 0;
  return wrap_impl(std::move(impl));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  auto impl = new_impl(std::move(shape));
  std::fill(impl->val.begin(), impl->val.end(), value);
  return wrap_impl(std::move(impl));
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::row(std::vector<double> values) {
  const int64_t n = static_cast<int64_t>(values.size());
  return leaf({n}, std::move(values), false);
}

Tensor Tensor::matrix(int64_t rows, int64_t cols, std::vector<double> values) {
  return leaf({rows, cols}, std::move(values), false);
}

const std::vector<int64_t>& Tensor::shape() const {
  LAD_CHECK(defined(), "shape() on undefined tensor");
  return impl_->shape;
}
int64_t Tensor::rank() const { return static_cast<int64_t>(shape().size()); }
int64_t Tensor::size() const { return impl_->size(); }
int64_t Tensor::rows() const {
  LAD_CHECK(rank() == 2, "rows() needs rank 2, got shape ", shape_str(shape()));
  return shape()[0];
}
int64_t Tensor::cols() const {
  LAD_CHECK(rank() == 2, "cols() needs rank 2, got shape ", shape_str(shape()));
  return shape()[1];
}
std::vector<double>& Tensor::vals() { return impl_->val; }
const std::vector<double>& Tensor::vals() const { return impl_->val; }
double* Tensor::data() { return impl_->val.data(); }
const double* Tensor::data() const { return impl_->val.data(); }
double Tensor::item() const {
  LAD_CHECK(size() == 1, "item() needs a single element, got shape ",
            shape_str(shape()));
  return impl_->val[0];
}
double Tensor::at(int64_t i) const { return impl_->val.at(static_cast<size_t>(i)); }
double Tensor::at(int64_t i, int64_t j) const {
  return impl_->val.at(static_cast<size_t>(i * cols() + j));
}
bool Tensor::requires_grad() const { return defined() && impl_->requires_grad; }
bool Tensor::is_leaf() const { return impl_->is_leaf(); }

void GradStore::add(TensorImpl* t, const double* g, int64_t n) {
  auto& buf = grads_[t];
  if (buf.empty()) buf.assign(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < n; ++i) buf[static_cast<size_t>(i)] += g[i];
}

double* GradStore::raw_buffer(TensorImpl* t, int64_t n) {
  auto& buf = grads_[t];
  if (buf.empty()) buf.assign(static_cast<size_t>(n), 0.0);
  LAD_CHECK(static_cast<int64_t>(buf.size()) == n, "GradStore: buffer size ",
            buf.size(), " vs ", n);
  return buf.data();
}

const std::vector<double>* GradStore::find(const Tensor& t) const {
  auto it = grads_.find(t.impl());
  return it == grads_.end() ? nullptr : &it->second;
}

std::vector<double>& GradStore::at(const Tensor& t) {
  auto it = grads_.find(t.impl());
  LAD_CHECK(it != grads_.end(), "GradStore: no gradient recorded for tensor");
  return it->second;
}

void GradStore::accumulate(const GradStore& other) {
  for (const auto& [impl, g] : other.grads_) {
    auto& buf = grads_[impl];
    if (buf.empty()) buf.assign(g.size(), 0.0);
    LAD_CHECK(buf.size() == g.size(), "GradStore: size mismatch while reducing");
    for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  }
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

namespace {

// Returns the buffer a parent's gradient accumulates into, or nullptr when
// the parent does not require grad. Leaf gradients go to the GradStore so
// shared parameters are never mutated during backward.
double* acc_buf(const Tensor& parent, GradStore& store) {
  if (!parent.requires_grad()) return nullptr;
  TensorImpl* p = parent.impl();
  if (p->is_leaf()) return store.raw_buffer(p, p->size());
  if (p->grad.empty()) p->grad.assign(static_cast<size_t>(p->size()), 0.0);
  return p->grad.data();
}

}  // namespace

void backward(const Tensor& loss, GradStore& store) {
  LAD_CHECK(loss.defined() && loss.size() == 1, "backward: loss must be scalar");
  LAD_CHECK(loss.requires_grad(), "backward: loss does not require grad");
  if (loss.impl()->is_leaf()) {
    const double one = 1.0;
    store.add(loss.impl(), &one, 1);
    return;
  }

  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  struct Frame {
    TensorImpl* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.impl(), 0});
  visited.insert(loss.impl());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      const Tensor& p = f.node->parents[f.next_parent++];
      TensorImpl* pi = p.impl();
      if (p.requires_grad() && !pi->is_leaf() && !visited.count(pi)) {
        visited.insert(pi);
        stack.push_back({pi, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  for (TensorImpl* n : order) n->grad.clear();
  loss.impl()->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n, store);
    if (n != loss.impl()) n->grad.clear();
  }
}

namespace {

Tensor make_op(std::vector<int64_t> shape, std::vector<Tensor> parents,
               std::function<void(TensorImpl&, GradStore&)> bw, bool track) {
  auto impl = new_impl(std::move(shape));
  if (track) {
    impl->requires_grad = true;
    impl->parents = std::move(parents);
    impl->backward_fn = std::move(bw);
  }
  return wrap_impl(std::move(impl));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  LAD_CHECK(a.shape() == b.shape(), op, ": shapes ", shape_str(a.shape()), " vs ",
            shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  const bool req = any_requires({&a, &b});
  Tensor out = make_op(
      a.shape(), {a, b},
      [a, b](TensorImpl& self, GradStore& store) {
        const int64_t n = self.size();
        if (double* da = acc_buf(a, store))
          for (int64_t i = 0; i < n; ++i) da[i] += self.grad[i];
        if (double* db = acc_buf(b, store))
          for (int64_t i = 0; i < n; ++i) db[i] += self.grad[i];
      },
      req);
  const int64_t n = out.size();
  double* o = out.data();
  const double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < n; ++i) o[i] = pa[i] + pb[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  const bool req = any_requires({&a, &b});
  Tensor out = make_op(
      a.shape(), {a, b},
      [a, b](TensorImpl& self, GradStore& store) {
        const int64_t n = self.size();
        if (double* da = acc_buf(a, store))
          for (int64_t i = 0; i < n; ++i) da[i] += self.grad[i];
        if (double* db = acc_buf(b, store))
          for (int64_t i = 0; i < n; ++i) db[i] -= self.grad[i];
      },
      req);
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  const bool req = any_requires({&a, &b});
  Tensor out = make_op(
      a.shape(), {a, b},
      [a, b](TensorImpl& self, GradStore& store) {
        const int64_t n = self.size();
        if (double* da = acc_buf(a, store))
          for (int64_t i = 0; i < n; ++i) da[i] += self.grad[i] * b.data()[i];
        if (double* db = acc_buf(b, store))
          for (int64_t i = 0; i < n; ++i) db[i] += self.grad[i] * a.data()[i];
      },
      req);
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  const bool req = any_requires({&a});
  Tensor out = make_op(
      a.shape(), {a},
      [a, c](TensorImpl& self, GradStore& store) {
        if (double* da = acc_buf(a, store))
          for (int64_t i = 0; i < self.size(); ++i) da[i] += self.grad[i] * c;
      },
      req);
  for (int64_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * c;
  return out;
}

Tensor add_const(const Tensor& a, double c) {
  const bool req = any_requires({&a});
  Tensor out = make_op(
      a.shape(), {a},
      [a](TensorImpl& self, GradStore& store) {
        if (double* da = acc_buf(a, store))
          for (int64_t i = 0; i < self.size(); ++i) da[i] += self.grad[i];
      },
      req);
  for (int64_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] + c;
  return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  LAD_CHECK(m.rank() == 2 && v.rank() == 1 && m.cols() == v.size(),
            "add_rowvec: shapes ", shape_str(m.shape()), " vs ", shape_str(v.shape()));
  const int64_t r = m.rows(), c = m.cols();
  const bool req = any_requires({&m, &v});
  Tensor out = make_op(
      m.shape(), {m, v},
      [m, v, r, c](TensorImpl& self, GradStore& store) {
        if (double* dm = acc_buf(m, store))
          for (int64_t i = 0; i < r * c; ++i) dm[i] += self.grad[i];
        if (double* dv = acc_buf(v, store))
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) dv[j] += self.grad[i * c + j];
      },
      req);
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j)
      out.data()[i * c + j] = m.data()[i * c + j] + v.data()[j];
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  LAD_CHECK(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(),
            "matmul: shapes ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  const bool req = any_requires({&a, &b});
  Tensor out = make_op(
      {m, n}, {a, b},
      [a, b, m, k, n](TensorImpl& self, GradStore& store) {
        const double* g = self.grad.data();
        const double* pa = a.data();
        const double* pb = b.data();
        if (double* da = acc_buf(a, store)) {
          for (int64_t i = 0; i < m; ++i)
            for (int64_t kk = 0; kk < k; ++kk) {
              double s = 0.0;
              const double* gr = g + i * n;
              const double* br = pb + kk * n;
              for (int64_t j = 0; j < n; ++j) s += gr[j] * br[j];
              da[i * k + kk] += s;
            }
        }
        if (double* db = acc_buf(b, store)) {
          for (int64_t kk = 0; kk < k; ++kk)
            for (int64_t i = 0; i < m; ++i) {
              const double s = pa[i * k + kk];
              const double* gr = g + i * n;
              double* dbr = db + kk * n;
              for (int64_t j = 0; j < n; ++j) dbr[j] += s * gr[j];
            }
        }
      },
      req);
  double* o = out.data();
  const double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < m; ++i) {
    double* orow = o + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double s = pa[i * k + kk];
      if (s == 0.0) continue;
      const double* brow = pb + kk * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  LAD_CHECK(!parts.empty(), "concat_rows: no inputs");
  const int64_t c = parts[0].cols();
  int64_t total = 0;
  for (const Tensor& p : parts) {
    LAD_CHECK(p.rank() == 2 && p.cols() == c, "concat_rows: shapes ",
              shape_str(parts[0].shape()), " vs ", shape_str(p.shape()));
    total += p.rows();
  }
  bool req = false;
  if (g_no_grad_depth == 0)
    for (const Tensor& p : parts) req = req || p.requires_grad();
  std::vector<Tensor> parents(parts.begin(), parts.end());
  Tensor out = make_op(
      {total, c}, parents,
      [parts, c](TensorImpl& self, GradStore& store) {
        int64_t off = 0;
        for (const Tensor& p : parts) {
          const int64_t n = p.size();
          if (double* dp = acc_buf(p, store))
            for (int64_t i = 0; i < n; ++i) dp[i] += self.grad[off + i];
          off += n;
        }
      },
      req);
  int64_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data(), p.data() + p.size(), out.data() + off);
    off += p.size();
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  LAD_CHECK(!rows.empty(), "stack_rows: no inputs");
  const int64_t c = rows[0].size();
  for (const Tensor& r : rows)
    LAD_CHECK(r.rank() == 1 && r.size() == c, "stack_rows: shapes ",
              shape_str(rows[0].shape()), " vs ", shape_str(r.shape()));
  bool req = false;
  if (g_no_grad_depth == 0)
    for (const Tensor& r : rows) req = req || r.requires_grad();
  std::vector<Tensor> parents(rows.begin(), rows.end());
  Tensor out = make_op(
      {static_cast<int64_t>(rows.size()), c}, parents,
      [rows, c](TensorImpl& self, GradStore& store) {
        for (size_t i = 0; i < rows.size(); ++i)
          if (double* dr = acc_buf(rows[i], store))
            for (int64_t j = 0; j < c; ++j) dr[j] += self.grad[i * c + j];
      },
      req);
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].data(), rows[i].data() + c, out.data() + i * c);
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  LAD_CHECK(a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows(),
            "concat_cols: shapes ", shape_str(a.shape()), " vs ",
            shape_str(b.shape()));
  const int64_t r = a.rows(), ca = a.cols(), cb = b.cols();
  const bool req = any_requires({&a, &b});
  Tensor out = make_op(
      {r, ca + cb}, {a, b},
      [a, b, r, ca, cb](TensorImpl& self, GradStore& store) {
        if (double* da = acc_buf(a, store))
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < ca; ++j)
              da[i * ca + j] += self.grad[i * (ca + cb) + j];
        if (double* db = acc_buf(b, store))
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < cb; ++j)
              db[i * cb + j] += self.grad[i * (ca + cb) + ca + j];
      },
      req);
  for (int64_t i = 0; i < r; ++i) {
    std::copy(a.data() + i * ca, a.data() + (i + 1) * ca,
              out.data() + i * (ca + cb));
    std::copy(b.data() + i * cb, b.data() + (i + 1) * cb,
              out.data() + i * (ca + cb) + ca);
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx) {
  LAD_CHECK(x.rank() == 1 || x.rank() == 2, "gather_rows: rank must be 1 or 2, got ",
            shape_str(x.shape()));
  const int64_t r = x.rank() == 2 ? x.rows() : x.size();
  const int64_t c = x.rank() == 2 ? x.cols() : 1;
  for (int64_t i : idx)
    LAD_CHECK(i >= 0 && i < r, "gather_rows: index ", i, " out of range [0,", r, ")");
  const int64_t k = static_cast<int64_t>(idx.size());
  const bool req = any_requires({&x});
  std::vector<int64_t> out_shape =
      x.rank() == 2 ? std::vector<int64_t>{k, c} : std::vector<int64_t>{k};
  Tensor out = make_op(
      out_shape, {x},
      [x, idx, c](TensorImpl& self, GradStore& store) {
        if (double* dx = acc_buf(x, store))
          for (size_t i = 0; i < idx.size(); ++i)
            for (int64_t j = 0; j < c; ++j)
              dx[idx[i] * c + j] += self.grad[static_cast<int64_t>(i) * c + j];
      },
      req);
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy(x.data() + idx[i] * c, x.data() + (idx[i] + 1) * c,
              out.data() + static_cast<int64_t>(i) * c);
  return out;
}

Tensor scatter_rows(const Tensor& x, const std::vector<int64_t>& idx,
                    int64_t out_rows) {
  LAD_CHECK(x.rank() == 1 || x.rank() == 2, "scatter_rows: rank must be 1 or 2, got ",
            shape_str(x.shape()));
  const int64_t k = x.rank() == 2 ? x.rows() : x.size();
  const int64_t c = x.rank() == 2 ? x.cols() : 1;
  LAD_CHECK(static_cast<int64_t>(idx.size()) == k, "scatter_rows: ", idx.size(),
            " indices for ", k, " rows");
  for (int64_t i : idx)
    LAD_CHECK(i >= 0 && i < out_rows, "scatter_rows: index ", i, " out of range [0,",
              out_rows, ")");
  const bool req = any_requires({&x});
  std::vector<int64_t> out_shape = x.rank() == 2
                                       ? std::vector<int64_t>{out_rows, c}
                                       : std::vector<int64_t>{out_rows};
  Tensor out = make_op(
      out_shape, {x},
      [x, idx, c](TensorImpl& self, GradStore& store) {
        if (double* dx = acc_buf(x, store))
          for (size_t i = 0; i < idx.size(); ++i)
            for (int64_t j = 0; j < c; ++j)
              dx[static_cast<int64_t>(i) * c + j] += self.grad[idx[i] * c + j];
      },
      req);
  for (size_t i = 0; i < idx.size(); ++i)
    for (int64_t j = 0; j < c; ++j)
      out.data()[idx[i] * c + j] += x.data()[static_cast<int64_t>(i) * c + j];
  return out;
}

Tensor mean_rows(const Tensor& x) {
  LAD_CHECK(x.rank() == 2, "mean_rows: needs rank 2, got ", shape_str(x.shape()));
  const int64_t r = x.rows(), c = x.cols();
  const bool req = any_requires({&x});
  Tensor out = make_op(
      {c}, {x},
      [x, r, c](TensorImpl& self, GradStore& store) {
        if (double* dx = acc_buf(x, store)) {
          const double inv = 1.0 / static_cast<double>(r);
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) dx[i * c + j] += self.grad[j] * inv;
        }
      },
      req);
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.data()[j] += x.data()[i * c + j];
  for (int64_t j = 0; j < c; ++j) out.data()[j] /= static_cast<double>(r);
  return out;
}

Tensor sum_all(const Tensor& x) {
  const bool req = any_requires({&x});
  Tensor out = make_op(
      {1}, {x},
      [x](TensorImpl& self, GradStore& store) {
        if (double* dx = acc_buf(x, store))
          for (int64_t i = 0; i < x.size(); ++i) dx[i] += self.grad[0];
      },
      req);
  double s = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) s += x.data()[i];
  out.data()[0] = s;
  return out;
}

Tensor reshape(const Tensor& x, std::vector<int64_t> shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  LAD_CHECK(n == x.size(), "reshape: ", shape_str(x.shape()), " to ",
            shape_str(shape), " changes element count");
  const bool req = any_requires({&x});
  Tensor out = make_op(
      std::move(shape), {x},
      [x](TensorImpl& self, GradStore& store) {
        if (double* dx = acc_buf(x, store))
          for (int64_t i = 0; i < x.size(); ++i) dx[i] += self.grad[i];
      },
      req);
  std::copy(x.data(), x.data() + x.size(), out.data());
  return out;
}

namespace {
double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& x) {
  const bool req = any_requires({&x});
  Tensor out = make_op(
      x.shape(), {x},
      [x](TensorImpl& self, GradStore& store) {
        if (double* dx = acc_buf(x, store))
          for (int64_t i = 0; i < self.size(); ++i) {
            const double y = self.val[i];
            dx[i] += self.grad[i] * y * (1.0 - y);
          }
      },
      req);
  for (int64_t i = 0; i < x.size(); ++i) out.data()[i] = sigmoid_scalar(x.data()[i]);
  return out;
}

Tensor gelu(const Tensor& x) {
  const bool req = any_requires({&x});
  Tensor out = make_op(
      x.shape(), {x},
      [x](TensorImpl& self, GradStore& store) {
        if (double* dx = acc_buf(x, store)) {
          constexpr double inv_sqrt2 = 0.7071067811865475244;
          constexpr double inv_sqrt2pi = 0.3989422804014326779;
          for (int64_t i = 0; i < self.size(); ++i) {
            const double v = x.data()[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            dx[i] += self.grad[i] * (cdf + v * pdf);
          }
        }
      },
      req);
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (int64_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = v * 0.5 * (1.0 + std::erf(v * inv_sqrt2));
  }
  return out;
}

Tensor tanh_t(const Tensor& x) {
  const bool req = any_requires({&x});
  Tensor out = make_op(
      x.shape(), {x},
      [x](TensorImpl& self, GradStore& store) {
        if (double* dx = acc_buf(x, store))
          for (int64_t i = 0; i < self.size(); ++i)
            dx[i] += self.grad[i] * (1.0 - self.val[i] * self.val[i]);
      },
      req);
  for (int64_t i = 0; i < x.size(); ++i) out.data()[i] = std::tanh(x.data()[i]);
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  LAD_CHECK(x.rank() == 2, "layer_norm: needs rank 2, got ", shape_str(x.shape()));
  const int64_t r = x.rows(), c = x.cols();
  LAD_CHECK(gain.rank() == 1 && gain.size() == c && bias.rank() == 1 &&
                bias.size() == c,
            "layer_norm: gain/bias must be length ", c);
  const bool req = any_requires({&x, &gain, &bias});
  auto mu = std::make_shared<std::vector<double>>(r);
  auto inv_sd = std::make_shared<std::vector<double>>(r);
  Tensor out = make_op(
      x.shape(), {x, gain, bias},
      [x, gain, bias, mu, inv_sd, r, c](TensorImpl& self, GradStore& store) {
        double* dx = acc_buf(x, store);
        double* dg = acc_buf(gain, store);
        double* db = acc_buf(bias, store);
        for (int64_t i = 0; i < r; ++i) {
          const double* xr = x.data() + i * c;
          const double* gr = self.grad.data() + i * c;
          const double m = (*mu)[i], s = (*inv_sd)[i];
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (int64_t j = 0; j < c; ++j) {
            const double xh = (xr[j] - m) * s;
            const double dxh = gr[j] * gain.data()[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh;
            if (dg) dg[j] += gr[j] * xh;
            if (db) db[j] += gr[j];
          }
          if (dx) {
            const double invc = 1.0 / static_cast<double>(c);
            for (int64_t j = 0; j < c; ++j) {
              const double xh = (xr[j] - m) * s;
              const double dxh = gr[j] * gain.data()[j];
              dx[i * c + j] += s * (dxh - invc * sum_dxh - invc * xh * sum_dxh_xh);
            }
          }
        }
      },
      req);
  for (int64_t i = 0; i < r; ++i) {
    const double* xr = x.data() + i * c;
    double m = 0.0;
    for (int64_t j = 0; j < c; ++j) m += xr[j];
    m /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) var += (xr[j] - m) * (xr[j] - m);
    var /= static_cast<double>(c);
    const double s = 1.0 / std::sqrt(var + eps);
    (*mu)[i] = m;
    (*inv_sd)[i] = s;
    for (int64_t j = 0; j < c; ++j)
      out.data()[i * c + j] = (xr[j] - m) * s * gain.data()[j] + bias.data()[j];
  }
  return out;
}

namespace {

// Masked softmax into `out` for one row; returns false if fully masked.
bool softmax_row(const double* x, const uint8_t* mask, int64_t n, double* out) {
  double mx = -1e308;
  bool any = false;
  for (int64_t j = 0; j < n; ++j) {
    if (mask && !mask[j]) continue;
    any = true;
    mx = std::max(mx, x[j]);
  }
  if (!any) return false;
  double z = 0.0;
  for (int64_t j = 0; j < n; ++j) {
    if (mask && !mask[j]) {
      out[j] = 0.0;
      continue;
    }
    out[j] = std::exp(x[j] - mx);
    z += out[j];
  }
  for (int64_t j = 0; j < n; ++j) out[j] /= z;
  return true;
}

}  // namespace

Tensor softmax(const Tensor& x, const std::vector<uint8_t>* mask) {
  LAD_CHECK(x.rank() == 1 || x.rank() == 2, "softmax: rank must be 1 or 2, got ",
            shape_str(x.shape()));
  const int64_t r = x.rank() == 2 ? x.rows() : 1;
  const int64_t c = x.rank() == 2 ? x.cols() : x.size();
  if (mask)
    LAD_CHECK(static_cast<int64_t>(mask->size()) == x.size(),
              "softmax: mask size ", mask->size(), " vs tensor size ", x.size());
  const bool req = any_requires({&x});
  std::vector<uint8_t> mask_copy = mask ? *mask : std::vector<uint8_t>();
  Tensor out = make_op(
      x.shape(), {x},
      [x, mask_copy, r, c](TensorImpl& self, GradStore& store) {
        if (double* dx = acc_buf(x, store)) {
          for (int64_t i = 0; i < r; ++i) {
            const double* y = self.val.data() + i * c;
            const double* g = self.grad.data() + i * c;
            double dot = 0.0;
            for (int64_t j = 0; j < c; ++j) dot += y[j] * g[j];
            for (int64_t j = 0; j < c; ++j) {
              if (!mask_copy.empty() && !mask_copy[i * c + j]) continue;
              dx[i * c + j] += y[j] * (g[j] - dot);
            }
          }
        }
      },
      req);
  for (int64_t i = 0; i < r; ++i) {
    const uint8_t* mrow = mask ? mask->data() + i * c : nullptr;
    const bool ok = softmax_row(x.data() + i * c, mrow, c, out.data() + i * c);
    LAD_CHECK(ok, "softmax: row ", i, " is fully masked");
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets,
                     const std::vector<uint8_t>* mask) {
  LAD_CHECK(logits.rank() == 1 || logits.rank() == 2,
            "cross_entropy: rank must be 1 or 2, got ", shape_str(logits.shape()));
  const int64_t r = logits.rank() == 2 ? logits.rows() : 1;
  const int64_t c = logits.rank() == 2 ? logits.cols() : logits.size();
  LAD_CHECK(static_cast<int64_t>(targets.size()) == r, "cross_entropy: ",
            targets.size(), " targets for ", r, " rows");
  if (mask)
    LAD_CHECK(static_cast<int64_t>(mask->size()) == logits.size(),
              "cross_entropy: mask size ", mask->size(), " vs logits size ",
              logits.size());
  auto probs = std::make_shared<std::vector<double>>(r * c);
  for (int64_t i = 0; i < r; ++i) {
    const uint8_t* mrow = mask ? mask->data() + i * c : nullptr;
    const bool ok =
        softmax_row(logits.data() + i * c, mrow, c, probs->data() + i * c);
    LAD_CHECK(ok, "cross_entropy: row ", i, " is fully masked");
    const int64_t t = targets[i];
    LAD_CHECK(t >= 0 && t < c, "cross_entropy: target ", t, " out of range [0,", c,
              ") in row ", i);
    LAD_CHECK(!mrow || mrow[t], "cross_entropy: target ", t, " is masked in row ", i);
  }
  const bool req = any_requires({&logits});
  Tensor out = make_op(
      {1}, {logits},
      [logits, targets, probs, r, c](TensorImpl& self, GradStore& store) {
        if (double* dl = acc_buf(logits, store)) {
          const double s = self.grad[0] / static_cast<double>(r);
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) {
              double g = (*probs)[i * c + j];
              if (j == targets[i]) g -= 1.0;
              dl[i * c + j] += s * g;
            }
        }
      },
      req);
  double loss = 0.0;
  for (int64_t i = 0; i < r; ++i) {
    const double p = (*probs)[i * c + targets[i]];
    loss -= std::log(std::max(p, 1e-300));
  }
  out.data()[0] = loss / static_cast<double>(r);
  return out;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int heads, const Tensor& wq, const Tensor& bq,
                            const Tensor& wk, const Tensor& bk, const Tensor& wv,
                            const Tensor& bv, const Tensor& wo, const Tensor& bo,
                            const Tensor& attn_bias,
                            const std::vector<uint8_t>* key_mask) {
  LAD_CHECK(q.rank() == 2 && k.rank() == 2 && v.rank() == 2,
            "attention: q/k/v must be rank 2");
  check_same_shape("attention k/v", k, v);
  const int64_t lq = q.rows(), lk = k.rows();
  const int64_t h = wq.cols();
  LAD_CHECK(heads > 0 && h % heads == 0, "attention: width ", h,
            " not divisible by ", heads, " heads");
  LAD_CHECK(wq.rank() == 2 && wq.rows() == q.cols(), "attention: wq shape ",
            shape_str(wq.shape()), " vs q ", shape_str(q.shape()));
  LAD_CHECK(wk.rank() == 2 && wk.rows() == k.cols() && wk.cols() == h,
            "attention: wk shape ", shape_str(wk.shape()), " vs k ",
            shape_str(k.shape()));
  LAD_CHECK(wv.rank() == 2 && wv.rows() == v.cols() && wv.cols() == h,
            "attention: wv shape ", shape_str(wv.shape()), " vs v ",
            shape_str(v.shape()));
  LAD_CHECK(wo.rank() == 2 && wo.rows() == h && wo.cols() == h,
            "attention: wo must be [", h, ",", h, "], got ", shape_str(wo.shape()));
  LAD_CHECK(bq.size() == h && bk.size() == h && bv.size() == h && bo.size() == h,
            "attention: biases must be length ", h);
  if (attn_bias.defined())
    LAD_CHECK(attn_bias.rank() == 2 && attn_bias.rows() == lq &&
                  attn_bias.cols() == lk,
              "attention: bias shape ", shape_str(attn_bias.shape()),
              " vs scores [", lq, ",", lk, "]");
  if (key_mask)
    LAD_CHECK(static_cast<int64_t>(key_mask->size()) == lk,
              "attention: key mask size ", key_mask->size(), " vs ", lk, " keys");

  const int64_t dh = h / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  struct Saved {
    std::vector<double> Q, K, V, A, O;  // projections, weights, concat heads
  };
  auto sv = std::make_shared<Saved>();
  sv->Q.assign(lq * h, 0.0);
  sv->K.assign(lk * h, 0.0);
  sv->V.assign(lk * h, 0.0);
  sv->A.assign(static_cast<size_t>(heads) * lq * lk, 0.0);
  sv->O.assign(lq * h, 0.0);

  auto project = [](const Tensor& x, const Tensor& w, const Tensor& b,
                    std::vector<double>& out, int64_t rows_, int64_t in_,
                    int64_t out_) {
    for (int64_t i = 0; i < rows_; ++i) {
      double* orow = out.data() + i * out_;
      for (int64_t j = 0; j < out_; ++j) orow[j] = b.data()[j];
      for (int64_t kk = 0; kk < in_; ++kk) {
        const double s = x.data()[i * in_ + kk];
        if (s == 0.0) continue;
        const double* wrow = w.data() + kk * out_;
        for (int64_t j = 0; j < out_; ++j) orow[j] += s * wrow[j];
      }
    }
  };
  project(q, wq, bq, sv->Q, lq, q.cols(), h);
  project(k, wk, bk, sv->K, lk, k.cols(), h);
  project(v, wv, bv, sv->V, lk, v.cols(), h);

  std::vector<uint8_t> kmask = key_mask ? *key_mask : std::vector<uint8_t>();
  std::vector<double> scores(lk);
  for (int a = 0; a < heads; ++a) {
    const int64_t off = a * dh;
    for (int64_t i = 0; i < lq; ++i) {
      const double* qrow = sv->Q.data() + i * h + off;
      for (int64_t j = 0; j < lk; ++j) {
        const double* krow = sv->K.data() + j * h + off;
        double s = 0.0;
        for (int64_t t = 0; t < dh; ++t) s += qrow[t] * krow[t];
        s *= sc;
        if (attn_bias.defined()) s += attn_bias.data()[i * lk + j];
        scores[j] = s;
      }
      double* arow = sv->A.data() + (static_cast<size_t>(a) * lq + i) * lk;
      const bool ok = softmax_row(scores.data(), kmask.empty() ? nullptr : kmask.data(),
                                  lk, arow);
      LAD_CHECK(ok, "attention: all keys masked for query row ", i);
      double* orow = sv->O.data() + i * h + off;
      for (int64_t t = 0; t < dh; ++t) orow[t] = 0.0;
      for (int64_t j = 0; j < lk; ++j) {
        const double w = arow[j];
        if (w == 0.0) continue;
        const double* vrow = sv->V.data() + j * h + off;
        for (int64_t t = 0; t < dh; ++t) orow[t] += w * vrow[t];
      }
    }
  }

  const bool req = any_requires({&q, &k, &v, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo,
                                 &attn_bias});
  std::vector<Tensor> parents = {q, k, v, wq, bq, wk, bk, wv, bv, wo, bo};
  if (attn_bias.defined()) parents.push_back(attn_bias);

  Tensor out = make_op(
      {lq, h}, parents,
      [=](TensorImpl& self, GradStore& store) {
        const double* g = self.grad.data();
        // Output projection.
        std::vector<double> dO(lq * h, 0.0);
        if (double* dwo = acc_buf(wo, store)) {
          for (int64_t kk = 0; kk < h; ++kk)
            for (int64_t i = 0; i < lq; ++i) {
              const double s = sv->O[i * h + kk];
              const double* gr = g + i * h;
              double* dr = dwo + kk * h;
              for (int64_t j = 0; j < h; ++j) dr[j] += s * gr[j];
            }
        }
        if (double* dbo = acc_buf(bo, store)) {
          for (int64_t i = 0; i < lq; ++i)
            for (int64_t j = 0; j < h; ++j) dbo[j] += g[i * h + j];
        }
        for (int64_t i = 0; i < lq; ++i)
          for (int64_t kk = 0; kk < h; ++kk) {
            const double* worow = wo.data() + kk * h;
            const double* gr = g + i * h;
            double s = 0.0;
            for (int64_t j = 0; j < h; ++j) s += worow[j] * gr[j];
            dO[i * h + kk] = s;
          }

        std::vector<double> dQ(lq * h, 0.0), dK(lk * h, 0.0), dV(lk * h, 0.0);
        double* dbias = attn_bias.defined() ? acc_buf(attn_bias, store) : nullptr;
        std::vector<double> dA(lk);
        for (int a = 0; a < heads; ++a) {
          const int64_t off = a * dh;
          for (int64_t i = 0; i < lq; ++i) {
            const double* arow = sv->A.data() + (static_cast<size_t>(a) * lq + i) * lk;
            const double* dorow = dO.data() + i * h + off;
            double dot = 0.0;
            for (int64_t j = 0; j < lk; ++j) {
              const double* vrow = sv->V.data() + j * h + off;
              double s = 0.0;
              for (int64_t t = 0; t < dh; ++t) s += dorow[t] * vrow[t];
              dA[j] = s;
              dot += arow[j] * s;
            }
            const double* qrow = sv->Q.data() + i * h + off;
            for (int64_t j = 0; j < lk; ++j) {
              const double aij = arow[j];
              if (aij == 0.0) continue;
              // dV += A^T dO
              double* dvrow = dV.data() + j * h + off;
              for (int64_t t = 0; t < dh; ++t) dvrow[t] += aij * dorow[t];
              const double ds = aij * (dA[j] - dot);
              if (dbias) dbias[i * lk + j] += ds;
              const double* krow = sv->K.data() + j * h + off;
              double* dqrow = dQ.data() + i * h + off;
              double* dkrow = dK.data() + j * h + off;
              for (int64_t t = 0; t < dh; ++t) {
                dqrow[t] += ds * sc * krow[t];
                dkrow[t] += ds * sc * qrow[t];
              }
            }
          }
        }

        auto unproject = [&](const Tensor& x, const Tensor& w, const Tensor& b,
                             const std::vector<double>& dP, int64_t rows_,
                             int64_t in_) {
          if (double* dw = acc_buf(w, store)) {
            for (int64_t kk = 0; kk < in_; ++kk)
              for (int64_t i = 0; i < rows_; ++i) {
                const double s = x.data()[i * in_ + kk];
                const double* dpr = dP.data() + i * h;
                double* dwr = dw + kk * h;
                for (int64_t j = 0; j < h; ++j) dwr[j] += s * dpr[j];
              }
          }
          if (double* db = acc_buf(b, store)) {
            for (int64_t i = 0; i < rows_; ++i)
              for (int64_t j = 0; j < h; ++j) db[j] += dP[i * h + j];
          }
          if (double* dx = acc_buf(x, store)) {
            for (int64_t i = 0; i < rows_; ++i)
              for (int64_t kk = 0; kk < in_; ++kk) {
                const double* wrow = w.data() + kk * h;
                const double* dpr = dP.data() + i * h;
                double s = 0.0;
                for (int64_t j = 0; j < h; ++j) s += wrow[j] * dpr[j];
                dx[i * in_ + kk] += s;
              }
          }
        };
        unproject(q, wq, bq, dQ, lq, q.cols());
        unproject(k, wk, bk, dK, lk, k.cols());
        unproject(v, wv, bv, dV, lk, v.cols());
      },
      req);

  // out = O * wo + bo
  for (int64_t i = 0; i < lq; ++i) {
    double* orow = out.data() + i * h;
    for (int64_t j = 0; j < h; ++j) orow[j] = bo.data()[j];
    for (int64_t kk = 0; kk < h; ++kk) {
      const double s = sv->O[i * h + kk];
      if (s == 0.0) continue;
      const double* wrow = wo.data() + kk * h;
      for (int64_t j = 0; j < h; ++j) orow[j] += s * wrow[j];
    }
  }
  return out;
}

Tensor gather_scalars(const Tensor& table, const std::vector<int64_t>& index,
                      int64_t rows, int64_t cols) {
  LAD_CHECK(table.rank() == 1, "gather_scalars: table must be rank 1, got ",
            shape_str(table.shape()));
  LAD_CHECK(static_cast<int64_t>(index.size()) == rows * cols,
            "gather_scalars: ", index.size(), " indices for [", rows, ",", cols, "]");
  for (int64_t i : index)
    LAD_CHECK(i >= 0 && i < table.size(), "gather_scalars: index ", i,
              " out of range [0,", table.size(), ")");
  const bool req = any_requires({&table});
  Tensor out = make_op(
      {rows, cols}, {table},
      [table, index](TensorImpl& self, GradStore& store) {
        if (double* dt = acc_buf(table, store))
          for (size_t i = 0; i < index.size(); ++i) dt[index[i]] += self.grad[i];
      },
      req);
  for (size_t i = 0; i < index.size(); ++i) out.data()[i] = table.data()[index[i]];
  return out;
}

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                  double h, int64_t max_elems, uint64_t sample_seed,
                  double denom_floor, std::string* worst_out) {
  Tensor y = f();
  LAD_CHECK(y.size() == 1, "grad_check: f() must return a scalar");
  GradStore store;
  backward(y, store);
  Rng rng(sample_seed ^ 0x9d2c5680cafebabeULL);
  double max_rel = 0.0;
  std::string worst = "none";
  for (size_t t = 0; t < inputs.size(); ++t) {
    const Tensor& in = inputs[t];
    LAD_CHECK(in.is_leaf() && in.requires_grad(),
              "grad_check: input ", t, " must be a leaf requiring grad");
    const std::vector<double>* ad = store.find(in);
    std::vector<int64_t> elems;
    const int64_t n = in.size();
    if (max_elems < 0 || n <= max_elems) {
      elems.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) elems[static_cast<size_t>(i)] = i;
    } else {
      std::vector<int64_t> all(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
      rng.shuffle(all);
      elems.assign(all.begin(), all.begin() + max_elems);
    }
    auto& vals = const_cast<Tensor&>(in).vals();
    for (int64_t e : elems) {
      const double v0 = vals[static_cast<size_t>(e)];
      double yp, ym;
      {
        NoGradGuard ng;
        vals[static_cast<size_t>(e)] = v0 + h;
        yp = f().item();
        vals[static_cast<size_t>(e)] = v0 - h;
        ym = f().item();
        vals[static_cast<size_t>(e)] = v0;
      }
      const double fd = (yp - ym) / (2.0 * h);
      const double adv = ad ? (*ad)[static_cast<size_t>(e)] : 0.0;
      const double denom = std::max({std::fabs(adv), std::fabs(fd), denom_floor});
      const double rel = std::fabs(adv - fd) / denom;
      if (rel > max_rel) {
        max_rel = rel;
        worst = format_msg("input ", t, " elem ", e, ": ad=", adv, " fd=", fd);
      }
    }
  }
  if (worst_out) *worst_out = worst;
  return max_rel;
}

}  // namespace lad
