#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lad/error.hpp"

namespace lad {

class GradStore;
struct TensorImpl;

// Dynamic-graph tensor of doubles with reverse-mode autodiff. Handles are
// cheap shared references; ops build a tape that backward() walks once.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(std::vector<int64_t> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);  // rank 1
  static Tensor matrix(int64_t rows, int64_t cols, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int64_t>& shape() const;
  int64_t rank() const;
  int64_t size() const;
  int64_t rows() const;  // rank-2 only
  int64_t cols() const;  // rank-2 only

  std::vector<double>& vals();
  const std::vector<double>& vals() const;
  double* data();
  const double* data() const;
  double item() const;  // single-element tensors
  double at(int64_t i) const;
  double at(int64_t i, int64_t j) const;

  bool requires_grad() const;
  bool is_leaf() const;
  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend struct TensorImpl;
  friend Tensor wrap_impl(std::shared_ptr<TensorImpl>);
};

struct TensorImpl {
  std::vector<int64_t> shape;
  std::vector<double> val;
  std::vector<double> grad;  // interior nodes only; leaf grads go to GradStore
  std::vector<Tensor> parents;
  std::function<void(TensorImpl&, GradStore&)> backward_fn;
  bool requires_grad = false;

  int64_t size() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
  bool is_leaf() const { return parents.empty(); }
};

// Accumulates gradients of leaf tensors (parameters and checked inputs).
// Keeping leaf gradients outside TensorImpl lets independent graphs over a
// shared read-only parameter set run in parallel without data races.
class GradStore {
 public:
  void add(TensorImpl* t, const double* g, int64_t n);
  // Zero-initialized accumulation buffer for a leaf; stable until clear().
  double* raw_buffer(TensorImpl* t, int64_t n);
  const std::vector<double>* find(const Tensor& t) const;
  std::vector<double>& at(const Tensor& t);
  bool has(const Tensor& t) const { return grads_.count(t.impl()) > 0; }
  void accumulate(const GradStore& other);
  void clear() { grads_.clear(); }
  size_t entry_count() const { return grads_.size(); }

 private:
  std::map<TensorImpl*, std::vector<double>> grads_;
};

// While alive on a thread, ops record no tape (forward values only).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Runs reverse-mode accumulation from a scalar loss into `store`.
void backward(const Tensor& loss, GradStore& store);

// Elementwise and structural ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& m, const Tensor& v);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor stack_rows(const std::vector<Tensor>& rows);  // rank-1 inputs
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx);
Tensor scatter_rows(const Tensor& x, const std::vector<int64_t>& idx, int64_t out_rows);
Tensor mean_rows(const Tensor& x);
Tensor sum_all(const Tensor& x);
Tensor reshape(const Tensor& x, std::vector<int64_t> shape);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor tanh_t(const Tensor& x);

// Normalization over the last axis of a rank-2 tensor (per row).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Softmax over the last axis. Masked entries (mask value 0) get probability
// exactly zero and are excluded from normalization. A fully masked row is an
// error. Uses max-subtraction for stability.
Tensor softmax(const Tensor& x, const std::vector<uint8_t>* mask = nullptr);

// Mean negative log softmax probability of each row's target class.
// Rank-1 logits are treated as a single row (targets must have one entry).
Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets,
                     const std::vector<uint8_t>* mask = nullptr);

// Fused multi-head attention: projects q/k/v, applies optional additive
// logit bias (shared across heads) and optional key mask, and projects the
// concatenated heads. Query and key/value inputs may have different widths.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int heads, const Tensor& wq, const Tensor& bq,
                            const Tensor& wk, const Tensor& bk, const Tensor& wv,
                            const Tensor& bv, const Tensor& wo, const Tensor& bo,
                            const Tensor& attn_bias = Tensor(),
                            const std::vector<uint8_t>* key_mask = nullptr);

// out[i, j] = table[index[i * cols + j]]; gradient scatter-adds into table.
Tensor gather_scalars(const Tensor& table, const std::vector<int64_t>& index,
                      int64_t rows, int64_t cols);

// Compares reverse-mode gradients of f() against central finite differences
// for every sampled element of `inputs`. Returns the max relative error,
// where rel = |ad - fd| / max(|ad|, |fd|, denom_floor). `max_elems` < 0
// checks every element; otherwise that many per input, sampled by seed.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                  double h = 1e-5, int64_t max_elems = -1, uint64_t sample_seed = 0,
                  double denom_floor = 1e-6, std::string* worst_out = nullptr);

}  // namespace lad
