#include "lad/nn.hpp"

#include <cmath>

namespace lad {

Tensor ParamSet::add(const std::string& name, Tensor t) {
  LAD_CHECK(!index_.count(name), "duplicate parameter name: ", name);
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  LAD_CHECK(it != index_.end(), "unknown parameter: ", name);
  return items_[it->second].second;
}

int64_t ParamSet::total_elements() const {
  int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

Tensor xavier_uniform(ParamSet& ps, const std::string& name, int64_t in, int64_t out,
                      Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> v(static_cast<size_t>(in * out));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return ps.add(name, Tensor::leaf({in, out}, std::move(v), true));
}

Tensor normal_param(ParamSet& ps, const std::string& name,
                    std::vector<int64_t> shape, Rng& rng, double stddev) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return ps.add(name, Tensor::leaf(std::move(shape), std::move(v), true));
}

Tensor zeros_param(ParamSet& ps, const std::string& name,
                   std::vector<int64_t> shape) {
  return ps.add(name, Tensor::zeros(std::move(shape), true));
}

Tensor ones_param(ParamSet& ps, const std::string& name, int64_t n) {
  std::vector<double> v(static_cast<size_t>(n), 1.0);
  return ps.add(name, Tensor::leaf({n}, std::move(v), true));
}

Linear Linear::create(ParamSet& ps, const std::string& prefix, int64_t in,
                      int64_t out, Rng& rng) {
  Linear l;
  l.w = xavier_uniform(ps, prefix + ".w", in, out, rng);
  l.b = zeros_param(ps, prefix + ".b", {out});
  return l;
}

Tensor Linear::apply(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }

Tensor Linear::apply_scores(const Tensor& x) const {
  LAD_CHECK(w.cols() == 1, "apply_scores: output width must be 1, got ", w.cols());
  return reshape(apply(x), {x.rows()});
}

LayerNormP LayerNormP::create(ParamSet& ps, const std::string& prefix, int64_t dim) {
  LayerNormP ln;
  ln.g = ones_param(ps, prefix + ".g", dim);
  ln.b = zeros_param(ps, prefix + ".b", {dim});
  return ln;
}

Tensor LayerNormP::apply(const Tensor& x) const { return layer_norm(x, g, b); }

Attention Attention::create(ParamSet& ps, const std::string& prefix, int64_t dim_q,
                            int64_t dim_kv, int64_t dim_model, int heads, Rng& rng) {
  Attention a;
  a.heads = heads;
  a.wq = xavier_uniform(ps, prefix + ".wq", dim_q, dim_model, rng);
  a.bq = zeros_param(ps, prefix + ".bq", {dim_model});
  a.wk = xavier_uniform(ps, prefix + ".wk", dim_kv, dim_model, rng);
  a.bk = zeros_param(ps, prefix + ".bk", {dim_model});
  a.wv = xavier_uniform(ps, prefix + ".wv", dim_kv, dim_model, rng);
  a.bv = zeros_param(ps, prefix + ".bv", {dim_model});
  a.wo = xavier_uniform(ps, prefix + ".wo", dim_model, dim_model, rng);
  a.bo = zeros_param(ps, prefix + ".bo", {dim_model});
  return a;
}

Tensor Attention::apply(const Tensor& q, const Tensor& k, const Tensor& v,
                        const Tensor& attn_bias,
                        const std::vector<uint8_t>* key_mask) const {
  return multi_head_attention(q, k, v, heads, wq, bq, wk, bk, wv, bv, wo, bo,
                              attn_bias, key_mask);
}

FeedForward FeedForward::create(ParamSet& ps, const std::string& prefix, int64_t dim,
                                int64_t hidden, Rng& rng) {
  FeedForward f;
  f.in = Linear::create(ps, prefix + ".in", dim, hidden, rng);
  f.out = Linear::create(ps, prefix + ".out", hidden, dim, rng);
  return f;
}

Tensor FeedForward::apply(const Tensor& x) const {
  return out.apply(gelu(in.apply(x)));
}

EncoderLayer EncoderLayer::create(ParamSet& ps, const std::string& prefix,
                                  int64_t dim, int64_t hidden, int heads, Rng& rng) {
  EncoderLayer l;
  l.attn = Attention::create(ps, prefix + ".attn", dim, dim, dim, heads, rng);
  l.ln1 = LayerNormP::create(ps, prefix + ".ln1", dim);
  l.ffn = FeedForward::create(ps, prefix + ".ffn", dim, hidden, rng);
  l.ln2 = LayerNormP::create(ps, prefix + ".ln2", dim);
  return l;
}

Tensor EncoderLayer::apply(const Tensor& x, const Tensor& attn_bias) const {
  Tensor h = ln1.apply(add(x, attn.apply(x, x, x, attn_bias)));
  return ln2.apply(add(h, ffn.apply(h)));
}

DecoderLayer DecoderLayer::create(ParamSet& ps, const std::string& prefix,
                                  int64_t dim, int64_t dim_mem, int64_t hidden,
                                  int heads, Rng& rng) {
  DecoderLayer l;
  l.self = Attention::create(ps, prefix + ".self", dim, dim, dim, heads, rng);
  l.ln1 = LayerNormP::create(ps, prefix + ".ln1", dim);
  l.cross = Attention::create(ps, prefix + ".cross", dim, dim_mem, dim, heads, rng);
  l.ln2 = LayerNormP::create(ps, prefix + ".ln2", dim);
  l.ffn = FeedForward::create(ps, prefix + ".ffn", dim, hidden, rng);
  l.ln3 = LayerNormP::create(ps, prefix + ".ln3", dim);
  return l;
}

Tensor DecoderLayer::apply(const Tensor& x, const Tensor& mem) const {
  Tensor h = ln1.apply(add(x, self.apply(x, x, x)));
  h = ln2.apply(add(h, cross.apply(h, mem, mem)));
  return ln3.apply(add(h, ffn.apply(h)));
}

}  // namespace lad
