#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lad/rng.hpp"
#include "lad/tensor.hpp"

namespace lad {

// Named, ordered collection of trainable leaf tensors.
class ParamSet {
 public:
  Tensor add(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  size_t size() const { return items_.size(); }
  int64_t total_elements() const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

Tensor xavier_uniform(ParamSet& ps, const std::string& name, int64_t in, int64_t out,
                      Rng& rng);
Tensor normal_param(ParamSet& ps, const std::string& name,
                    std::vector<int64_t> shape, Rng& rng, double stddev = 0.02);
Tensor zeros_param(ParamSet& ps, const std::string& name, std::vector<int64_t> shape);
Tensor ones_param(ParamSet& ps, const std::string& name, int64_t n);

struct Linear {
  Tensor w, b;
  static Linear create(ParamSet& ps, const std::string& prefix, int64_t in,
                       int64_t out, Rng& rng);
  Tensor apply(const Tensor& x) const;         // rank-2 input
  Tensor apply_scores(const Tensor& x) const;  // rank-2 -> rank-1 (out must be 1)
};

struct LayerNormP {
  Tensor g, b;
  static LayerNormP create(ParamSet& ps, const std::string& prefix, int64_t dim);
  Tensor apply(const Tensor& x) const;
};

struct Attention {
  int heads = 1;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  static Attention create(ParamSet& ps, const std::string& prefix, int64_t dim_q,
                          int64_t dim_kv, int64_t dim_model, int heads, Rng& rng);
  Tensor apply(const Tensor& q, const Tensor& k, const Tensor& v,
               const Tensor& attn_bias = Tensor(),
               const std::vector<uint8_t>* key_mask = nullptr) const;
};

struct FeedForward {
  Linear in, out;
  static FeedForward create(ParamSet& ps, const std::string& prefix, int64_t dim,
                            int64_t hidden, Rng& rng);
  Tensor apply(const Tensor& x) const;
};

// Post-norm transformer encoder layer; optional attention logit bias.
struct EncoderLayer {
  Attention attn;
  LayerNormP ln1, ln2;
  FeedForward ffn;
  static EncoderLayer create(ParamSet& ps, const std::string& prefix, int64_t dim,
                             int64_t hidden, int heads, Rng& rng);
  Tensor apply(const Tensor& x, const Tensor& attn_bias = Tensor()) const;
};

// Post-norm transformer decoder layer: self-attention, cross-attention, FFN.
struct DecoderLayer {
  Attention self, cross;
  LayerNormP ln1, ln2, ln3;
  FeedForward ffn;
  static DecoderLayer create(ParamSet& ps, const std::string& prefix, int64_t dim,
                             int64_t dim_mem, int64_t hidden, int heads, Rng& rng);
  Tensor apply(const Tensor& x, const Tensor& mem) const;
};

}  // namespace lad
