#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lad/codebook.hpp"
#include "lad/config.hpp"
#include "lad/env.hpp"
#include "lad/nn.hpp"
#include "lad/tensor.hpp"
#include "lad/topo.hpp"

namespace lad {

struct AgentConfig {
  int hidden = 64;
  int heads = 4;
  int lang_layers = 2;
  int cross_layers = 2;
  int vis_layers = 2;
  int gasa_layers = 2;
  int ffn_mult = 2;
  int max_steps = 15;
  int max_tokens = 16;
  int im_count = 5;
  double im_sigma = 0.1;
  int vis_dim = 32;
  int num_rooms = 8;
  std::string layout_head = "codebook";  // codebook | classifier
  bool use_layout = true;
  bool use_dreamer = true;
  bool use_fuse = true;  // learned local/global gate; off = plain sum

  static AgentConfig from_config(const Config& cfg);
  void validate() const;
};

// Two-layer scoring MLP with a GELU between, independent per head.
struct MlpHead {
  Linear in, out;
  static MlpHead create(ParamSet& ps, const std::string& prefix, int64_t dim_in,
                        int64_t hidden, int64_t dim_out, Rng& rng);
  Tensor apply(const Tensor& x) const;
  Tensor apply_scores(const Tensor& x) const;  // dim_out must be 1
};

// Everything one decision step produces. Tensors stay on the tape so losses
// can be formed against them; `order` maps embedding rows 1.. to node ids.
struct StepDecision {
  Tensor dsap_logits;              // rank-1 over [stop, nodes...]
  std::vector<uint8_t> dsap_mask;  // support: stop plus frontier nodes
  Tensor dsap_prob;
  Tensor lambda;  // rank-1 over [stop, nodes...]; empty when dreamer off
  double sigma = 0.5;
  Tensor layout;    // map-size x room-count scores; empty when layout off
  Tensor pr_im;     // rank-1 over map nodes; empty when no frontier/dreamer
  Tensor im_logits; // pre-softmax dreamer scores, same emptiness as pr_im
  std::vector<uint8_t> im_mask;  // frontier support over map nodes
  Tensor og_scores;              // rank-1 over current node's objects
  std::vector<int> order;        // node ids in embedding order
};

class LadModel {
 public:
  LadModel(const AgentConfig& cfg, uint64_t seed);

  const AgentConfig& config() const { return cfg_; }
  ParamSet& params() { return ps_; }
  const ParamSet& params() const { return ps_; }

  // Instruction tokens -> contextual language features (tokens x hidden).
  Tensor encode_instruction(const std::vector<int>& tokens) const;

  // Joint self-attention over sector views and objects at one node.
  // Returns fused views (sectors x vis_dim) and fused objects (possibly an
  // empty tensor when the node has no objects).
  std::pair<Tensor, Tensor> fuse_local_visuals(const Observation& obs) const;

  // Per-node sum of projected visual rep, relative-position embedding, and
  // last-visit step embedding, with a learned stop row at index 0.
  // `mrc_zero_index` >= 0 zeroes that node's visual rep before projection.
  Tensor embed_nodes(const TopoMap& map, int step, int mrc_zero_index = -1) const;

  // Self-attention over node embeddings with hop-distance-bucket logit bias.
  Tensor gasa(const Tensor& h, const TopoMap& map) const;

  Tensor cross_global(const Tensor& h, const Tensor& lang) const;

  // Restricts cross-attention to [stop, current, neighbors]; the selected
  // embedding rows are reported through `local_rows_out`.
  Tensor cross_local(const Tensor& h, const Tensor& lang, const TopoMap& map,
                     std::vector<int64_t>* local_rows_out = nullptr) const;

  // Room scores per map node: summed dot products against codebook entries
  // after projecting to codebook width (or a plain classifier head).
  Tensor layout_predict(const Tensor& h_glo, const Codebook& cb) const;

  // Cross-attends node states onto imagination features; returns the updated
  // states and the next-step distribution over unvisited frontier nodes
  // (empty when the map has no frontier).
  std::pair<Tensor, Tensor> dreamer(const Tensor& h_glo, const Tensor& im,
                                    const TopoMap& map,
                                    std::vector<uint8_t>* im_mask_out = nullptr,
                                    Tensor* im_logits_out = nullptr) const;

  // Gated fusion of local/global scores plus the dreamer branch, one masked
  // softmax over stop and frontier nodes.
  StepDecision fuse_decision(const Tensor& h_loc, const Tensor& h_glo,
                             const Tensor& h_dream, const TopoMap& map,
                             const std::vector<int64_t>& local_rows) const;

  // Scores each object of the current node against the pooled instruction.
  Tensor ground_objects(const Tensor& fused_objects, const Tensor& lang) const;

  // Masked-token prediction logits (tokens x vocab) for the given sequence.
  Tensor mlm_logits(const std::vector<int>& tokens) const;

  // Room-type logits for one map node whose visual rep is zeroed out.
  Tensor mrc_predict(const TopoMap& map, int step, const Tensor& lang,
                     int map_index) const;

  // Full decision pipeline for one step. `fused_objects` are the current
  // node's fused object rows (for grounding); pass an empty tensor when the
  // node has no objects. `im` may be empty only when the dreamer is off.
  StepDecision forward_step(const TopoMap& map, int step, const Tensor& lang,
                            const Codebook& cb, const Tensor& im,
                            const Tensor& fused_objects,
                            int mrc_zero_index = -1) const;

  // Constant tensor views of external features.
  static Tensor imagination_tensor(const ImaginationSet& im);

  // Layer stacks, public for construction-oracle tests.
  Tensor lang_token, lang_pos, lang_type;
  LayerNormP lang_ln;
  std::vector<EncoderLayer> lang_layers;
  Tensor vis_view_type, vis_obj_type;
  std::vector<EncoderLayer> vis_layers;
  Linear vis_proj, loc_proj;
  Tensor step_table, stop_token;
  LayerNormP node_ln;
  std::vector<EncoderLayer> gasa_layers;
  std::vector<Tensor> gasa_bias;
  std::vector<DecoderLayer> xglo_layers, xloc_layers;
  Linear layout_proj, layout_cls;
  Attention dream_attn;
  LayerNormP dream_ln;
  MlpHead head_glo, head_loc, head_fuse, head_lambda, head_fgd_glo,
      head_fgd_dream, head_im, head_og;
  Linear head_mlm, head_mrc;

 private:
  AgentConfig cfg_;
  ParamSet ps_;
};

}  // namespace lad
