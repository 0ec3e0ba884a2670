#include "lad/agent.hpp"

#include <algorithm>
#include <cmath>

#include "lad/error.hpp"
#include "lad/vocab.hpp"

namespace lad {

namespace {

std::vector<int64_t> range_from(int64_t lo, int64_t count) {
  std::vector<int64_t> idx(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) idx[static_cast<size_t>(i)] = lo + i;
  return idx;
}

Tensor rows_leaf(const std::vector<std::vector<double>>& rows, int64_t cols) {
  std::vector<double> flat;
  flat.reserve(rows.size() * static_cast<size_t>(cols));
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::matrix(static_cast<int64_t>(rows.size()), cols, std::move(flat));
}

Tensor broadcast_row(const Tensor& row, int64_t n) {
  return matmul(Tensor::full({n, 1}, 1.0), reshape(row, {1, row.size()}));
}

}  // namespace

AgentConfig AgentConfig::from_config(const Config& cfg) {
  AgentConfig a;
  a.hidden = static_cast<int>(cfg.get_int("agent.hidden", a.hidden));
  a.heads = static_cast<int>(cfg.get_int("agent.heads", a.heads));
  a.lang_layers = static_cast<int>(cfg.get_int("agent.lang_layers", a.lang_layers));
  a.cross_layers = static_cast<int>(cfg.get_int("agent.cross_layers", a.cross_layers));
  a.vis_layers = static_cast<int>(cfg.get_int("agent.vis_layers", a.vis_layers));
  a.gasa_layers = static_cast<int>(cfg.get_int("agent.gasa_layers", a.gasa_layers));
  a.ffn_mult = static_cast<int>(cfg.get_int("agent.ffn_mult", a.ffn_mult));
  a.max_steps = static_cast<int>(cfg.get_int("agent.max_steps", a.max_steps));
  a.max_tokens = static_cast<int>(cfg.get_int("agent.max_tokens", a.max_tokens));
  a.im_count = static_cast<int>(cfg.get_int("agent.im_count", a.im_count));
  a.im_sigma = cfg.get_double("agent.im_sigma", a.im_sigma);
  a.vis_dim = static_cast<int>(cfg.get_int("agent.vis_dim", a.vis_dim));
  a.num_rooms = static_cast<int>(cfg.get_int("agent.num_rooms", a.num_rooms));
  a.layout_head = cfg.get_str("agent.layout_head", a.layout_head);
  a.use_layout = cfg.get_bool("agent.use_layout", a.use_layout);
  a.use_dreamer = cfg.get_bool("agent.use_dreamer", a.use_dreamer);
  a.use_fuse = cfg.get_bool("agent.use_fuse", a.use_fuse);
  a.validate();
  return a;
}

void AgentConfig::validate() const {
  LAD_CHECK(hidden > 0 && heads > 0 && hidden % heads == 0,
            "agent config: hidden ", hidden, " not divisible by heads ", heads);
  LAD_CHECK(vis_dim > 0 && vis_dim % heads == 0, "agent config: vis_dim ",
            vis_dim, " not divisible by heads ", heads);
  LAD_CHECK(lang_layers > 0 && cross_layers > 0 && vis_layers > 0 &&
                gasa_layers > 0 && ffn_mult > 0,
            "agent config: layer counts must be positive");
  LAD_CHECK(max_steps > 0 && max_tokens >= 6 && im_count > 0,
            "agent config: max_steps/max_tokens/im_count out of range");
  LAD_CHECK(im_sigma >= 0.0, "agent config: im_sigma must be >= 0");
  LAD_CHECK(num_rooms > 0, "agent config: num_rooms must be positive");
  LAD_CHECK(layout_head == "codebook" || layout_head == "classifier",
            "agent config: unknown layout_head '", layout_head, "'");
}

MlpHead MlpHead::create(ParamSet& ps, const std::string& prefix, int64_t dim_in,
                        int64_t hidden, int64_t dim_out, Rng& rng) {
  MlpHead h;
  h.in = Linear::create(ps, prefix + ".in", dim_in, hidden, rng);
  h.out = Linear::create(ps, prefix + ".out", hidden, dim_out, rng);
  return h;
}

Tensor MlpHead::apply(const Tensor& x) const { return out.apply(gelu(in.apply(x))); }

Tensor MlpHead::apply_scores(const Tensor& x) const {
  return out.apply_scores(gelu(in.apply(x)));
}

LadModel::LadModel(const AgentConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int64_t h = cfg_.hidden;
  const int64_t dv = cfg_.vis_dim;
  const int64_t ffn = h * cfg_.ffn_mult;
  const Vocab& vocab = Vocab::get();

  lang_token = normal_param(ps_, "lang.token", {vocab.size(), h}, rng);
  lang_pos = normal_param(ps_, "lang.pos", {cfg_.max_tokens, h}, rng);
  lang_type = normal_param(ps_, "lang.type", {h}, rng);
  lang_ln = LayerNormP::create(ps_, "lang.ln", h);
  for (int i = 0; i < cfg_.lang_layers; ++i)
    lang_layers.push_back(EncoderLayer::create(
        ps_, "lang.layer" + std::to_string(i), h, ffn, cfg_.heads, rng));

  vis_view_type = normal_param(ps_, "vis.view_type", {dv}, rng);
  vis_obj_type = normal_param(ps_, "vis.obj_type", {dv}, rng);
  for (int i = 0; i < cfg_.vis_layers; ++i)
    vis_layers.push_back(EncoderLayer::create(ps_, "vis.layer" + std::to_string(i),
                                              dv, dv * cfg_.ffn_mult, cfg_.heads,
                                              rng));

  vis_proj = Linear::create(ps_, "map.visual_proj", dv, h, rng);
  loc_proj = Linear::create(ps_, "map.loc_proj", 3, h, rng);
  step_table = normal_param(ps_, "map.step_emb", {cfg_.max_steps + 1, h}, rng);
  stop_token = normal_param(ps_, "map.stop", {h}, rng);
  node_ln = LayerNormP::create(ps_, "map.ln", h);

  for (int i = 0; i < cfg_.gasa_layers; ++i) {
    const std::string p = "gasa.layer" + std::to_string(i);
    gasa_layers.push_back(EncoderLayer::create(ps_, p, h, ffn, cfg_.heads, rng));
    gasa_bias.push_back(normal_param(ps_, p + ".hop_bias", {4}, rng));
  }
  for (int i = 0; i < cfg_.cross_layers; ++i) {
    xglo_layers.push_back(DecoderLayer::create(
        ps_, "xglo.layer" + std::to_string(i), h, h, ffn, cfg_.heads, rng));
    xloc_layers.push_back(DecoderLayer::create(
        ps_, "xloc.layer" + std::to_string(i), h, h, ffn, cfg_.heads, rng));
  }

  if (cfg_.use_layout) {
    if (cfg_.layout_head == "codebook")
      layout_proj = Linear::create(ps_, "layout.proj", h, dv, rng);
    else
      layout_cls = Linear::create(ps_, "layout.cls", h, cfg_.num_rooms, rng);
  }

  head_glo = MlpHead::create(ps_, "head.glo", h, h, 1, rng);
  head_loc = MlpHead::create(ps_, "head.loc", h, h, 1, rng);
  if (cfg_.use_fuse) head_fuse = MlpHead::create(ps_, "head.fuse", 2 * h, h, 1, rng);
  if (cfg_.use_dreamer) {
    dream_attn = Attention::create(ps_, "dream.attn", h, dv, h, cfg_.heads, rng);
    dream_ln = LayerNormP::create(ps_, "dream.ln", h);
    head_lambda = MlpHead::create(ps_, "head.lambda", 2 * h, h, 1, rng);
    head_fgd_glo = MlpHead::create(ps_, "head.fgd_glo", h, h, 1, rng);
    head_fgd_dream = MlpHead::create(ps_, "head.fgd_dream", h, h, 1, rng);
    head_im = MlpHead::create(ps_, "head.im", h, h, 1, rng);
  }
  head_og = MlpHead::create(ps_, "head.og", dv + h, h, 1, rng);
  head_mlm = Linear::create(ps_, "head.mlm", h, vocab.size(), rng);
  head_mrc = Linear::create(ps_, "head.mrc", h, cfg_.num_rooms, rng);
}

Tensor LadModel::encode_instruction(const std::vector<int>& tokens) const {
  LAD_CHECK(!tokens.empty(), "encode: empty instruction");
  LAD_CHECK(static_cast<int>(tokens.size()) <= cfg_.max_tokens,
            "encode: instruction length ", tokens.size(), " exceeds ",
            cfg_.max_tokens);
  std::vector<int64_t> ids;
  for (int t : tokens) {
    LAD_CHECK(t >= 0 && t < Vocab::get().size(), "encode: token id ", t,
              " outside vocabulary");
    ids.push_back(t);
  }
  const int64_t len = static_cast<int64_t>(ids.size());
  Tensor x = add(gather_rows(lang_token, ids),
                 gather_rows(lang_pos, range_from(0, len)));
  x = lang_ln.apply(add_rowvec(x, lang_type));
  for (const EncoderLayer& layer : lang_layers) x = layer.apply(x);
  return x;
}

std::pair<Tensor, Tensor> LadModel::fuse_local_visuals(const Observation& obs) const {
  LAD_CHECK(!obs.views.empty(), "visual fusion: no panoramic views");
  const int64_t dv = cfg_.vis_dim;
  LAD_CHECK(static_cast<int64_t>(obs.views[0].size()) == dv,
            "visual fusion: view width ", obs.views[0].size(), " vs config ",
            dv);
  const int64_t nv = static_cast<int64_t>(obs.views.size());
  const int64_t no = static_cast<int64_t>(obs.objects.size());
  Tensor x = add_rowvec(rows_leaf(obs.views, dv), vis_view_type);
  if (no > 0) {
    std::vector<std::vector<double>> feats;
    for (const ObjectInstance& o : obs.objects) feats.push_back(o.feature);
    x = concat_rows({x, add_rowvec(rows_leaf(feats, dv), vis_obj_type)});
  }
  for (const EncoderLayer& layer : vis_layers) x = layer.apply(x);
  Tensor views = gather_rows(x, range_from(0, nv));
  Tensor objects = no > 0 ? gather_rows(x, range_from(nv, no)) : Tensor();
  return {views, objects};
}

Tensor LadModel::embed_nodes(const TopoMap& map, int step, int mrc_zero_index) const {
  LAD_CHECK(!map.empty(), "embed: empty map");
  (void)step;
  const int n = map.size();
  const int64_t h = cfg_.hidden;
  const MapNode& cur = map.at(map.current);

  std::vector<Tensor> reps;
  std::vector<double> loc;
  std::vector<int64_t> steps;
  for (int i = 0; i < n; ++i) {
    const MapNode& m = map.nodes[static_cast<size_t>(i)];
    reps.push_back(i == mrc_zero_index
                       ? Tensor::zeros({cfg_.vis_dim})
                       : m.rep);
    const double dx = m.x - cur.x, dy = m.y - cur.y;
    const double dist = std::sqrt(dx * dx + dy * dy);
    const double theta = (m.id == cur.id) ? 0.0 : std::atan2(dy, dx);
    loc.push_back(dist);
    loc.push_back(std::sin(theta));
    loc.push_back(std::cos(theta));
    steps.push_back(std::min<int64_t>(m.last_step, cfg_.max_steps));
  }
  Tensor sum = add(vis_proj.apply(stack_rows(reps)),
                   loc_proj.apply(Tensor::matrix(n, 3, std::move(loc))));
  sum = add(sum, gather_rows(step_table, steps));
  Tensor rows = concat_rows({reshape(stop_token, {1, h}), sum});
  return node_ln.apply(rows);
}

Tensor LadModel::gasa(const Tensor& h, const TopoMap& map) const {
  LAD_CHECK(h.rank() == 2 && h.rows() == map.size() + 1,
            "gasa: rows ", h.rows(), " vs map size ", map.size());
  const std::vector<int64_t> buckets = hop_buckets(map);
  Tensor x = h;
  for (size_t i = 0; i < gasa_layers.size(); ++i) {
    Tensor bias = gather_scalars(gasa_bias[i], buckets, h.rows(), h.rows());
    x = gasa_layers[i].apply(x, bias);
  }
  return x;
}

Tensor LadModel::cross_global(const Tensor& h, const Tensor& lang) const {
  Tensor x = h;
  for (const DecoderLayer& layer : xglo_layers) x = layer.apply(x, lang);
  return x;
}

Tensor LadModel::cross_local(const Tensor& h, const Tensor& lang, const TopoMap& map,
                             std::vector<int64_t>* local_rows_out) const {
  std::vector<int64_t> rows = {0, 1 + map.index_of(map.current)};
  auto it = map.adj.find(map.current);
  if (it != map.adj.end())
    for (const auto& [to, w] : it->second) rows.push_back(1 + map.index_of(to));
  Tensor x = gather_rows(h, rows);
  for (const DecoderLayer& layer : xloc_layers) x = layer.apply(x, lang);
  if (local_rows_out) *local_rows_out = rows;
  return x;
}

Tensor LadModel::layout_predict(const Tensor& h_glo, const Codebook& cb) const {
  LAD_CHECK(cfg_.use_layout, "layout: head disabled by config");
  const int64_t n = h_glo.rows() - 1;
  Tensor nodes = gather_rows(h_glo, range_from(1, n));
  if (cfg_.layout_head == "classifier") return layout_cls.apply(nodes);

  LAD_CHECK(cb.dim == cfg_.vis_dim, "layout: codebook dim ", cb.dim,
            " vs config vis_dim ", cfg_.vis_dim);
  LAD_CHECK(cb.num_rooms == cfg_.num_rooms, "layout: codebook rooms ",
            cb.num_rooms, " vs config ", cfg_.num_rooms);
  const int64_t ks = static_cast<int64_t>(cb.num_rooms) * cb.entries_per_room;
  std::vector<double> et(static_cast<size_t>(cb.dim) * ks);
  for (int64_t row = 0; row < ks; ++row)
    for (int64_t e = 0; e < cb.dim; ++e)
      et[static_cast<size_t>(e) * ks + row] =
          cb.data[static_cast<size_t>(row) * cb.dim + e];
  std::vector<double> group(static_cast<size_t>(ks) * cb.num_rooms, 0.0);
  for (int64_t row = 0; row < ks; ++row)
    group[static_cast<size_t>(row) * cb.num_rooms + row / cb.entries_per_room] = 1.0;
  Tensor scores = matmul(layout_proj.apply(nodes),
                         Tensor::matrix(cb.dim, ks, std::move(et)));
  return matmul(scores, Tensor::matrix(ks, cb.num_rooms, std::move(group)));
}

std::pair<Tensor, Tensor> LadModel::dreamer(const Tensor& h_glo, const Tensor& im,
                                            const TopoMap& map,
                                            std::vector<uint8_t>* im_mask_out,
                                            Tensor* im_logits_out) const {
  LAD_CHECK(cfg_.use_dreamer, "dreamer: disabled by config");
  LAD_CHECK(im.rank() == 2 && im.rows() > 0, "dreamer: empty imagination set");
  LAD_CHECK(im.cols() == cfg_.vis_dim, "dreamer: imagination width ", im.cols(),
            " vs config vis_dim ", cfg_.vis_dim);
  Tensor hat = dream_ln.apply(add(h_glo, dream_attn.apply(h_glo, im, im)));

  const int n = map.size();
  std::vector<uint8_t> mask(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    mask[static_cast<size_t>(i)] =
        map.nodes[static_cast<size_t>(i)].status == NodeStatus::kFrontier ? 1 : 0;
  if (im_mask_out) *im_mask_out = mask;
  if (map.frontier_count() == 0) return {hat, Tensor()};
  Tensor scores = head_im.apply_scores(gather_rows(hat, range_from(1, n)));
  if (im_logits_out) *im_logits_out = scores;
  return {hat, softmax(scores, &mask)};
}

StepDecision LadModel::fuse_decision(const Tensor& h_loc, const Tensor& h_glo,
                                     const Tensor& h_dream, const TopoMap& map,
                                     const std::vector<int64_t>& local_rows) const {
  const int n = map.size();
  const int64_t total = n + 1;
  StepDecision d;

  Tensor s_glo = head_glo.apply_scores(h_glo);
  Tensor s_loc = head_loc.apply_scores(h_loc);
  const int64_t k = static_cast<int64_t>(local_rows.size());

  Tensor sigma_t;
  if (cfg_.use_fuse) {
    Tensor stops = concat_cols(gather_rows(h_glo, {0}), gather_rows(h_loc, {0}));
    sigma_t = sigmoid(head_fuse.apply(stops));  // 1x1, weight on global scores
    d.sigma = sigma_t.data()[0];
  } else {
    sigma_t = Tensor::full({1, 1}, 0.5);
    d.sigma = 0.5;
  }
  Tensor one_minus = sub(Tensor::full({k}, 1.0),
                         reshape(matmul(Tensor::full({k, 1}, 1.0), sigma_t), {k}));
  Tensor delta = mul(sub(s_loc, gather_rows(s_glo, local_rows)), one_minus);
  Tensor final_scores = add(s_glo, scatter_rows(delta, local_rows, total));

  if (cfg_.use_dreamer) {
    LAD_CHECK(h_dream.rank() == 2, "fuse: dreamer states missing");
    d.lambda = sigmoid(head_lambda.apply_scores(concat_cols(h_glo, h_dream)));
    Tensor s_a = head_fgd_glo.apply_scores(h_glo);
    Tensor s_b = head_fgd_dream.apply_scores(h_dream);
    Tensor s_fgd = add(mul(sub(Tensor::full({total}, 1.0), d.lambda), s_a),
                       mul(d.lambda, s_b));
    final_scores = add(final_scores, s_fgd);
  }

  d.dsap_mask.assign(static_cast<size_t>(total), 0);
  d.dsap_mask[0] = 1;
  for (int i = 0; i < n; ++i)
    d.dsap_mask[static_cast<size_t>(i + 1)] =
        map.nodes[static_cast<size_t>(i)].status == NodeStatus::kFrontier ? 1 : 0;
  d.dsap_logits = final_scores;
  d.dsap_prob = softmax(final_scores, &d.dsap_mask);
  for (const MapNode& m : map.nodes) d.order.push_back(m.id);
  return d;
}

Tensor LadModel::ground_objects(const Tensor& fused_objects, const Tensor& lang) const {
  LAD_CHECK(fused_objects.rank() == 2 && fused_objects.rows() > 0,
            "grounding: no objects");
  Tensor pooled = broadcast_row(mean_rows(lang), fused_objects.rows());
  return head_og.apply_scores(concat_cols(fused_objects, pooled));
}

Tensor LadModel::mlm_logits(const std::vector<int>& tokens) const {
  return head_mlm.apply(encode_instruction(tokens));
}

Tensor LadModel::mrc_predict(const TopoMap& map, int step, const Tensor& lang,
                             int map_index) const {
  LAD_CHECK(map_index >= 0 && map_index < map.size(), "mrc: node index ",
            map_index, " out of range");
  Tensor h = gasa(embed_nodes(map, step, map_index), map);
  Tensor glo = cross_global(h, lang);
  return reshape(head_mrc.apply(gather_rows(glo, {1 + map_index})),
                 {cfg_.num_rooms});
}

StepDecision LadModel::forward_step(const TopoMap& map, int step, const Tensor& lang,
                                    const Codebook& cb, const Tensor& im,
                                    const Tensor& fused_objects,
                                    int mrc_zero_index) const {
  Tensor h = gasa(embed_nodes(map, step, mrc_zero_index), map);
  Tensor h_glo = cross_global(h, lang);
  std::vector<int64_t> local_rows;
  Tensor h_loc = cross_local(h, lang, map, &local_rows);

  Tensor h_dream, pr_im, im_logits;
  std::vector<uint8_t> im_mask;
  if (cfg_.use_dreamer) {
    auto [hat, pr] = dreamer(h_glo, im, map, &im_mask, &im_logits);
    h_dream = hat;
    pr_im = pr;
  }
  StepDecision d = fuse_decision(h_loc, h_glo, h_dream, map, local_rows);
  d.pr_im = pr_im;
  d.im_logits = im_logits;
  d.im_mask = im_mask;
  if (cfg_.use_layout) d.layout = layout_predict(h_glo, cb);
  if (fused_objects.defined() && fused_objects.rows() > 0)
    d.og_scores = ground_objects(fused_objects, lang);
  return d;
}

Tensor LadModel::imagination_tensor(const ImaginationSet& im) {
  LAD_CHECK(im.count > 0, "imagination tensor: empty set");
  return Tensor::matrix(im.count, im.dim, im.data);
}

}  // namespace lad
