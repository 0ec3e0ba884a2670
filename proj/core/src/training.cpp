#include "lad/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "lad/checkpoint.hpp"
#include "lad/digest.hpp"
#include "lad/error.hpp"
#include "lad/eval.hpp"
#include "lad/optim.hpp"
#include "lad/vocab.hpp"

namespace lad {

namespace {

constexpr double kMaskRate = 0.15;

Tensor zero_scalar() { return Tensor::scalar(0.0); }

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += ids[i];
  }
  return out;
}

uint64_t episode_seed(uint64_t seed, const std::string& episode_id) {
  return fnv1a64(episode_id.data(), episode_id.size(), seed ^ 0x9e3779b97f4a7c15ULL);
}

// Replays the gold-path prefix of length `t`, returning the map and the
// fused object rows of the final (current) node.
struct ReplayState {
  TopoMap map;
  Tensor fused_objects;
};

ReplayState replay_prefix(const LadModel& model, const HouseGraph& house,
                          const Episode& ep, int t) {
  LAD_CHECK(t >= 1 && t <= static_cast<int>(ep.gold_path.size()),
            "warmup: prefix length ", t, " outside gold path of ",
            ep.episode_id);
  ReplayState st;
  for (int i = 0; i < t; ++i) {
    const Observation obs = observe(house, ep.gold_path[static_cast<size_t>(i)]);
    auto [views, objects] = model.fuse_local_visuals(obs);
    update_topo_map(st.map, obs, i + 1, views, objects);
    if (i + 1 == t) st.fused_objects = objects;
  }
  return st;
}

Tensor imagination_for_episode(const LadModel& model,
                               const std::map<std::string, ImaginationSet>& ims,
                               const Episode& ep) {
  if (!model.config().use_dreamer) return Tensor();
  auto it = ims.find(ep.episode_id);
  LAD_CHECK(it != ims.end(), "training: no imagination features for episode ",
            ep.episode_id);
  return LadModel::imagination_tensor(it->second);
}

std::vector<int64_t> room_targets(const HouseGraph& house,
                                  const std::vector<int>& order) {
  std::vector<int64_t> rooms;
  rooms.reserve(order.size());
  for (int id : order)
    rooms.push_back(house.nodes[static_cast<size_t>(id)].room_type);
  return rooms;
}

// Per-item loss tensors; undefined means the item contributes nothing to
// that component.
struct ItemLosses {
  Tensor mlm, mrc, og, lp, d, dsap;
  bool at_goal = false;
  bool text = false;
};

ItemLosses warmup_item(const LadModel& model, const WarmupItem& item,
                       const Codebook& cb,
                       const std::map<std::string, ImaginationSet>& ims) {
  const Episode& ep = *item.ep;
  const HouseGraph& house = *item.house;
  ItemLosses out;
  out.at_goal = item.t == static_cast<int>(ep.gold_path.size());

  Tensor lang = model.encode_instruction(ep.tokens);
  ReplayState st = replay_prefix(model, house, ep, item.t);
  Tensor im = imagination_for_episode(model, ims, ep);
  StepDecision d = model.forward_step(st.map, item.t, lang, cb, im,
                                      out.at_goal ? st.fused_objects : Tensor());

  const int64_t target =
      out.at_goal
          ? 0
          : 1 + st.map.index_of(ep.gold_path[static_cast<size_t>(item.t)]);
  out.dsap = cross_entropy(d.dsap_logits, {target}, &d.dsap_mask);
  if (d.layout.defined())
    out.lp = cross_entropy(d.layout, room_targets(house, d.order));
  if (!out.at_goal && d.im_logits.defined())
    out.d = cross_entropy(d.im_logits, {target - 1}, &d.im_mask);
  if (out.at_goal) {
    LAD_CHECK(d.og_scores.defined(), "warmup: goal node of ", ep.episode_id,
              " carries no objects");
    out.og = cross_entropy(d.og_scores, {ep.target_object_index});
  }

  if (item.aux_text) {
    out.text = true;
    Rng aux(item.aux_seed);
    // Masked-token prediction over the instruction.
    std::vector<int> masked = ep.tokens;
    std::vector<int64_t> positions, originals;
    for (size_t i = 0; i < masked.size(); ++i)
      if (aux.uniform() < kMaskRate) {
        positions.push_back(static_cast<int64_t>(i));
        originals.push_back(ep.tokens[i]);
        masked[i] = Vocab::kMask;
      }
    if (positions.empty()) {
      const size_t i = static_cast<size_t>(
          aux.uniform_int(0, static_cast<int64_t>(masked.size()) - 1));
      positions.push_back(static_cast<int64_t>(i));
      originals.push_back(ep.tokens[i]);
      masked[i] = Vocab::kMask;
    }
    out.mlm = cross_entropy(gather_rows(model.mlm_logits(masked), positions),
                            originals);
    // Masked-node room classification at one random map node.
    const int node_ix =
        static_cast<int>(aux.uniform_int(0, st.map.size() - 1));
    const int node_id = st.map.nodes[static_cast<size_t>(node_ix)].id;
    Tensor logits = model.mrc_predict(st.map, item.t, lang, node_ix);
    out.mrc = cross_entropy(
        logits, {house.nodes[static_cast<size_t>(node_id)].room_type});
  }
  return out;
}

void add_part(Tensor& slot, const Tensor& part) {
  if (!part.defined()) return;
  slot = slot.defined() ? add(slot, part) : part;
}

Tensor finalize(Tensor sum, int items) {
  if (!sum.defined()) return zero_scalar();
  return scale(sum, 1.0 / items);
}

struct DaggerStepTargets {
  Tensor og, lp, dsap;
  int steps = 0;
  int og_steps = 0;
};

// Losses over one finished rollout's recorded decisions.
DaggerStepTargets dagger_episode(const Rollout& roll, const Episode& ep,
                                 const HouseGraph& house) {
  DaggerStepTargets out;
  Tensor og_sum, lp_sum, dsap_sum;
  for (const StepRecord& rec : roll.steps) {
    const StepDecision& d = rec.decision;
    int64_t target = 0;
    if (rec.label >= 0) {
      const auto it = std::find(d.order.begin(), d.order.end(), rec.label);
      LAD_CHECK(it != d.order.end(), "dagger: label ", rec.label,
                " missing from the step's map");
      target = 1 + (it - d.order.begin());
    }
    add_part(dsap_sum, cross_entropy(d.dsap_logits, {target}, &d.dsap_mask));
    if (d.layout.defined())
      add_part(lp_sum, cross_entropy(d.layout, room_targets(house, d.order)));
    out.steps += 1;
    if (rec.node == ep.goal) {
      LAD_CHECK(d.og_scores.defined(), "dagger: goal node of ", ep.episode_id,
                " carries no objects");
      add_part(og_sum, cross_entropy(d.og_scores, {ep.target_object_index}));
      out.og_steps += 1;
    }
  }
  LAD_CHECK(out.steps > 0, "dagger: rollout with no decisions");
  out.dsap = scale(dsap_sum, 1.0 / out.steps);
  if (lp_sum.defined()) out.lp = scale(lp_sum, 1.0 / out.steps);
  if (og_sum.defined()) out.og = scale(og_sum, 1.0 / out.og_steps);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

TrainConfig TrainConfig::from_config(const Config& cfg, Stage stage) {
  const std::string p = stage == Stage::kWarmup ? "warmup." : "dagger.";
  TrainConfig t;
  t.iterations = static_cast<int>(
      cfg.get_int(p + "iterations", stage == Stage::kWarmup ? 5000 : 3000));
  t.batch_size = static_cast<int>(
      cfg.get_int(p + "batch_size", stage == Stage::kWarmup ? 8 : 4));
  t.lr = cfg.get_double(p + "lr", stage == Stage::kWarmup ? 5e-5 : 1e-5);
  t.beta1 = cfg.get_double(p + "beta1", t.beta1);
  t.beta2 = cfg.get_double(p + "beta2", t.beta2);
  t.adam_eps = cfg.get_double(p + "adam_eps", t.adam_eps);
  t.weight_decay = cfg.get_double(p + "weight_decay", t.weight_decay);
  t.w_mlm = cfg.get_double(p + "w_mlm", t.w_mlm);
  t.w_mrc = cfg.get_double(p + "w_mrc", t.w_mrc);
  t.w_og = cfg.get_double(p + "w_og", t.w_og);
  t.w_lp = cfg.get_double(p + "w_lp", t.w_lp);
  t.w_d = cfg.get_double(p + "w_d", t.w_d);
  t.w_dsap = cfg.get_double(p + "w_dsap", t.w_dsap);
  t.dagger_beta0 = cfg.get_double("dagger.beta0", t.dagger_beta0);
  t.iters_per_epoch =
      static_cast<int>(cfg.get_int("dagger.iters_per_epoch", t.iters_per_epoch));
  t.dagger_greedy = cfg.get_bool("dagger.greedy", t.dagger_greedy);
  t.aux_text_per_batch = static_cast<int>(
      cfg.get_int("warmup.aux_text_per_batch", t.aux_text_per_batch));
  t.val_every = static_cast<int>(cfg.get_int(p + "val_every", t.val_every));
  t.patience = static_cast<int>(cfg.get_int(p + "patience", t.patience));
  t.val_episodes =
      static_cast<int>(cfg.get_int(p + "val_episodes", t.val_episodes));
  t.max_steps = static_cast<int>(cfg.get_int(p + "max_steps", t.max_steps));
  t.threads = static_cast<int>(cfg.get_int("train.threads", t.threads));
  t.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<int64_t>(t.seed)));
  t.validate();
  return t;
}

void TrainConfig::validate() const {
  LAD_CHECK(iterations > 0 && batch_size > 0, "train config: counts must be positive");
  LAD_CHECK(lr >= 0.0, "train config: negative learning rate");
  LAD_CHECK(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            "train config: optimizer betas outside [0, 1)");
  LAD_CHECK(weight_decay >= 0.0 && adam_eps > 0.0,
            "train config: bad decay or epsilon");
  LAD_CHECK(dagger_beta0 > 0.0 && dagger_beta0 <= 1.0,
            "train config: teacher coin base outside (0, 1]");
  LAD_CHECK(aux_text_per_batch >= 0 && val_every >= 0 && patience >= 1 &&
                val_episodes >= 0 && iters_per_epoch >= 0,
            "train config: negative cadence value");
  LAD_CHECK(threads >= 1, "train config: thread count must be >= 1");
  const double weights[] = {w_mlm, w_mrc, w_og, w_lp, w_d, w_dsap};
  for (double w : weights) LAD_CHECK(w >= 0.0, "train config: negative loss weight");
}

std::map<std::string, ImaginationSet> imagine_for(
    const std::vector<Episode>& episodes, const FeatureTable& table, int count,
    double sigma, uint64_t seed) {
  std::map<std::string, ImaginationSet> out;
  for (const Episode& ep : episodes) {
    LAD_CHECK(!out.count(ep.episode_id), "imagine: duplicate episode id ",
              ep.episode_id);
    out[ep.episode_id] = imagine_destination(
        ep.tokens, table, count, sigma, episode_seed(seed, ep.episode_id),
        ep.episode_id);
  }
  return out;
}

WarmupBatch sample_warmup_batch(const TrainData& data, const TrainConfig& cfg,
                                Rng& rng) {
  LAD_CHECK(data.train && !data.train->empty(), "warmup: no training episodes");
  LAD_CHECK(data.houses, "warmup: no houses");
  WarmupBatch batch;
  for (int b = 0; b < cfg.batch_size; ++b) {
    const Episode& ep = (*data.train)[static_cast<size_t>(rng.uniform_int(
        0, static_cast<int64_t>(data.train->size()) - 1))];
    WarmupItem item;
    item.ep = &ep;
    item.house = &data.houses->get(ep.house_id);
    item.t = static_cast<int>(
        rng.uniform_int(1, static_cast<int64_t>(ep.gold_path.size())));
    item.aux_seed = rng.next_u64();
    batch.items.push_back(item);
  }
  const int text_n = std::min(cfg.aux_text_per_batch, cfg.batch_size);
  std::vector<int> order(batch.items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  for (int i = 0; i < text_n; ++i)
    batch.items[static_cast<size_t>(order[static_cast<size_t>(i)])].aux_text =
        true;
  return batch;
}

WarmupLosses warmup_losses(const LadModel& model, const WarmupBatch& batch,
                           const Codebook& cb,
                           const std::map<std::string, ImaginationSet>& ims,
                           const TrainConfig& cfg) {
  LAD_CHECK(!batch.items.empty(), "warmup: empty batch");
  WarmupLosses out;
  out.items = static_cast<int>(batch.items.size());
  Tensor mlm, mrc, og, lp, d, dsap;
  for (const WarmupItem& item : batch.items) {
    ItemLosses il = warmup_item(model, item, cb, ims);
    add_part(mlm, il.mlm);
    add_part(mrc, il.mrc);
    add_part(og, il.og);
    add_part(lp, il.lp);
    add_part(d, il.d);
    add_part(dsap, il.dsap);
    out.og_items += il.at_goal ? 1 : 0;
    out.skipped_og += il.at_goal ? 0 : 1;
    out.d_items += !il.at_goal && il.d.defined() ? 1 : 0;
    out.skipped_d += il.at_goal ? 1 : 0;
    out.text_items += il.text ? 1 : 0;
  }
  out.mlm = finalize(mlm, out.items);
  out.mrc = finalize(mrc, out.items);
  out.og = finalize(og, out.items);
  out.lp = finalize(lp, out.items);
  out.d = finalize(d, out.items);
  out.dsap = finalize(dsap, out.items);
  out.total = add(add(add(scale(out.mlm, cfg.w_mlm), scale(out.mrc, cfg.w_mrc)),
                      add(scale(out.og, cfg.w_og), scale(out.lp, cfg.w_lp))),
                  add(scale(out.d, cfg.w_d), scale(out.dsap, cfg.w_dsap)));
  return out;
}

DaggerLosses dagger_losses(const LadModel& model,
                           const std::vector<const HouseGraph*>& houses,
                           const std::vector<const Episode*>& episodes,
                           const Codebook& cb,
                           const std::map<std::string, ImaginationSet>& ims,
                           double beta, const TrainConfig& cfg, Rng& rng) {
  LAD_CHECK(!episodes.empty() && houses.size() == episodes.size(),
            "dagger: episode/house mismatch");
  LAD_CHECK(beta >= 0.0 && beta <= 1.0, "dagger: teacher coin ", beta,
            " outside [0, 1]");
  DaggerLosses out;
  out.episodes = static_cast<int>(episodes.size());
  RolloutOptions opt;
  opt.mode = cfg.dagger_greedy ? ActMode::kGreedy : ActMode::kSample;
  opt.teacher_beta = beta;
  opt.max_steps = cfg.max_steps;

  Tensor og, lp, dsap;
  for (size_t i = 0; i < episodes.size(); ++i) {
    const Episode& ep = *episodes[i];
    ImaginationSet dummy;
    const ImaginationSet* im = &dummy;
    if (model.config().use_dreamer) {
      auto it = ims.find(ep.episode_id);
      LAD_CHECK(it != ims.end(), "dagger: no imagination features for ",
                ep.episode_id);
      im = &it->second;
    }
    Rng ep_rng = rng.child("dagger-ep", i);
    Rollout roll = run_episode(model, *houses[i], ep, cb, *im, opt, ep_rng);
    DaggerStepTargets t = dagger_episode(roll, ep, *houses[i]);
    add_part(og, t.og);
    add_part(lp, t.lp);
    add_part(dsap, t.dsap);
    out.steps += t.steps;
    out.og_steps += t.og_steps;
    out.rollouts.push_back(std::move(roll));
  }
  out.og = finalize(og, out.episodes);
  out.lp = finalize(lp, out.episodes);
  out.dsap = finalize(dsap, out.episodes);
  out.total = add(add(scale(out.og, cfg.w_og), scale(out.lp, cfg.w_lp)),
                  scale(out.dsap, cfg.w_dsap));
  return out;
}

GradStore parallel_grad(int n, int threads,
                        const std::function<Tensor(int)>& item_loss) {
  LAD_CHECK(n >= 0 && threads >= 1, "parallel_grad: bad worker layout");
  const int workers = std::min(threads, std::max(n, 1));
  std::vector<GradStore> stores(static_cast<size_t>(workers));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));

  auto run_range = [&](int w, int lo, int hi) {
    try {
      for (int i = lo; i < hi; ++i) {
        Tensor loss = item_loss(i);
        if (loss.defined()) backward(loss, stores[static_cast<size_t>(w)]);
      }
    } catch (...) {
      errors[static_cast<size_t>(w)] = std::current_exception();
    }
  };

  if (workers == 1) {
    run_range(0, 0, n);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      const int lo = static_cast<int>(static_cast<int64_t>(n) * w / workers);
      const int hi =
          static_cast<int>(static_cast<int64_t>(n) * (w + 1) / workers);
      pool.emplace_back(run_range, w, lo, hi);
    }
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  GradStore total;
  for (GradStore& s : stores) total.accumulate(s);
  return total;
}

namespace {

struct ValScores {
  bool present = false;
  SplitMetrics metrics;
};

ValScores validate_split(const LadModel& model, const TrainData& data,
                         const std::vector<Episode>* episodes,
                         const TrainConfig& cfg) {
  ValScores out;
  if (!episodes || episodes->empty()) return out;
  NoGradGuard ng;
  RolloutOptions opt;
  opt.mode = ActMode::kGreedy;
  opt.max_steps = cfg.max_steps;
  size_t count = episodes->size();
  if (cfg.val_episodes > 0)
    count = std::min(count, static_cast<size_t>(cfg.val_episodes));
  std::vector<EpisodeScore> rows;
  for (size_t i = 0; i < count; ++i) {
    const Episode& ep = (*episodes)[i];
    const HouseGraph& house = data.houses->get(ep.house_id);
    ImaginationSet dummy;
    const ImaginationSet* im = &dummy;
    if (model.config().use_dreamer) {
      auto it = data.imaginations->find(ep.episode_id);
      LAD_CHECK(it != data.imaginations->end(),
                "validate: no imagination features for ", ep.episode_id);
      im = &it->second;
    }
    Rng rng(0);  // greedy rollouts consume no randomness
    Rollout roll = run_episode(model, house, ep, *data.codebook, *im, opt, rng);
    rows.push_back(score_episode(roll, ep, house));
  }
  out.present = true;
  out.metrics = aggregate(rows, 0, 0);
  return out;
}

std::string val_line(int iter, const char* split, const SplitMetrics& m) {
  std::ostringstream os;
  os << "val iter=" << iter << " split=" << split << " sr=" << fmt(m.sr.mean)
     << " osr=" << fmt(m.osr.mean) << " spl=" << fmt(m.spl.mean)
     << " rgs=" << fmt(m.rgs.mean) << " rgspl=" << fmt(m.rgspl.mean)
     << " tl=" << fmt(m.tl.mean);
  return os.str();
}

}  // namespace

TrainResult train(Stage stage, LadModel& model, const TrainData& data,
                  const TrainConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  LAD_CHECK(data.houses && data.train && !data.train->empty() && data.codebook,
            "train: incomplete data bundle");
  LAD_CHECK(data.imaginations || !model.config().use_dreamer,
            "train: imagination store missing");
  LAD_CHECK(!out_dir.empty(), "train: output directory required");
  std::filesystem::create_directories(out_dir);

  static const std::map<std::string, ImaginationSet> kNoIms;
  const auto& ims = data.imaginations ? *data.imaginations : kNoIms;

  AdamW opt(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  Rng master(cfg.seed);
  const int iters_per_epoch =
      cfg.iters_per_epoch > 0
          ? cfg.iters_per_epoch
          : std::max<int>(1, static_cast<int>((data.train->size() +
                                               static_cast<size_t>(cfg.batch_size) - 1) /
                                              static_cast<size_t>(cfg.batch_size)));

  TrainResult result;
  result.best_checkpoint = out_dir + "/best.ckpt";
  result.last_checkpoint = out_dir + "/last.ckpt";
  bool saved_best = false;
  int vals_since_best = 0;

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    Rng batch_rng = master.child("batch", static_cast<uint64_t>(iter));
    double total_value = 0.0;
    std::ostringstream line;
    std::vector<std::string> batch_ids;

    if (stage == Stage::kWarmup) {
      WarmupBatch batch = sample_warmup_batch(data, cfg, batch_rng);
      for (const WarmupItem& it : batch.items) batch_ids.push_back(it.ep->episode_id);

      const int n = static_cast<int>(batch.items.size());
      std::vector<ItemLosses> parts(static_cast<size_t>(n));
      GradStore grads = parallel_grad(n, cfg.threads, [&](int i) -> Tensor {
        ItemLosses il = warmup_item(model, batch.items[static_cast<size_t>(i)],
                                    *data.codebook, ims);
        Tensor total;
        add_part(total, il.mlm.defined() ? scale(il.mlm, cfg.w_mlm) : Tensor());
        add_part(total, il.mrc.defined() ? scale(il.mrc, cfg.w_mrc) : Tensor());
        add_part(total, il.og.defined() ? scale(il.og, cfg.w_og) : Tensor());
        add_part(total, il.lp.defined() ? scale(il.lp, cfg.w_lp) : Tensor());
        add_part(total, il.d.defined() ? scale(il.d, cfg.w_d) : Tensor());
        add_part(total, scale(il.dsap, cfg.w_dsap));
        parts[static_cast<size_t>(i)] = il;
        return scale(total, 1.0 / n);
      });

      auto mean_val = [&](Tensor ItemLosses::* f) {
        double sum = 0.0;
        for (const ItemLosses& il : parts)
          if ((il.*f).defined()) sum += (il.*f).item();
        return sum / n;
      };
      const double v_mlm = mean_val(&ItemLosses::mlm);
      const double v_mrc = mean_val(&ItemLosses::mrc);
      const double v_og = mean_val(&ItemLosses::og);
      const double v_lp = mean_val(&ItemLosses::lp);
      const double v_d = mean_val(&ItemLosses::d);
      const double v_dsap = mean_val(&ItemLosses::dsap);
      total_value = cfg.w_mlm * v_mlm + cfg.w_mrc * v_mrc + cfg.w_og * v_og +
                    cfg.w_lp * v_lp + cfg.w_d * v_d + cfg.w_dsap * v_dsap;
      line << "iter=" << iter << " stage=warmup total=" << fmt(total_value)
           << " mlm=" << fmt(v_mlm) << " mrc=" << fmt(v_mrc)
           << " og=" << fmt(v_og) << " lp=" << fmt(v_lp) << " d=" << fmt(v_d)
           << " dsap=" << fmt(v_dsap);

      LAD_CHECK(std::isfinite(total_value), "train: non-finite loss at iteration ",
                iter, " (episodes: ", join_ids(batch_ids), ")");
      fill_missing_grads(model.params(), grads);
      opt.step(model.params(), grads);
    } else {
      const int epoch = (iter - 1) / iters_per_epoch;
      const double beta = std::pow(cfg.dagger_beta0, epoch);
      std::vector<const HouseGraph*> houses;
      std::vector<const Episode*> eps;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const Episode& ep = (*data.train)[static_cast<size_t>(
            batch_rng.uniform_int(0, static_cast<int64_t>(data.train->size()) - 1))];
        eps.push_back(&ep);
        houses.push_back(&data.houses->get(ep.house_id));
        batch_ids.push_back(ep.episode_id);
      }

      const int n = static_cast<int>(eps.size());
      std::vector<double> v_og(static_cast<size_t>(n), 0.0),
          v_lp(static_cast<size_t>(n), 0.0), v_dsap(static_cast<size_t>(n), 0.0);
      RolloutOptions ropt;
      ropt.mode = cfg.dagger_greedy ? ActMode::kGreedy : ActMode::kSample;
      ropt.teacher_beta = beta;
      ropt.max_steps = cfg.max_steps;
      GradStore grads = parallel_grad(n, cfg.threads, [&](int i) -> Tensor {
        const Episode& ep = *eps[static_cast<size_t>(i)];
        ImaginationSet dummy;
        const ImaginationSet* im = &dummy;
        if (model.config().use_dreamer) im = &ims.at(ep.episode_id);
        Rng ep_rng =
            master.child("dagger-ep", static_cast<uint64_t>(iter),
                         static_cast<uint64_t>(i));
        Rollout roll = run_episode(model, *houses[static_cast<size_t>(i)], ep,
                                   *data.codebook, *im, ropt, ep_rng);
        DaggerStepTargets t =
            dagger_episode(roll, ep, *houses[static_cast<size_t>(i)]);
        Tensor total;
        add_part(total, t.og.defined() ? scale(t.og, cfg.w_og) : Tensor());
        add_part(total, t.lp.defined() ? scale(t.lp, cfg.w_lp) : Tensor());
        add_part(total, scale(t.dsap, cfg.w_dsap));
        if (t.og.defined()) v_og[static_cast<size_t>(i)] = t.og.item();
        if (t.lp.defined()) v_lp[static_cast<size_t>(i)] = t.lp.item();
        v_dsap[static_cast<size_t>(i)] = t.dsap.item();
        return scale(total, 1.0 / n);
      });

      auto mean_of = [&](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / n;
      };
      const double m_og = mean_of(v_og), m_lp = mean_of(v_lp),
                   m_dsap = mean_of(v_dsap);
      total_value = cfg.w_og * m_og + cfg.w_lp * m_lp + cfg.w_dsap * m_dsap;
      line << "iter=" << iter << " stage=dagger total=" << fmt(total_value)
           << " og=" << fmt(m_og) << " lp=" << fmt(m_lp)
           << " dsap=" << fmt(m_dsap) << " beta=" << fmt(beta);

      LAD_CHECK(std::isfinite(total_value), "train: non-finite loss at iteration ",
                iter, " (episodes: ", join_ids(batch_ids), ")");
      fill_missing_grads(model.params(), grads);
      opt.step(model.params(), grads);
    }

    result.loss_history.push_back(total_value);
    result.log.push_back(line.str());
    result.iterations_run = iter;

    const bool validate_now =
        cfg.val_every > 0 && (iter % cfg.val_every == 0 || iter == cfg.iterations);
    if (validate_now) {
      ValScores seen = validate_split(model, data, data.val_seen, cfg);
      ValScores unseen = validate_split(model, data, data.val_unseen, cfg);
      if (seen.present) result.log.push_back(val_line(iter, "val-seen", seen.metrics));
      if (unseen.present)
        result.log.push_back(val_line(iter, "val-unseen", unseen.metrics));
      const ValScores& selector = unseen.present ? unseen : seen;
      if (selector.present) {
        const double sr = selector.metrics.sr.mean;
        if (sr > result.best_val_sr) {
          result.best_val_sr = sr;
          result.best_iteration = iter;
          save_params(result.best_checkpoint, model.params());
          saved_best = true;
          vals_since_best = 0;
        } else {
          vals_since_best += 1;
          if (vals_since_best >= cfg.patience) {
            result.early_stopped = true;
            result.log.push_back("early-stop iter=" + std::to_string(iter));
            break;
          }
        }
      }
    }
  }

  save_params(result.last_checkpoint, model.params());
  if (!saved_best) {
    save_params(result.best_checkpoint, model.params());
    result.best_iteration = result.iterations_run;
  }

  std::ofstream log_file(out_dir + "/metrics.log");
  LAD_CHECK(log_file.good(), "train: cannot write metrics log in ", out_dir);
  for (const std::string& l : result.log) log_file << l << "\n";
  return result;
}

}  // namespace lad
