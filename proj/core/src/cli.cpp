#include "lad/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "lad/agent.hpp"
#include "lad/checkpoint.hpp"
#include "lad/codebook.hpp"
#include "lad/dataset.hpp"
#include "lad/digest.hpp"
#include "lad/env.hpp"
#include "lad/error.hpp"
#include "lad/eval.hpp"
#include "lad/policy.hpp"
#include "lad/rng.hpp"
#include "lad/training.hpp"
#include "lad/vocab.hpp"

namespace lad {

namespace {

struct UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

uint64_t parse_u64(const std::string& s, const std::string& flag) {
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("flag " + flag + " needs an unsigned integer, got '" + s + "'");
  }
}

int parse_int(const std::string& s, const std::string& flag) {
  const uint64_t v = parse_u64(s, flag);
  if (v > 1u << 20) throw UsageError("flag " + flag + " value out of range");
  return static_cast<int>(v);
}

std::string manifest_path(const std::string& out_dir, const std::string& sub) {
  return out_dir + "/manifest." + sub;
}

std::string fmt6(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Shared loading

Config merged_config(const RunConfig& rc) {
  Config c;
  if (!rc.config_path.empty()) c = Config::load(rc.config_path);
  c.merge(rc.overrides);
  return c;
}

uint64_t require_seed(const RunConfig& rc) {
  if (!rc.has_seed)
    throw UsageError("--seed is required for " + rc.subcommand +
                     " (runs never seed from the clock)");
  return rc.seed;
}

const std::string& require_path(const RunConfig& rc, const std::string& name) {
  auto it = rc.paths.find(name);
  if (it == rc.paths.end() || it->second.empty())
    throw UsageError("--" + name + " is required for " + rc.subcommand);
  return it->second;
}

std::string opt_path(const RunConfig& rc, const std::string& name) {
  auto it = rc.paths.find(name);
  return it == rc.paths.end() ? std::string() : it->second;
}

int resolve_threads(const RunConfig& rc, int config_threads) {
  return rc.threads > 0 ? rc.threads : config_threads;
}

struct DataBundle {
  HouseIndex houses;
  std::vector<Episode> train, val_seen, val_unseen;
  std::vector<std::string> files;
};

DataBundle load_data(const std::string& dir) {
  const DatasetPaths p = DatasetPaths::in_dir(dir);
  DataBundle d;
  d.houses.add(read_houses_jsonl(p.houses_train));
  d.houses.add(read_houses_jsonl(p.houses_val_unseen));
  d.train = read_episodes_jsonl(p.episodes_train);
  d.val_seen = read_episodes_jsonl(p.episodes_val_seen);
  d.val_unseen = read_episodes_jsonl(p.episodes_val_unseen);
  d.files = p.all();
  LAD_CHECK(!d.train.empty(), "dataset at ", dir, " has no training episodes");
  return d;
}

// Order-stable fingerprint of the five dataset files.
std::string digest_dataset(const std::string& dir) {
  std::string acc;
  for (const std::string& f : DatasetPaths::in_dir(dir).all())
    acc += digest_file(f);
  return digest_bytes(acc);
}

void note_file_input(RunManifest& man, const std::string& name,
                     const std::string& path) {
  man.input_paths[name] = path;
  man.input_digests[name] = digest_file(path);
}

void note_dataset_input(RunManifest& man, const std::string& dir) {
  man.input_paths["data"] = dir;
  man.input_digests["data"] = digest_dataset(dir);
}

void note_output(RunManifest& man, const std::string& out_dir,
                 const std::string& file) {
  man.output_digests[file] = digest_file(out_dir + "/" + file);
}

FeatureTable table_from(const Config& cfg) {
  const GenConfig g = GenConfig::from_config(cfg);
  return FeatureTable::build(g.num_rooms, g.num_objects, g.dim, g.proto_seed);
}

std::map<std::string, ImaginationSet> make_ims(
    const AgentConfig& acfg, const FeatureTable& table, const DataBundle& data,
    uint64_t seed) {
  std::vector<Episode> all = data.train;
  all.insert(all.end(), data.val_seen.begin(), data.val_seen.end());
  all.insert(all.end(), data.val_unseen.begin(), data.val_unseen.end());
  return imagine_for(all, table, acfg.im_count, acfg.im_sigma, seed);
}

Codebook make_codebook(const std::string& variant, const FeatureTable& table,
                       const Config& cfg, uint64_t seed) {
  if (variant == "visual")
    return build_room_codebook(table, CodebookConfig::from_config(cfg), seed);
  if (variant == "textual") return build_textual_codebook(table);
  fail("unknown codebook variant '", variant, "' (visual | textual)");
}

ActMode parse_mode(const std::string& mode) {
  if (mode.empty() || mode == "greedy") return ActMode::kGreedy;
  if (mode == "sample") return ActMode::kSample;
  if (mode == "random") return ActMode::kRandom;
  if (mode == "teacher") return ActMode::kTeacher;
  throw UsageError("--mode must be greedy | sample | random | teacher");
}

// Evaluates one split with the given action mode; fills `rollouts` when the
// caller wants the trajectories too.
SplitMetrics eval_split(const LadModel& model, const DataBundle& data,
                        const std::vector<Episode>& episodes,
                        const Codebook& cb,
                        const std::map<std::string, ImaginationSet>& ims,
                        ActMode mode, uint64_t seed, int resamples,
                        std::vector<Rollout>* rollouts_out,
                        std::vector<const HouseGraph*>* houses_out) {
  NoGradGuard ng;
  RolloutOptions opt;
  opt.mode = mode;
  Rng root(seed);
  std::vector<EpisodeScore> rows;
  for (size_t i = 0; i < episodes.size(); ++i) {
    const Episode& ep = episodes[i];
    const HouseGraph& house = data.houses.get(ep.house_id);
    ImaginationSet dummy;
    const ImaginationSet* im = &dummy;
    if (model.config().use_dreamer) {
      auto it = ims.find(ep.episode_id);
      LAD_CHECK(it != ims.end(), "eval: no imagination features for ",
                ep.episode_id);
      im = &it->second;
    }
    Rng rng = root.child("rollout", i);
    Rollout roll = run_episode(model, house, ep, cb, *im, opt, rng);
    rows.push_back(score_episode(roll, ep, house));
    if (rollouts_out) rollouts_out->push_back(std::move(roll));
    if (houses_out) houses_out->push_back(&house);
  }
  return aggregate(rows, root.child("bootstrap").next_u64(), resamples);
}

void metrics_to_config(Config& out, const std::string& prefix,
                       const SplitMetrics& m) {
  auto put = [&](const std::string& name, const MetricSummary& s) {
    out.set_double(prefix + "." + name, s.mean);
    out.set_double(prefix + "." + name + ".lo", s.ci_lo);
    out.set_double(prefix + "." + name + ".hi", s.ci_hi);
  };
  out.set_int(prefix + ".count", m.count);
  put("tl", m.tl);
  put("sr", m.sr);
  put("osr", m.osr);
  put("spl", m.spl);
  put("rgs", m.rgs);
  put("rgspl", m.rgspl);
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen_data(const RunConfig& rc) {
  const Config cfg = merged_config(rc);
  const uint64_t seed = require_seed(rc);
  const std::string& out = require_path(rc, "out");
  const DatasetPaths paths = generate_dataset(cfg, seed, out);

  RunManifest man;
  man.subcommand = "gen-data";
  man.seed = seed;
  man.threads = resolve_threads(rc, 1);
  man.config = cfg;
  for (const std::string& f : paths.all())
    note_output(man, out, std::filesystem::path(f).filename().string());
  man.write(manifest_path(out, man.subcommand));
  std::cout << "gen-data: wrote " << paths.all().size() << " files under "
            << out << "\n";
  return 0;
}

int cmd_build_codebook(const RunConfig& rc) {
  const Config cfg = merged_config(rc);
  const uint64_t seed = require_seed(rc);
  const std::string& out = require_path(rc, "out");
  const FeatureTable table = table_from(cfg);
  const std::string variant = cfg.get_str("codebook.variant", "visual");
  const Codebook cb = make_codebook(variant, table, cfg, seed);
  std::filesystem::create_directories(out);
  save_codebook(out + "/codebook.bin", cb);

  RunManifest man;
  man.subcommand = "build-codebook";
  man.seed = seed;
  man.threads = resolve_threads(rc, 1);
  man.config = cfg;
  note_output(man, out, "codebook.bin");
  man.write(manifest_path(out, man.subcommand));
  std::cout << "build-codebook: " << variant << " variant, " << cb.num_rooms
            << " rooms x " << cb.entries_per_room << " entries\n";
  return 0;
}

int cmd_imagine(const RunConfig& rc) {
  const Config cfg = merged_config(rc);
  const uint64_t seed = require_seed(rc);
  const std::string& out = require_path(rc, "out");
  const std::string& eps_path = require_path(rc, "episodes");
  const AgentConfig acfg = AgentConfig::from_config(cfg);
  const FeatureTable table = table_from(cfg);
  const std::vector<Episode> eps = read_episodes_jsonl(eps_path);
  auto ims = imagine_for(eps, table, acfg.im_count, acfg.im_sigma, seed);
  std::vector<ImaginationSet> ordered;
  ordered.reserve(ims.size());
  for (auto& [id, set] : ims) ordered.push_back(std::move(set));
  std::filesystem::create_directories(out);
  save_imaginations(out + "/imaginations.bin", ordered);

  RunManifest man;
  man.subcommand = "imagine";
  man.seed = seed;
  man.threads = resolve_threads(rc, 1);
  man.config = cfg;
  note_file_input(man, "episodes", eps_path);
  note_output(man, out, "imaginations.bin");
  man.write(manifest_path(out, man.subcommand));
  std::cout << "imagine: " << ordered.size() << " episode sets of "
            << acfg.im_count << " x " << table.dim << " features\n";
  return 0;
}

int cmd_train_stage(const RunConfig& rc, Stage stage) {
  const Config cfg = merged_config(rc);
  const uint64_t seed = require_seed(rc);
  const std::string& out = require_path(rc, "out");
  const std::string& data_dir = require_path(rc, "data");
  const std::string& cb_path = require_path(rc, "codebook");
  const std::string init = opt_path(rc, "init");
  if (stage == Stage::kDagger && init.empty())
    throw UsageError("--init is required for dagger (the warmup checkpoint)");

  const DataBundle data = load_data(data_dir);
  const Codebook cb = load_codebook(cb_path);
  const AgentConfig acfg = AgentConfig::from_config(cfg);
  const FeatureTable table = table_from(cfg);
  TrainConfig tc = TrainConfig::from_config(cfg, stage);
  tc.seed = seed;
  tc.threads = resolve_threads(rc, tc.threads);

  Rng root(seed);
  const auto ims = make_ims(acfg, table, data, root.child("imagine").next_u64());
  LadModel model(acfg, root.child("model").next_u64());
  if (!init.empty()) load_params(init, model.params());

  TrainData td;
  td.houses = &data.houses;
  td.train = &data.train;
  td.val_seen = &data.val_seen;
  td.val_unseen = &data.val_unseen;
  td.codebook = &cb;
  td.imaginations = &ims;
  const TrainResult res = train(stage, model, td, tc, out);

  RunManifest man;
  man.subcommand = stage == Stage::kWarmup ? "warmup" : "dagger";
  man.seed = seed;
  man.threads = tc.threads;
  man.config = cfg;
  note_dataset_input(man, data_dir);
  note_file_input(man, "codebook", cb_path);
  if (!init.empty()) note_file_input(man, "init", init);
  note_output(man, out, "best.ckpt");
  note_output(man, out, "last.ckpt");
  note_output(man, out, "metrics.log");
  man.write(manifest_path(out, man.subcommand));
  std::cout << man.subcommand << ": " << res.iterations_run
            << " iterations, final loss " << fmt6(res.loss_history.back());
  if (res.best_val_sr >= 0.0)
    std::cout << ", best val SR " << fmt6(res.best_val_sr) << " at iteration "
              << res.best_iteration;
  std::cout << "\n";
  return 0;
}

int cmd_eval(const RunConfig& rc) {
  const Config cfg = merged_config(rc);
  const uint64_t seed = require_seed(rc);
  const std::string& out = require_path(rc, "out");
  const std::string& data_dir = require_path(rc, "data");
  const std::string& cb_path = require_path(rc, "codebook");
  const std::string& init = require_path(rc, "init");
  const std::string split = !rc.split.empty()
                                ? rc.split
                                : cfg.get_str("run.split", "");
  const ActMode mode = parse_mode(!rc.mode.empty() ? rc.mode
                                                   : cfg.get_str("run.mode", ""));
  const int resamples = static_cast<int>(cfg.get_int("eval.resamples", 1000));

  const DataBundle data = load_data(data_dir);
  const Codebook cb = load_codebook(cb_path);
  const AgentConfig acfg = AgentConfig::from_config(cfg);
  const FeatureTable table = table_from(cfg);
  Rng root(seed);
  const auto ims = make_ims(acfg, table, data, root.child("imagine").next_u64());
  LadModel model(acfg, 1);
  load_params(init, model.params());

  std::vector<std::pair<std::string, const std::vector<Episode>*>> splits;
  if (split.empty() || split == "val-seen")
    splits.emplace_back("val-seen", &data.val_seen);
  if (split.empty() || split == "val-unseen")
    splits.emplace_back("val-unseen", &data.val_unseen);
  if (split == "train") splits.emplace_back("train", &data.train);
  if (splits.empty())
    throw UsageError("--split must be train | val-seen | val-unseen");

  std::ostringstream report;
  Config machine;
  for (size_t s = 0; s < splits.size(); ++s) {
    const auto& [name, eps] = splits[s];
    std::vector<Rollout> rollouts;
    std::vector<const HouseGraph*> houses;
    SplitMetrics m =
        eval_split(model, data, *eps, cb, ims, mode,
                   root.child("split", s).next_u64(), resamples, &rollouts,
                   &houses);
    report << format_metrics(name, m);
    metrics_to_config(machine, "result." + name, m);
    if (acfg.use_layout) {
      const std::vector<double> curve =
          room_accuracy_by_step(rollouts, houses, acfg.max_steps);
      for (size_t t = 0; t < curve.size(); ++t)
        machine.set_double("room-accuracy." + name + ".t" + std::to_string(t + 1),
                           curve[static_cast<size_t>(t)]);
    }
  }
  std::filesystem::create_directories(out);
  write_file(out + "/metrics.txt", report.str());
  write_file(out + "/metrics.cfg", machine.serialize());

  RunManifest man;
  man.subcommand = "eval";
  man.seed = seed;
  man.threads = resolve_threads(rc, 1);
  man.config = cfg;
  if (!rc.split.empty()) man.config.set("run.split", rc.split);
  if (!rc.mode.empty()) man.config.set("run.mode", rc.mode);
  note_dataset_input(man, data_dir);
  note_file_input(man, "codebook", cb_path);
  note_file_input(man, "init", init);
  note_output(man, out, "metrics.txt");
  note_output(man, out, "metrics.cfg");
  man.write(manifest_path(out, man.subcommand));
  std::cout << report.str();
  return 0;
}

int cmd_trace(const RunConfig& rc) {
  const Config cfg = merged_config(rc);
  const uint64_t seed = require_seed(rc);
  const std::string& out = require_path(rc, "out");
  const std::string& data_dir = require_path(rc, "data");
  const std::string& cb_path = require_path(rc, "codebook");
  const std::string& init = require_path(rc, "init");
  const std::string episode_id = !rc.episode_id.empty()
                                     ? rc.episode_id
                                     : cfg.get_str("run.episode", "");
  if (episode_id.empty()) throw UsageError("--episode <id> is required for trace");
  const ActMode mode = parse_mode(!rc.mode.empty() ? rc.mode
                                                   : cfg.get_str("run.mode", ""));

  const DataBundle data = load_data(data_dir);
  const Episode* ep = nullptr;
  for (const auto* split : {&data.train, &data.val_seen, &data.val_unseen})
    for (const Episode& e : *split)
      if (e.episode_id == episode_id) ep = &e;
  LAD_CHECK(ep, "trace: episode '", episode_id, "' not found in any split");

  const Codebook cb = load_codebook(cb_path);
  const AgentConfig acfg = AgentConfig::from_config(cfg);
  const FeatureTable table = table_from(cfg);
  Rng root(seed);
  const auto ims =
      imagine_for({*ep}, table, acfg.im_count, acfg.im_sigma,
                  root.child("imagine").next_u64());
  LadModel model(acfg, 1);
  load_params(init, model.params());

  const HouseGraph& house = data.houses.get(ep->house_id);
  NoGradGuard ng;
  RolloutOptions opt;
  opt.mode = mode;
  Rng rng = root.child("rollout");
  const Rollout roll = run_episode(model, house, *ep, cb, ims.at(ep->episode_id),
                                   opt, rng);
  const EpisodeScore score = score_episode(roll, *ep, house);

  std::ostringstream t;
  t << "episode = " << ep->episode_id << "\n";
  t << "house = " << ep->house_id << "\n";
  t << "instruction = " << Vocab::get().decode(ep->tokens) << "\n";
  t << "start = " << ep->start << "  goal = " << ep->goal
    << "  target-object = " << ep->target_object_index << "\n";
  for (size_t i = 0; i < roll.steps.size(); ++i) {
    const StepRecord& rec = roll.steps[i];
    t << "step=" << (i + 1) << " node=" << rec.node << " label=" << rec.label
      << " action=" << rec.action << " forced=" << (rec.forced_stop ? 1 : 0);
    if (!rec.segment.empty()) {
      t << " segment=";
      for (size_t k = 0; k < rec.segment.size(); ++k)
        t << (k ? ">" : "") << rec.segment[static_cast<size_t>(k)];
    }
    t << "\n";
  }
  t << "end = " << roll.end_node << "  stopped = " << (roll.stopped ? 1 : 0)
    << "  selected-object = " << roll.selected_object << "\n";
  t << "tl = " << fmt6(score.tl) << "  sr = " << score.sr << "  osr = "
    << score.osr << "  spl = " << fmt6(score.spl) << "  rgs = " << score.rgs
    << "  rgspl = " << fmt6(score.rgspl) << "\n";
  std::filesystem::create_directories(out);
  write_file(out + "/trace.txt", t.str());

  RunManifest man;
  man.subcommand = "trace";
  man.seed = seed;
  man.threads = resolve_threads(rc, 1);
  man.config = cfg;
  man.config.set("run.episode", episode_id);
  if (!rc.mode.empty()) man.config.set("run.mode", rc.mode);
  note_dataset_input(man, data_dir);
  note_file_input(man, "codebook", cb_path);
  note_file_input(man, "init", init);
  note_output(man, out, "trace.txt");
  man.write(manifest_path(out, man.subcommand));
  std::cout << t.str();
  return 0;
}

// One ablation grid variant: which heads are active and which codebook the
// layout scores use.
struct Variant {
  std::string name;
  bool use_layout;
  bool use_dreamer;
  std::string layout_head;
  std::string cb_variant;
};

int cmd_ablate(const RunConfig& rc) {
  const Config cfg = merged_config(rc);
  const uint64_t seed = require_seed(rc);
  const std::string& out = require_path(rc, "out");
  const std::string& data_dir = require_path(rc, "data");
  std::filesystem::create_directories(out);

  const DataBundle data = load_data(data_dir);
  const AgentConfig base_acfg = AgentConfig::from_config(cfg);
  const FeatureTable table = table_from(cfg);
  std::vector<int64_t> seeds = cfg.get_int_list("ablate.seeds", {0, 1, 2});
  LAD_CHECK(!seeds.empty(), "ablate: empty seed list");

  const std::vector<Variant> variants = {
      {"baseline", false, false, "codebook", "visual"},
      {"layout", true, false, "codebook", "visual"},
      {"dreamer", false, true, "codebook", "visual"},
      {"full", true, true, "codebook", "visual"},
      {"textual", true, true, "codebook", "textual"},
      {"classifier", true, true, "classifier", "visual"},
  };

  Config machine;
  Config timings;  // wall-clock only; kept out of the manifest digests
  std::ostringstream report;
  report << "ablation grids: mean val-unseen metrics over seeds {";
  for (size_t i = 0; i < seeds.size(); ++i) report << (i ? "," : "") << seeds[i];
  report << "}\n\n";

  std::vector<double> fig_curve;  // room accuracy by step, full variant
  int fig_runs = 0;

  auto eval_model = [&](const LadModel& model, const Codebook& cb,
                        const std::map<std::string, ImaginationSet>& ims,
                        ActMode mode, uint64_t eval_seed,
                        std::vector<Rollout>* rollouts,
                        std::vector<const HouseGraph*>* houses) {
    return eval_split(model, data, data.val_unseen, cb, ims, mode, eval_seed,
                      0, rollouts, houses);
  };

  const auto grid_start = std::chrono::steady_clock::now();
  auto seconds_since = [](std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  for (const Variant& v : variants) {
    const auto variant_start = std::chrono::steady_clock::now();
    double sum_sr = 0.0, sum_spl = 0.0, sum_rgs = 0.0;
    std::vector<double> per_seed;
    for (int64_t s : seeds) {
      Rng root = Rng(seed).child("ablate." + v.name, static_cast<uint64_t>(s));
      AgentConfig acfg = base_acfg;
      acfg.use_layout = v.use_layout;
      acfg.use_dreamer = v.use_dreamer;
      acfg.layout_head = v.layout_head;
      const Codebook cb =
          make_codebook(v.cb_variant, table, cfg, root.child("codebook").next_u64());
      const auto ims = make_ims(acfg, table, data, root.child("imagine").next_u64());
      LadModel model(acfg, root.child("model").next_u64());

      TrainData td;
      td.houses = &data.houses;
      td.train = &data.train;
      td.val_seen = &data.val_seen;
      td.val_unseen = &data.val_unseen;
      td.codebook = &cb;
      td.imaginations = &ims;

      const std::string run_dir =
          out + "/" + v.name + "-s" + std::to_string(s);
      TrainConfig wc = TrainConfig::from_config(cfg, Stage::kWarmup);
      wc.seed = root.child("warmup").next_u64();
      wc.threads = resolve_threads(rc, wc.threads);
      TrainResult wres = train(Stage::kWarmup, model, td, wc, run_dir + "/warmup");
      load_params(wres.best_checkpoint, model.params());

      TrainConfig dc = TrainConfig::from_config(cfg, Stage::kDagger);
      dc.seed = root.child("dagger").next_u64();
      dc.threads = wc.threads;
      TrainResult dres = train(Stage::kDagger, model, td, dc, run_dir + "/dagger");
      load_params(dres.best_checkpoint, model.params());

      std::vector<Rollout> rollouts;
      std::vector<const HouseGraph*> houses;
      const bool want_curve = v.name == "full" && acfg.use_layout;
      SplitMetrics m = eval_model(model, cb, ims, ActMode::kGreedy,
                                  root.child("eval").next_u64(),
                                  want_curve ? &rollouts : nullptr,
                                  want_curve ? &houses : nullptr);
      if (want_curve) {
        const std::vector<double> curve =
            room_accuracy_by_step(rollouts, houses, acfg.max_steps);
        if (fig_curve.size() < curve.size()) fig_curve.resize(curve.size(), 0.0);
        for (size_t t = 0; t < curve.size(); ++t) fig_curve[t] += curve[t];
        fig_runs += 1;
      }
      sum_sr += m.sr.mean;
      sum_spl += m.spl.mean;
      sum_rgs += m.rgs.mean;
      per_seed.push_back(m.sr.mean);
      machine.set_double("grid." + v.name + ".seed" + std::to_string(s) + ".sr",
                         m.sr.mean);
      std::cout << "ablate: " << v.name << " seed " << s << " val-unseen sr="
                << fmt6(m.sr.mean) << "\n";
    }
    const double n = static_cast<double>(seeds.size());
    machine.set_double("grid." + v.name + ".sr", sum_sr / n);
    machine.set_double("grid." + v.name + ".spl", sum_spl / n);
    machine.set_double("grid." + v.name + ".rgs", sum_rgs / n);
    timings.set_double("grid." + v.name + ".seconds",
                       seconds_since(variant_start));
    report << "row=" << v.name << " sr=" << fmt6(sum_sr / n)
           << " spl=" << fmt6(sum_spl / n) << " rgs=" << fmt6(sum_rgs / n)
           << " per-seed=";
    for (size_t i = 0; i < per_seed.size(); ++i)
      report << (i ? "," : "") << fmt6(per_seed[i]);
    report << "\n";
  }

  // Untrained reference: uniform-random choice among legal actions.
  {
    const auto walk_start = std::chrono::steady_clock::now();
    double sum_sr = 0.0;
    for (int64_t s : seeds) {
      Rng root = Rng(seed).child("ablate.random-walk", static_cast<uint64_t>(s));
      const Codebook cb =
          make_codebook("visual", table, cfg, root.child("codebook").next_u64());
      const auto ims =
          make_ims(base_acfg, table, data, root.child("imagine").next_u64());
      LadModel model(base_acfg, root.child("model").next_u64());
      SplitMetrics m = eval_model(model, cb, ims, ActMode::kRandom,
                                  root.child("eval").next_u64(), nullptr, nullptr);
      machine.set_double("grid.random-walk.seed" + std::to_string(s) + ".sr",
                         m.sr.mean);
      sum_sr += m.sr.mean;
    }
    machine.set_double("grid.random-walk.sr",
                       sum_sr / static_cast<double>(seeds.size()));
    timings.set_double("grid.random-walk.seconds", seconds_since(walk_start));
    report << "row=random-walk sr="
           << fmt6(sum_sr / static_cast<double>(seeds.size())) << "\n";
  }
  timings.set_double("grid.total.seconds", seconds_since(grid_start));
  write_file(out + "/timings.cfg", timings.serialize());

  if (fig_runs > 0) {
    report << "\nroom accuracy by step (full variant):\n";
    for (size_t t = 0; t < fig_curve.size(); ++t) {
      const double acc = fig_curve[t] / fig_runs;
      machine.set_double("fig.step" + std::to_string(t + 1) + ".acc", acc);
      report << "t=" << (t + 1) << " acc=" << fmt6(acc) << "\n";
    }
  }

  write_file(out + "/ablation.txt", report.str());
  write_file(out + "/ablation.cfg", machine.serialize());

  RunManifest man;
  man.subcommand = "ablate";
  man.seed = seed;
  man.threads = resolve_threads(rc, 1);
  man.config = cfg;
  note_dataset_input(man, data_dir);
  note_output(man, out, "ablation.txt");
  note_output(man, out, "ablation.cfg");
  man.write(manifest_path(out, man.subcommand));
  std::cout << report.str();
  return 0;
}

// ---------------------------------------------------------------------------
// Self test

struct ChainHouse {
  HouseGraph house;
  Episode ep;

  explicit ChainHouse(const FeatureTable& table, int n) {
    house.house_id = "selftest-chain";
    house.split = "test";
    house.num_rooms = table.num_rooms;
    house.num_sectors = 4;
    house.dim = table.dim;
    for (int i = 0; i < n; ++i) {
      NavNode node;
      node.id = i;
      node.x = 4.0 * i;
      node.y = 0.0;
      node.room_type = i % table.num_rooms;
      node.views.resize(4);
      for (int s = 0; s < 4; ++s) {
        node.views[static_cast<size_t>(s)].resize(static_cast<size_t>(table.dim));
        for (int k = 0; k < table.dim; ++k)
          node.views[static_cast<size_t>(s)][static_cast<size_t>(k)] =
              0.1 * (i + 1) + 0.05 * s + 0.01 * k;
      }
      if (i > 0) node.neighbors.push_back(i - 1);
      if (i + 1 < n) node.neighbors.push_back(i + 1);
      house.nodes.push_back(node);
    }
    for (int i = 0; i + 1 < n; ++i)
      house.edges.push_back({i, i + 1, 4.0});
    for (int c = 0; c < 2; ++c) {
      ObjectInstance obj;
      obj.object_class = c;
      obj.sector = c;
      obj.feature = table.object_feat[static_cast<size_t>(c)];
      house.nodes[static_cast<size_t>(n - 1)].objects.push_back(obj);
    }
    ep.episode_id = "selftest-ep";
    ep.house_id = house.house_id;
    ep.start = 0;
    ep.goal = n - 1;
    ep.target_object_index = 0;
    ep.target_object_class = 0;
    ep.tokens = {2, 41, 49};
    ep.gold_path.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) ep.gold_path[static_cast<size_t>(i)] = i;
    ep.gold_length = 4.0 * (n - 1);
  }
};

bool check_op_gradients(std::string& msg) {
  Rng rng(31);
  auto mat = [&](int64_t r, int64_t c) {
    std::vector<double> v(static_cast<size_t>(r * c));
    for (double& x : v) x = rng.normal(0.0, 0.8);
    return Tensor::leaf({r, c}, std::move(v), true);
  };
  Tensor a = mat(3, 4), b = mat(3, 4), c = mat(4, 5);
  Tensor g = mat(1, 4), bias = mat(1, 4);
  Tensor wq = mat(4, 4), wk = mat(4, 4), wv = mat(4, 4), wo = mat(4, 4);
  Tensor zb = Tensor::zeros({4}, true);

  struct OpCase {
    const char* name;
    std::function<Tensor()> f;
    std::vector<Tensor> inputs;
  };
  std::vector<uint8_t> mask = {1, 0, 1, 1, 1, 1, 0, 1, 0, 1, 1, 1};
  const std::vector<OpCase> cases = {
      {"add", [&] { return sum_all(mul(add(a, b), b)); }, {a, b}},
      {"sub", [&] { return sum_all(mul(sub(a, b), a)); }, {a, b}},
      {"mul", [&] { return sum_all(mul(mul(a, b), a)); }, {a, b}},
      {"matmul", [&] { return sum_all(mul(matmul(a, c), matmul(a, c))); }, {a, c}},
      {"gelu", [&] { return sum_all(mul(gelu(a), b)); }, {a}},
      {"sigmoid", [&] { return sum_all(mul(sigmoid(a), b)); }, {a}},
      {"tanh", [&] { return sum_all(mul(tanh_t(a), b)); }, {a}},
      {"layer_norm",
       [&] {
         return sum_all(mul(layer_norm(a, reshape(g, {4}), reshape(bias, {4})), b));
       },
       {a, g, bias}},
      {"softmax", [&] { return sum_all(mul(softmax(a), b)); }, {a}},
      {"masked_softmax", [&] { return sum_all(mul(softmax(a, &mask), b)); }, {a}},
      {"cross_entropy", [&] { return cross_entropy(a, {1, 3, 0}); }, {a}},
      {"gather_rows",
       [&] { return sum_all(mul(gather_rows(a, {2, 0}), gather_rows(b, {1, 2}))); },
       {a}},
      {"mean_rows",
       [&] { return sum_all(mul(mean_rows(a), reshape(g, {4}))); },
       {a}},
      {"attention",
       [&] {
         return sum_all(mul(
             multi_head_attention(a, b, b, 2, wq, zb, wk, zb, wv, zb, wo, zb), a));
       },
       {a, b, wq, wk, wv, wo}},
  };
  for (const OpCase& op : cases) {
    std::string worst;
    const double err = grad_check(op.f, op.inputs, 1e-5, -1, 0, 1e-6, &worst);
    if (err > 1e-5) {
      msg = std::string(op.name) + " rel err " + fmt6(err) + " (" + worst + ")";
      return false;
    }
  }
  return true;
}

bool check_end_to_end_gradients(std::string& msg) {
  const FeatureTable table = FeatureTable::build(8, 16, 8, 9001);
  const Codebook cb = build_textual_codebook(table);
  const ChainHouse world(table, 5);
  AgentConfig acfg;
  acfg.hidden = 16;
  acfg.heads = 2;
  acfg.lang_layers = 1;
  acfg.cross_layers = 1;
  acfg.vis_layers = 1;
  acfg.gasa_layers = 1;
  acfg.ffn_mult = 2;
  acfg.max_steps = 8;
  acfg.im_count = 3;
  acfg.vis_dim = 8;
  LadModel model(acfg, 12);
  const auto ims = imagine_for({world.ep}, table, 3, 0.1, 5);
  const Tensor im = LadModel::imagination_tensor(ims.at(world.ep.episode_id));

  auto f = [&]() {
    TopoMap map;
    const Tensor lang = model.encode_instruction(world.ep.tokens);
    Tensor total = Tensor::scalar(0.0);
    for (size_t i = 0; i < world.ep.gold_path.size(); ++i) {
      const int node = world.ep.gold_path[i];
      const Observation obs = observe(world.house, node);
      auto [views, objects] = model.fuse_local_visuals(obs);
      update_topo_map(map, obs, static_cast<int>(i) + 1, views, objects);
      StepDecision d = model.forward_step(map, static_cast<int>(i) + 1, lang,
                                          cb, im, objects);
      const bool at_goal = node == world.ep.goal;
      const int64_t target =
          at_goal ? 0 : 1 + map.index_of(world.ep.gold_path[i + 1]);
      total = add(total, cross_entropy(d.dsap_logits, {target}, &d.dsap_mask));
      std::vector<int64_t> rooms;
      for (int id : d.order)
        rooms.push_back(world.house.nodes[static_cast<size_t>(id)].room_type);
      total = add(total, cross_entropy(d.layout, rooms));
      if (!at_goal && d.im_logits.defined())
        total = add(total, cross_entropy(d.im_logits, {target - 1}, &d.im_mask));
      if (at_goal)
        total = add(total,
                    cross_entropy(d.og_scores, {world.ep.target_object_index}));
    }
    return total;
  };
  std::vector<Tensor> inputs;
  for (auto& [name, t] : model.params().items()) inputs.push_back(t);
  std::string worst;
  const double err = grad_check(f, inputs, 1e-5, 2, 9, 1e-4, &worst);
  if (err > 1e-4) {
    msg = "end-to-end rel err " + fmt6(err) + " (" + worst + ")";
    return false;
  }
  return true;
}

// Exhaustive min-length simple path by depth-first enumeration.
double brute_force_shortest(const Adjacency& adj, int from, int to,
                            std::set<int>& visited) {
  if (from == to) return 0.0;
  visited.insert(from);
  double best = std::numeric_limits<double>::infinity();
  auto it = adj.find(from);
  if (it != adj.end())
    for (const auto& [next, w] : it->second)
      if (!visited.count(next)) {
        const double rest = brute_force_shortest(adj, next, to, visited);
        best = std::min(best, w + rest);
      }
  visited.erase(from);
  return best;
}

bool check_planner(std::string& msg) {
  GenConfig g;
  g.nodes_min = 6;
  g.nodes_max = 12;
  g.dim = 8;
  g.transition = default_transition_matrix();
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    const HouseGraph house =
        generate_house(g, 1000 + static_cast<uint64_t>(trial), "st", "test");
    const Adjacency adj = full_adjacency(house);
    const int n = static_cast<int>(house.nodes.size());
    const int a = static_cast<int>(rng.uniform_int(0, n - 1));
    const int b = static_cast<int>(rng.uniform_int(0, n - 1));
    const PlanResult plan = dijkstra_plan(adj, a, b);
    std::set<int> visited;
    const double brute = brute_force_shortest(adj, a, b, visited);
    if (!plan.reachable) {
      msg = "trial " + std::to_string(trial) + ": planner says unreachable";
      return false;
    }
    if (std::abs(plan.length - brute) > 1e-9) {
      msg = "trial " + std::to_string(trial) + ": planner " + fmt6(plan.length) +
            " vs exhaustive " + fmt6(brute);
      return false;
    }
  }
  return true;
}

bool check_metric_formulas(std::string& msg) {
  GenConfig g;
  g.nodes_min = 8;
  g.nodes_max = 12;
  g.dim = 8;
  g.transition = default_transition_matrix();
  const HouseGraph house = generate_house(g, 4242, "st-metrics", "test");
  const Adjacency adj = full_adjacency(house);
  Rng rng(99);
  Episode ep;
  ep.episode_id = "st";
  ep.house_id = house.house_id;
  int count = 0;
  for (int trial = 0; trial < 400 && count < 60; ++trial) {
    const int start = static_cast<int>(rng.uniform_int(
        0, static_cast<int64_t>(house.nodes.size()) - 1));
    int goal = start;
    while (goal == start)
      goal = static_cast<int>(rng.uniform_int(
          0, static_cast<int64_t>(house.nodes.size()) - 1));
    const PlanResult gold = dijkstra_plan(adj, start, goal);
    if (!gold.reachable || gold.path.size() < 2) continue;
    if (house.nodes[static_cast<size_t>(goal)].objects.empty()) continue;
    ep.start = start;
    ep.goal = goal;
    ep.gold_path = gold.path;
    ep.gold_length = gold.length;
    ep.target_object_index = 0;

    // Random walk along true edges.
    Rollout roll;
    roll.path = {start};
    int cur = start;
    const int hops = static_cast<int>(rng.uniform_int(1, 6));
    double tl = 0.0;
    for (int h = 0; h < hops; ++h) {
      const auto& nbrs = adj.at(cur);
      const auto& [next, w] =
          nbrs[static_cast<size_t>(rng.uniform_int(
              0, static_cast<int64_t>(nbrs.size()) - 1))];
      tl += w;
      cur = next;
      roll.path.push_back(cur);
    }
    roll.end_node = cur;
    roll.selected_object =
        house.nodes[static_cast<size_t>(cur)].objects.empty()
            ? -1
            : static_cast<int>(rng.uniform_int(
                  0, static_cast<int64_t>(
                         house.nodes[static_cast<size_t>(cur)].objects.size()) -
                         1));
    const EpisodeScore s = score_episode(roll, ep, house);

    auto dist = [&](int u, int v) {
      const NavNode& nu = house.nodes[static_cast<size_t>(u)];
      const NavNode& nv = house.nodes[static_cast<size_t>(v)];
      return std::hypot(nu.x - nv.x, nu.y - nv.y);
    };
    const double sr = dist(cur, goal) < 3.0 ? 1.0 : 0.0;
    double osr = 0.0;
    for (int nd : roll.path)
      if (dist(nd, goal) < 3.0) osr = 1.0;
    const double spl = sr * ep.gold_length / std::max(tl, ep.gold_length);
    const double rgs =
        (sr == 1.0 && cur == goal && roll.selected_object == 0) ? 1.0 : 0.0;
    const double rgspl = rgs * ep.gold_length / std::max(tl, ep.gold_length);
    const bool ok = std::abs(s.tl - tl) <= 1e-9 && s.sr == sr && s.osr == osr &&
                    std::abs(s.spl - spl) <= 1e-12 && s.rgs == rgs &&
                    std::abs(s.rgspl - rgspl) <= 1e-12;
    const bool ordered = s.spl <= s.sr + 1e-12 && s.rgspl <= s.rgs + 1e-12 &&
                         s.rgs <= s.sr && s.sr <= s.osr;
    if (!ok || !ordered) {
      msg = "trajectory " + std::to_string(count) + " disagrees with the formulas";
      return false;
    }
    ++count;
  }
  if (count < 60) {
    msg = "only " + std::to_string(count) + " usable trajectories";
    return false;
  }
  return true;
}

bool check_codebook(std::string& msg) {
  const FeatureTable table = FeatureTable::build(8, 16, 16, 9001);
  const Codebook textual = build_textual_codebook(table);
  CodebookConfig cc;
  cc.n_samples = 40;
  cc.entries_per_room = 3;
  cc.sigma = 0.05;
  const Codebook visual = build_room_codebook(table, cc, 5);
  for (int r = 0; r < table.num_rooms; ++r) {
    for (const Codebook* cb : {&textual, &visual}) {
      const std::vector<double> scores = room_scores(table.room_proto[
          static_cast<size_t>(r)], *cb);
      const auto best = std::max_element(scores.begin(), scores.end());
      if (static_cast<int>(best - scores.begin()) != r) {
        msg = "room " + std::to_string(r) + " prototype scored against room " +
              std::to_string(static_cast<int>(best - scores.begin()));
        return false;
      }
    }
  }
  return true;
}

bool check_config_roundtrip(std::string& msg) {
  Config c;
  c.set("agent.hidden", "64");
  c.set_double("warmup.lr", 5e-5);
  c.set_bool("agent.use_dreamer", true);
  c.set("data.note", "none");
  const Config back = Config::parse(c.serialize());
  if (back.entries() != c.entries()) {
    msg = "serialize/parse does not round trip";
    return false;
  }
  return true;
}

bool check_checkpoint_roundtrip(std::string& msg) {
  const std::string dir =
      (std::filesystem::temp_directory_path() / "lad-selftest").string();
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/roundtrip.ckpt";
  Rng rng(3);
  std::vector<std::pair<std::string, Tensor>> entries;
  std::vector<double> v(24);
  for (double& x : v) x = rng.normal();
  entries.emplace_back("a.w", Tensor::leaf({4, 6}, v, false));
  entries.emplace_back("b", Tensor::leaf({24}, v, false));
  save_tensors(path, entries);
  const auto loaded = load_tensors(path);
  if (loaded.size() != 2 || loaded[0].first != "a.w" ||
      loaded[0].second.vals() != v || loaded[1].second.vals() != v) {
    msg = "tensor container does not round trip";
    return false;
  }
  save_tensors(path + ".again", entries);
  if (digest_file(path) != digest_file(path + ".again")) {
    msg = "container bytes differ across identical saves";
    return false;
  }
  return true;
}

int cmd_selftest(const RunConfig&) {
  struct Check {
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const std::vector<Check> checks = {
      {"op gradients vs central finite differences", check_op_gradients},
      {"episode gradients end-to-end (5-node chain)", check_end_to_end_gradients},
      {"planner vs exhaustive path enumeration", check_planner},
      {"metric formulas vs independent implementation", check_metric_formulas},
      {"codebook scores identify their room", check_codebook},
      {"config serialize/parse round trip", check_config_roundtrip},
      {"checkpoint container round trip", check_checkpoint_roundtrip},
  };
  bool all_ok = true;
  for (const Check& c : checks) {
    std::string msg;
    bool ok = false;
    try {
      ok = c.fn(msg);
    } catch (const std::exception& e) {
      msg = e.what();
    }
    std::cout << (ok ? "[ok]   " : "[FAIL] ") << c.name;
    if (!ok) std::cout << ": " << msg;
    std::cout << "\n";
    all_ok = all_ok && ok;
  }
  std::cout << (all_ok ? "selftest passed\n" : "selftest FAILED\n");
  return all_ok ? 0 : 1;
}

int dispatch(const RunConfig& rc);

int cmd_rerun(const RunConfig& rc) {
  const std::string& man_path = require_path(rc, "manifest");
  const std::string& out = require_path(rc, "out");
  const RunManifest man = RunManifest::load(man_path);

  for (const auto& [name, path] : man.input_paths) {
    const std::string now =
        name == "data" ? digest_dataset(path) : digest_file(path);
    LAD_CHECK(now == man.input_digests.at(name), "rerun: input '", name,
              "' at ", path, " changed since the manifest was written");
  }

  RunConfig sub;
  sub.subcommand = man.subcommand;
  sub.has_seed = true;
  sub.seed = man.seed;
  sub.threads = man.threads;
  sub.overrides = man.config;
  sub.paths = man.input_paths;
  sub.paths["out"] = out;
  const int code = dispatch(sub);
  if (code != 0) return code;

  const RunManifest redo = RunManifest::load(manifest_path(out, man.subcommand));
  bool identical = redo.output_digests == man.output_digests;
  if (!identical) {
    std::cerr << "rerun: outputs differ from the manifest:\n";
    for (const auto& [file, digest] : man.output_digests) {
      auto it = redo.output_digests.find(file);
      const std::string now = it == redo.output_digests.end() ? "<missing>"
                                                              : it->second;
      if (now != digest)
        std::cerr << "  " << file << ": " << digest << " -> " << now << "\n";
    }
    return 1;
  }
  std::cout << "rerun: " << man.subcommand << " reproduced "
            << man.output_digests.size() << " outputs bit-identically\n";
  return 0;
}

int dispatch(const RunConfig& rc) {
  if (rc.subcommand == "gen-data") return cmd_gen_data(rc);
  if (rc.subcommand == "build-codebook") return cmd_build_codebook(rc);
  if (rc.subcommand == "imagine") return cmd_imagine(rc);
  if (rc.subcommand == "warmup") return cmd_train_stage(rc, Stage::kWarmup);
  if (rc.subcommand == "dagger") return cmd_train_stage(rc, Stage::kDagger);
  if (rc.subcommand == "eval") return cmd_eval(rc);
  if (rc.subcommand == "trace") return cmd_trace(rc);
  if (rc.subcommand == "ablate") return cmd_ablate(rc);
  if (rc.subcommand == "selftest") return cmd_selftest(rc);
  if (rc.subcommand == "rerun") return cmd_rerun(rc);
  throw UsageError("unknown subcommand '" + rc.subcommand + "'");
}

}  // namespace

// ---------------------------------------------------------------------------

RunConfig RunConfig::parse(const std::vector<std::string>& args) {
  if (args.empty()) throw UsageError("missing subcommand");
  RunConfig rc;
  rc.subcommand = args[0];
  if (!rc.subcommand.empty() && rc.subcommand[0] == '-')
    throw UsageError("expected a subcommand before flags");

  const std::set<std::string> path_flags = {"out",      "data",        "codebook",
                                            "init",     "episodes",    "imaginations",
                                            "manifest"};
  bool threads_given = false;
  for (size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + a + "'");
    const std::string flag = a.substr(2);
    auto value = [&]() -> const std::string& {
      if (i + 1 >= args.size()) throw UsageError("flag --" + flag + " needs a value");
      return args[++i];
    };
    if (path_flags.count(flag)) {
      rc.paths[flag] = value();
    } else if (flag == "config") {
      rc.config_path = value();
    } else if (flag == "seed") {
      rc.seed = parse_u64(value(), "--seed");
      rc.has_seed = true;
    } else if (flag == "threads") {
      rc.threads = parse_int(value(), "--threads");
      if (rc.threads < 1) throw UsageError("--threads must be at least 1");
      threads_given = true;
    } else if (flag == "set") {
      const std::string& kv = value();
      const size_t eq = kv.find('=');
      if (eq == std::string::npos || eq == 0)
        throw UsageError("--set expects key=value, got '" + kv + "'");
      rc.overrides.set(kv.substr(0, eq), kv.substr(eq + 1));
    } else if (flag == "episode") {
      rc.episode_id = value();
    } else if (flag == "split") {
      rc.split = value();
    } else if (flag == "mode") {
      rc.mode = value();
    } else {
      throw UsageError("unknown flag --" + flag);
    }
  }
  if (!threads_given) {
    const char* env = std::getenv("LAD_THREADS");
    if (env && *env) {
      rc.threads = parse_int(env, "LAD_THREADS");
      if (rc.threads < 1) throw UsageError("LAD_THREADS must be at least 1");
    } else {
      rc.threads = 0;  // defer to config
    }
  }
  return rc;
}

void RunManifest::write(const std::string& path) const {
  Config m;
  m.set("manifest.subcommand", subcommand);
  m.set_int("manifest.seed", static_cast<int64_t>(seed));
  m.set_int("manifest.threads", threads);
  for (const auto& [k, v] : config.entries()) m.set("cfg." + k, v);
  for (const auto& [name, p] : input_paths) {
    m.set("input." + name + ".path", p);
    m.set("input." + name + ".digest", input_digests.at(name));
  }
  for (const auto& [file, digest] : output_digests) m.set("output." + file, digest);
  write_file(path, m.serialize());
}

RunManifest RunManifest::load(const std::string& path) {
  const Config m = Config::load(path);
  RunManifest r;
  r.subcommand = m.get_str("manifest.subcommand");
  r.seed = static_cast<uint64_t>(m.get_int("manifest.seed"));
  r.threads = static_cast<int>(m.get_int("manifest.threads", 1));
  for (const auto& [key, value] : m.entries()) {
    if (key.rfind("cfg.", 0) == 0) {
      r.config.set(key.substr(4), value);
    } else if (key.rfind("input.", 0) == 0) {
      const std::string rest = key.substr(6);
      const size_t dot = rest.find('.');
      LAD_CHECK(dot != std::string::npos, "manifest: malformed key ", key);
      const std::string name = rest.substr(0, dot);
      const std::string field = rest.substr(dot + 1);
      if (field == "path")
        r.input_paths[name] = value;
      else if (field == "digest")
        r.input_digests[name] = value;
      else
        fail("manifest: malformed key ", key);
    } else if (key.rfind("output.", 0) == 0) {
      r.output_digests[key.substr(7)] = value;
    }
  }
  return r;
}

std::string usage_text() {
  return
      "usage: lad <subcommand> [flags]\n"
      "\n"
      "subcommands:\n"
      "  gen-data        --config <file> --seed <n> --out <dir>\n"
      "  build-codebook  --config <file> --seed <n> --out <dir>\n"
      "  imagine         --config <file> --seed <n> --episodes <file> --out <dir>\n"
      "  warmup          --config <file> --seed <n> --data <dir> --codebook <file>\n"
      "                  --out <dir> [--init <ckpt>] [--threads <n>]\n"
      "  dagger          like warmup, plus --init <ckpt> (required)\n"
      "  eval            --config <file> --seed <n> --data <dir> --codebook <file>\n"
      "                  --init <ckpt> --out <dir> [--split <s>] [--mode <m>]\n"
      "  trace           like eval, plus --episode <id>\n"
      "  ablate          --config <file> --seed <n> --data <dir> --out <dir>\n"
      "  selftest        gradient checks and oracle suites\n"
      "  rerun           --manifest <file> --out <dir>\n"
      "\n"
      "flags:\n"
      "  --set key=value  override a config entry (repeatable)\n"
      "  --threads <n>    worker threads (default: LAD_THREADS, then config, then 1)\n"
      "  --seed <n>       mandatory for every randomized subcommand\n"
      "\n"
      "exit codes: 0 success, 1 runtime or invariant failure, 2 usage error\n";
}

int run_cli(const std::vector<std::string>& args) {
  for (const std::string& a : args)
    if (a == "--help" || a == "help") {
      std::cout << usage_text();
      return 0;
    }
  try {
    return dispatch(RunConfig::parse(args));
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << usage_text();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lad
