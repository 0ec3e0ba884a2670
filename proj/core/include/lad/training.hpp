#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lad/agent.hpp"
#include "lad/codebook.hpp"
#include "lad/config.hpp"
#include "lad/dataset.hpp"
#include "lad/policy.hpp"

namespace lad {

enum class Stage { kWarmup, kDagger };

// One optimization stage's knobs; defaults depend on the stage (warmup:
// 5000 iterations, batch 8, lr 5e-5; dagger: 3000 iterations, batch 4,
// lr 1e-5). Loss weights default to 1 (the objective is an unweighted sum).
struct TrainConfig {
  int iterations = 0;
  int batch_size = 0;
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double w_mlm = 1.0, w_mrc = 1.0, w_og = 1.0, w_lp = 1.0, w_d = 1.0,
         w_dsap = 1.0;
  double dagger_beta0 = 0.95;  // per-epoch decay base of the teacher coin
  int iters_per_epoch = 0;     // 0: derive as ceil(train episodes / batch)
  bool dagger_greedy = false;  // policy actions argmax instead of sampled
  int aux_text_per_batch = 2;  // items per batch that also run MLM and MRC
  int val_every = 250;         // iterations between validations (0: never)
  int patience = 10;           // validations without improvement before stop
  int val_episodes = 0;        // per-split cap (0: all)
  int max_steps = -1;          // rollout budget (-1: model default)
  int threads = 1;
  uint64_t seed = 1;

  static TrainConfig from_config(const Config& cfg, Stage stage);
  void validate() const;
};

// Read-only bundle of everything a stage consumes. `houses` must cover every
// split; `imaginations` maps episode id to its features (may be empty only
// when the model's dreamer is off).
struct TrainData {
  const HouseIndex* houses = nullptr;
  const std::vector<Episode>* train = nullptr;
  const std::vector<Episode>* val_seen = nullptr;    // optional
  const std::vector<Episode>* val_unseen = nullptr;  // optional
  const Codebook* codebook = nullptr;
  const std::map<std::string, ImaginationSet>* imaginations = nullptr;
};

// Precomputes destination imagination for every episode, keyed by episode
// id. Deterministic: each episode's draw seed mixes `seed` with its id.
std::map<std::string, ImaginationSet> imagine_for(
    const std::vector<Episode>& episodes, const FeatureTable& table, int count,
    double sigma, uint64_t seed);

// One teacher-forced training state: the map replayed along the gold path
// prefix of length `t` (1-based; t == path length means standing at the
// goal, where the gold action is stop). `aux_text` items additionally run
// the masked-token and masked-node passes, randomized by `aux_seed`.
struct WarmupItem {
  const HouseGraph* house = nullptr;
  const Episode* ep = nullptr;
  int t = 1;
  bool aux_text = false;
  uint64_t aux_seed = 0;
};

struct WarmupBatch {
  std::vector<WarmupItem> items;
};

WarmupBatch sample_warmup_batch(const TrainData& data, const TrainConfig& cfg,
                                Rng& rng);

// Batch loss scalars. Every component is the sum of per-item contributions
// divided by the item count, so items without a contribution (no goal state
// for OG, gold stop for D, no text pass) count as zero and `total` equals
// the weighted sum of the parts exactly.
struct WarmupLosses {
  Tensor mlm, mrc, og, lp, d, dsap;
  Tensor total;
  int items = 0;
  int og_items = 0;     // items standing at the goal
  int d_items = 0;      // items with a frontier target
  int text_items = 0;   // items that ran MLM and MRC
  int skipped_og = 0;   // non-goal items (no object supervision)
  int skipped_d = 0;    // goal items (gold action is stop)
};

WarmupLosses warmup_losses(const LadModel& model, const WarmupBatch& batch,
                           const Codebook& cb,
                           const std::map<std::string, ImaginationSet>& ims,
                           const TrainConfig& cfg);

// Mixture-policy rollouts labeled by the teacher at every visited state.
// Components follow the same sum-over-items / item-count convention.
struct DaggerLosses {
  Tensor og, lp, dsap;
  Tensor total;
  int episodes = 0;
  int steps = 0;      // decision states gathered across rollouts
  int og_steps = 0;   // states at the goal node
  std::vector<Rollout> rollouts;
};

DaggerLosses dagger_losses(const LadModel& model,
                           const std::vector<const HouseGraph*>& houses,
                           const std::vector<const Episode*>& episodes,
                           const Codebook& cb,
                           const std::map<std::string, ImaginationSet>& ims,
                           double beta, const TrainConfig& cfg, Rng& rng);

// Evaluates item_loss(i) for i in [0, n) with gradients enabled, runs
// reverse-mode accumulation on each returned scalar (undefined tensors are
// skipped), and reduces per-worker stores in worker order. Work is split
// contiguously across `threads` workers, so rollout/loss computations per i
// must be deterministic functions of i alone; results across different
// thread counts agree up to floating-point reassociation.
GradStore parallel_grad(int n, int threads,
                        const std::function<Tensor(int)>& item_loss);

struct TrainResult {
  std::vector<double> loss_history;  // batch total per iteration
  std::vector<std::string> log;      // metrics log lines, also written to disk
  std::string best_checkpoint;
  std::string last_checkpoint;
  double best_val_sr = -1.0;
  int best_iteration = -1;
  int iterations_run = 0;
  bool early_stopped = false;
};

// AdamW loop over warmup batches or DAgger rollouts with periodic greedy
// validation; keeps the checkpoint with the best val-unseen success rate
// (falling back to val-seen, then to the final parameters when no
// validation data exists). Writes metrics.log, best.ckpt, and last.ckpt
// under out_dir. A non-finite batch loss aborts with the offending
// iteration and episode ids.
TrainResult train(Stage stage, LadModel& model, const TrainData& data,
                  const TrainConfig& cfg, const std::string& out_dir);

}  // namespace lad
