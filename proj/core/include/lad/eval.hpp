#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lad/env.hpp"
#include "lad/policy.hpp"

namespace lad {

// Per-episode navigation and grounding metrics. Rates are 0/1 per episode
// and average to split-level scores.
struct EpisodeScore {
  std::string episode_id;
  double tl = 0.0;     // trajectory length in meters
  double sr = 0.0;     // stop within the success radius of the goal
  double osr = 0.0;    // any walked node within the radius ("oracle success")
  double spl = 0.0;    // success weighted by inverse path length
  double rgs = 0.0;    // success and the referred object identified
  double rgspl = 0.0;  // rgs weighted by inverse path length
};

// Scores one finished rollout against its episode. Walks the trajectory to
// recompute its length from true edge lengths and errors on any hop that is
// not an edge of the house or a start that differs from the episode's.
EpisodeScore score_episode(const Rollout& roll, const Episode& ep,
                           const HouseGraph& house, double success_radius = 3.0);

struct MetricSummary {
  double mean = 0.0;
  double ci_lo = 0.0;  // 95% bootstrap confidence interval
  double ci_hi = 0.0;
};

struct SplitMetrics {
  int count = 0;
  MetricSummary tl, sr, osr, spl, rgs, rgspl;
};

// Split means with seeded bootstrap confidence intervals (percentile method,
// `resamples` draws with replacement). Deterministic given the seed.
SplitMetrics aggregate(const std::vector<EpisodeScore>& rows, uint64_t seed,
                       int resamples = 1000);

// Fraction of map nodes whose argmax room score matches the true room type
// at decision step t (1-based), averaged over rollouts still alive at t.
// rolls[i] pairs with houses[i]; every step must carry layout predictions.
// Entry t-1 of the result corresponds to step t; `max_t` <= 0 sizes the
// curve to the longest rollout.
std::vector<double> room_accuracy_by_step(const std::vector<Rollout>& rolls,
                                          const std::vector<const HouseGraph*>& houses,
                                          int max_t = 0);

// Renders a metrics block: count and mean [ci_lo, ci_hi] per metric, one
// metric per line, fixed key order. Used by reports and logs.
std::string format_metrics(const std::string& title, const SplitMetrics& m);

}  // namespace lad
