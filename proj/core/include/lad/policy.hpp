#pragma once

#include <vector>

#include "lad/agent.hpp"

namespace lad {

enum class ActMode { kGreedy, kSample, kTeacher, kRandom };

struct RolloutOptions {
  ActMode mode = ActMode::kGreedy;
  double teacher_beta = -1.0;  // in [0,1]: per-step chance of teacher action
  int max_steps = -1;          // decision budget; -1 = model config value
};

struct StepRecord {
  int node = -1;    // current node at decision time
  int action = -1;  // -1 = stop, else target node id
  int label = -2;   // -1 = stop, -2 = unavailable, else a frontier node id
  bool forced_stop = false;
  std::vector<int> segment;  // nodes walked after the decision
  StepDecision decision;
  Tensor fused_objects;             // empty when the node has no objects
  std::vector<int> object_classes;  // object classes at the node
};

struct Rollout {
  std::vector<StepRecord> steps;
  std::vector<int> path;  // walked node sequence including the start
  bool stopped = false;
  int end_node = -1;
  int selected_object = -1;  // index into the end node's object list
  int selected_class = -1;
  double walked_length = 0.0;
  TopoMap map;
};

// Mutable per-episode rollout state; the language encoding happens once here.
struct EpisodeState {
  const HouseGraph* house = nullptr;
  const Episode* episode = nullptr;
  TopoMap map;
  Tensor lang;
  Tensor im;  // imagination features; empty tensor iff the dreamer is off
  int t = 1;
  int current = -1;
  bool done = false;
  double walked_length = 0.0;
  std::vector<int> path;
};

EpisodeState start_episode(const LadModel& model, const HouseGraph& house,
                           const Episode& ep, const ImaginationSet& im);

// Teacher label for the current state: stop at the goal, otherwise the first
// unvisited node on the shortest-path chain to the goal, -2 when the chain
// holds none (only possible after wandering past a visited goal).
int teacher_label(const HouseGraph& house, const Episode& ep, const TopoMap& map,
                  int current);

// One full decision step: observe, fuse, update the map, run the model,
// choose an action, and execute it (multi-hop targets walk the known-graph
// shortest path). Deterministic for greedy/teacher modes.
StepRecord policy_step(const LadModel& model, EpisodeState& state,
                       const Codebook& cb, const RolloutOptions& opt, Rng& rng);

Rollout run_episode(const LadModel& model, const HouseGraph& house,
                    const Episode& ep, const Codebook& cb,
                    const ImaginationSet& im, const RolloutOptions& opt, Rng& rng);

}  // namespace lad
