#pragma once

#include <map>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lad/env.hpp"
#include "lad/tensor.hpp"

namespace lad {

enum class NodeStatus { kCurrent, kVisited, kFrontier };

// One node of the agent's incremental map. Visual reps are tape tensors so
// gradients reach the visual fusion stack through every later read.
struct MapNode {
  int id = -1;  // simulator node id
  NodeStatus status = NodeStatus::kFrontier;
  Tensor rep;          // visual representation, rank-1
  Tensor partial_sum;  // running sum of partial views while a frontier node
  int partial_count = 0;
  double x = 0.0, y = 0.0;  // position in the frame of the episode start
  int last_step = 0;        // 0 until first visited
};

// Incremental topological memory: one current node, visited interior,
// frontier boundary, and the subgraph of observed edges.
struct TopoMap {
  std::vector<MapNode> nodes;  // insertion order, stable across updates
  Adjacency adj;               // observed edges with true lengths
  std::unordered_map<int, int> index;  // node id -> position in `nodes`
  int current = -1;

  bool empty() const { return nodes.empty(); }
  int size() const { return static_cast<int>(nodes.size()); }
  bool has(int id) const { return index.count(id) > 0; }
  int index_of(int id) const;
  const MapNode& at(int id) const { return nodes[static_cast<size_t>(index_of(id))]; }
  MapNode& at(int id) { return nodes[static_cast<size_t>(index_of(id))]; }
  int frontier_count() const;
  std::vector<int> frontier_ids() const;
};

// Folds one observation into the map. `fused_views` has one row per sector
// and `fused_objects` one row per object at the observed node; the observed
// node becomes current with a pooled rep, newly seen neighbors join as
// frontier nodes whose rep is the running mean of the sector views that have
// faced them, and previously visited reps stay untouched.
void update_topo_map(TopoMap& map, const Observation& obs, int step,
                     const Tensor& fused_views, const Tensor& fused_objects);

// Pairwise hop-distance buckets {0,1,2,3+} over the map plus a leading stop
// row connected to every node, flattened row-major over (1+n)^2 entries.
std::vector<int64_t> hop_buckets(const TopoMap& map);

}  // namespace lad
