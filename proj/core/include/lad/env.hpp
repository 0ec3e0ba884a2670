#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lad/config.hpp"
#include "lad/rng.hpp"

namespace lad {

// Shared, house-independent feature tables: one prototype vector per room
// type (unit norm), one feature vector per object class (norm 0.5), and the
// two high-frequency object classes of each room type.
struct FeatureTable {
  int num_rooms = 0;
  int num_objects = 0;
  int dim = 0;
  std::vector<std::vector<double>> room_proto;
  std::vector<std::vector<double>> object_feat;
  std::vector<std::vector<int>> high_freq;  // per room, 2 object classes

  static FeatureTable build(int num_rooms, int num_objects, int dim,
                            uint64_t seed);
};

struct GenConfig {
  int nodes_min = 12;
  int nodes_max = 30;
  int num_rooms = 8;    // K
  int num_sectors = 4;  // D headings
  int dim = 32;         // view feature dim d
  int num_objects = 16;
  int max_degree = 4;
  double edge_min = 4.0;
  double edge_max = 8.0;
  double min_separation = 3.2;
  double noise_sigma = 0.1;
  double object_prob = 0.9;        // each high-frequency object
  double extra_object_prob = 0.5;  // one uniformly random extra object
  double shortcut_prob = 0.25;     // per-node chance of one shortcut edge
  double shortcut_max_len = 10.0;
  uint64_t proto_seed = 9001;      // feature-table seed, shared across splits
  std::vector<double> transition;  // K*K row-stochastic, row-major

  static GenConfig from_config(const Config& cfg);
  void validate() const;
};

// Default hand-authored room transition prior for K=8. Bathrooms cluster
// next to bedrooms, dining rooms next to kitchens, hallways connect widely.
std::vector<double> default_transition_matrix();

struct ObjectInstance {
  int object_class = -1;
  int sector = 0;
  std::vector<double> feature;
};

struct NavNode {
  int id = -1;
  double x = 0.0, y = 0.0;
  int room_type = -1;
  std::vector<std::vector<double>> views;  // D x d
  std::vector<ObjectInstance> objects;
  std::vector<int> neighbors;  // sorted ascending
};

// Known-graph adjacency: node id -> (neighbor id, edge length), neighbor
// lists sorted by id. Works for full houses and for the agent's partial map.
using Adjacency = std::map<int, std::vector<std::pair<int, double>>>;

struct Edge {
  int a = -1, b = -1;  // a < b
  double length = 0.0;
};

struct HouseGraph {
  std::string house_id;
  std::string split;
  uint64_t seed = 0;
  int num_rooms = 0;
  int num_sectors = 0;
  int dim = 0;
  std::vector<NavNode> nodes;
  std::vector<Edge> edges;
};

struct Episode {
  std::string episode_id;
  std::string house_id;
  int start = -1;
  int goal = -1;
  int target_object_index = -1;
  int target_object_class = -1;
  std::vector<int> tokens;
  std::vector<int> gold_path;
  double gold_length = 0.0;
};

struct NeighborView {
  int id = -1;
  std::vector<double> view;  // the current node's sector view facing it
  double distance = 0.0;
  double heading = 0.0;  // bearing in [0, 2pi), 0 = east
};

struct Observation {
  int node = -1;
  std::vector<std::vector<double>> views;
  std::vector<ObjectInstance> objects;
  std::vector<NeighborView> neighbors;
};

struct EpisodeConfig {
  int hop_min = 4;
  int hop_max = 7;
  int max_retries = 200;

  static EpisodeConfig from_config(const Config& cfg);
  void validate() const;
};

struct PlanResult {
  bool reachable = false;
  std::vector<int> path;
  double length = 0.0;
};

HouseGraph generate_house(const GenConfig& cfg, uint64_t seed,
                          const std::string& house_id, const std::string& split);

Observation observe(const HouseGraph& house, int node_id);

// Heading sector of direction (dx, dy): sector 0 faces east, sectors advance
// counterclockwise, nearest-sector rounding.
int sector_of(double dx, double dy, int num_sectors);

Adjacency full_adjacency(const HouseGraph& house);
double edge_length(const HouseGraph& house, int a, int b);

// Shortest-path next hop toward goal: the neighbor minimizing edge length
// plus remaining distance, ties broken by smallest node id.
int teacher_next(const HouseGraph& house, int current, int goal);

// Dijkstra over a (possibly partial) graph. Ties between equal-length paths
// resolve to the lexicographically smallest node-id sequence. The returned
// length re-sums edge lengths along the path from `from` to `to`.
PlanResult dijkstra_plan(const Adjacency& adj, int from, int to);

// Distance from every reachable node to `src` (same relaxation order as
// dijkstra_plan). Unreachable nodes are absent from the result.
std::map<int, double> dijkstra_dist(const Adjacency& adj, int src);

Episode sample_episode(const HouseGraph& house, const EpisodeConfig& cfg,
                       Rng& rng, const std::string& episode_id);

}  // namespace lad
