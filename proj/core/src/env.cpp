#include "lad/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>

#include "lad/error.hpp"
#include "lad/vocab.hpp"

namespace lad {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

std::vector<double> random_unit(Rng& rng, int dim, double norm) {
  std::vector<double> v(static_cast<size_t>(dim));
  double n2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    n2 += x * x;
  }
  const double s = norm / std::sqrt(n2);
  for (double& x : v) x *= s;
  return v;
}

}  // namespace

FeatureTable FeatureTable::build(int num_rooms, int num_objects, int dim,
                                 uint64_t seed) {
  LAD_CHECK(num_rooms > 0 && num_objects > 0 && dim > 0,
            "feature table: bad sizes");
  FeatureTable t;
  t.num_rooms = num_rooms;
  t.num_objects = num_objects;
  t.dim = dim;
  Rng rng(seed);
  for (int k = 0; k < num_rooms; ++k)
    t.room_proto.push_back(random_unit(rng, dim, 1.0));
  for (int j = 0; j < num_objects; ++j)
    t.object_feat.push_back(random_unit(rng, dim, 0.5));
  // Object classes 2k and 2k+1 are the high-frequency pair of room k; spare
  // classes beyond 2*num_rooms belong to no room.
  for (int k = 0; k < num_rooms; ++k) {
    std::vector<int> pair;
    if (2 * k < num_objects) pair.push_back(2 * k);
    if (2 * k + 1 < num_objects) pair.push_back(2 * k + 1);
    LAD_CHECK(!pair.empty(), "feature table: room ", k,
              " has no high-frequency objects; need num_objects >= ",
              2 * k + 1);
    t.high_freq.push_back(std::move(pair));
  }
  return t;
}

std::vector<double> default_transition_matrix() {
  // Rows/columns: bedroom, bathroom, kitchen, living_room, dining_room,
  // office, hallway, garage.
  return {
      0.10, 0.45, 0.02, 0.08, 0.02, 0.05, 0.25, 0.03,  // bedroom
      0.60, 0.05, 0.02, 0.05, 0.02, 0.03, 0.20, 0.03,  // bathroom
      0.02, 0.02, 0.08, 0.12, 0.45, 0.03, 0.20, 0.08,  // kitchen
      0.10, 0.03, 0.12, 0.10, 0.15, 0.15, 0.30, 0.05,  // living_room
      0.03, 0.02, 0.45, 0.20, 0.05, 0.03, 0.20, 0.02,  // dining_room
      0.10, 0.03, 0.03, 0.25, 0.03, 0.10, 0.40, 0.06,  // office
      0.20, 0.10, 0.12, 0.20, 0.10, 0.10, 0.08, 0.10,  // hallway
      0.05, 0.02, 0.25, 0.08, 0.03, 0.05, 0.32, 0.20,  // garage
  };
}

GenConfig GenConfig::from_config(const Config& cfg) {
  GenConfig g;
  g.nodes_min = cfg.get_int("env.nodes_min", g.nodes_min);
  g.nodes_max = cfg.get_int("env.nodes_max", g.nodes_max);
  g.num_rooms = cfg.get_int("env.num_rooms", g.num_rooms);
  g.num_sectors = cfg.get_int("env.num_sectors", g.num_sectors);
  g.dim = cfg.get_int("env.dim", g.dim);
  g.num_objects = cfg.get_int("env.num_objects", g.num_objects);
  g.max_degree = cfg.get_int("env.max_degree", g.max_degree);
  g.edge_min = cfg.get_double("env.edge_min", g.edge_min);
  g.edge_max = cfg.get_double("env.edge_max", g.edge_max);
  g.min_separation = cfg.get_double("env.min_separation", g.min_separation);
  g.noise_sigma = cfg.get_double("env.noise_sigma", g.noise_sigma);
  g.object_prob = cfg.get_double("env.object_prob", g.object_prob);
  g.extra_object_prob =
      cfg.get_double("env.extra_object_prob", g.extra_object_prob);
  g.shortcut_prob = cfg.get_double("env.shortcut_prob", g.shortcut_prob);
  g.shortcut_max_len = cfg.get_double("env.shortcut_max_len", g.shortcut_max_len);
  g.proto_seed =
      static_cast<uint64_t>(cfg.get_int("env.proto_seed", static_cast<int64_t>(g.proto_seed)));
  g.transition = default_transition_matrix();
  const double sharpen = cfg.get_double("env.transition_sharpen", 1.0);
  if (sharpen != 1.0) {
    for (int i = 0; i < g.num_rooms; ++i) {
      double sum = 0.0;
      for (int j = 0; j < g.num_rooms; ++j) {
        double& p = g.transition[static_cast<size_t>(i * g.num_rooms + j)];
        p = std::pow(p, sharpen);
        sum += p;
      }
      for (int j = 0; j < g.num_rooms; ++j)
        g.transition[static_cast<size_t>(i * g.num_rooms + j)] /= sum;
    }
  }
  g.validate();
  return g;
}

void GenConfig::validate() const {
  LAD_CHECK(nodes_min >= 2 && nodes_max >= nodes_min, "gen config: bad node range [",
            nodes_min, ",", nodes_max, "]");
  LAD_CHECK(num_rooms > 0 && num_sectors > 0 && dim > 0 && num_objects > 0,
            "gen config: bad dimensions");
  LAD_CHECK(max_degree >= 2, "gen config: max_degree must be >= 2");
  LAD_CHECK(edge_min > 0 && edge_max >= edge_min, "gen config: bad edge range");
  LAD_CHECK(min_separation > 0 && min_separation <= edge_min,
            "gen config: min_separation must be in (0, edge_min]");
  LAD_CHECK(transition.size() ==
                static_cast<size_t>(num_rooms) * static_cast<size_t>(num_rooms),
            "gen config: transition matrix must be ", num_rooms, "x", num_rooms);
  for (int i = 0; i < num_rooms; ++i) {
    double sum = 0.0;
    for (int j = 0; j < num_rooms; ++j) {
      const double p = transition[static_cast<size_t>(i * num_rooms + j)];
      LAD_CHECK(p >= 0.0, "gen config: transition[", i, ",", j, "] negative");
      sum += p;
    }
    LAD_CHECK(std::fabs(sum - 1.0) <= 1e-9, "gen config: transition row ", i,
              " sums to ", sum, ", expected 1");
  }
}

EpisodeConfig EpisodeConfig::from_config(const Config& cfg) {
  EpisodeConfig e;
  e.hop_min = cfg.get_int("episode.hop_min", e.hop_min);
  e.hop_max = cfg.get_int("episode.hop_max", e.hop_max);
  e.max_retries = cfg.get_int("episode.max_retries", e.max_retries);
  e.validate();
  return e;
}

void EpisodeConfig::validate() const {
  LAD_CHECK(hop_min >= 2, "episode config: hop_min must be >= 2 (start != goal)");
  LAD_CHECK(hop_max >= hop_min, "episode config: hop_max < hop_min");
  LAD_CHECK(max_retries > 0, "episode config: max_retries must be positive");
}

int sector_of(double dx, double dy, int num_sectors) {
  double theta = std::atan2(dy, dx);
  if (theta < 0) theta += kTau;
  const double width = kTau / num_sectors;
  const int s = static_cast<int>(std::llround(theta / width));
  return s % num_sectors;
}

namespace {

double dist2(const NavNode& a, const NavNode& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

void add_edge(HouseGraph& h, int a, int b) {
  if (a > b) std::swap(a, b);
  const double len = std::sqrt(dist2(h.nodes[static_cast<size_t>(a)],
                                     h.nodes[static_cast<size_t>(b)]));
  h.edges.push_back({a, b, len});
  h.nodes[static_cast<size_t>(a)].neighbors.push_back(b);
  h.nodes[static_cast<size_t>(b)].neighbors.push_back(a);
}

bool adjacent(const HouseGraph& h, int a, int b) {
  const auto& n = h.nodes[static_cast<size_t>(a)].neighbors;
  return std::find(n.begin(), n.end(), b) != n.end();
}

}  // namespace

HouseGraph generate_house(const GenConfig& cfg, uint64_t seed,
                          const std::string& house_id, const std::string& split) {
  cfg.validate();
  Rng rng(seed);
  HouseGraph h;
  h.house_id = house_id;
  h.split = split;
  h.seed = seed;
  h.num_rooms = cfg.num_rooms;
  h.num_sectors = cfg.num_sectors;
  h.dim = cfg.dim;

  const int n = static_cast<int>(rng.uniform_int(cfg.nodes_min, cfg.nodes_max));
  const FeatureTable table =
      FeatureTable::build(cfg.num_rooms, cfg.num_objects, cfg.dim, cfg.proto_seed);

  NavNode root;
  root.id = 0;
  root.room_type = static_cast<int>(rng.uniform_int(0, cfg.num_rooms - 1));
  h.nodes.push_back(root);

  // Tree growth: each new node attaches to a random existing node with
  // spare degree, at a sampled heading and edge length, keeping all nodes
  // separated. Parent ids always precede child ids.
  for (int i = 1; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      const int p = static_cast<int>(rng.uniform_int(0, i - 1));
      NavNode& parent = h.nodes[static_cast<size_t>(p)];
      if (static_cast<int>(parent.neighbors.size()) >= cfg.max_degree) continue;
      const double theta = rng.uniform(0.0, kTau);
      const double len = rng.uniform(cfg.edge_min, cfg.edge_max);
      NavNode node;
      node.id = i;
      node.x = parent.x + len * std::cos(theta);
      node.y = parent.y + len * std::sin(theta);
      bool clear = true;
      for (const NavNode& other : h.nodes) {
        if (dist2(node, other) < cfg.min_separation * cfg.min_separation) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      node.room_type = static_cast<int>(rng.categorical(std::vector<double>(
          cfg.transition.begin() + parent.room_type * cfg.num_rooms,
          cfg.transition.begin() + (parent.room_type + 1) * cfg.num_rooms)));
      h.nodes.push_back(node);
      add_edge(h, p, i);
      placed = true;
    }
    LAD_CHECK(placed, "generate_house: could not place node ", i,
              " after bounded attempts; relax the generation config");
  }

  // Shortcut edges close occasional loops between nearby non-adjacent nodes.
  for (int i = 0; i < n; ++i) {
    if (rng.uniform() >= cfg.shortcut_prob) continue;
    const int a = static_cast<int>(rng.uniform_int(0, n - 1));
    if (static_cast<int>(h.nodes[static_cast<size_t>(a)].neighbors.size()) >=
        cfg.max_degree)
      continue;
    int best = -1;
    double best_d2 = cfg.shortcut_max_len * cfg.shortcut_max_len;
    for (int b = 0; b < n; ++b) {
      if (b == a || adjacent(h, a, b)) continue;
      if (static_cast<int>(h.nodes[static_cast<size_t>(b)].neighbors.size()) >=
          cfg.max_degree)
        continue;
      const double d2 = dist2(h.nodes[static_cast<size_t>(a)],
                              h.nodes[static_cast<size_t>(b)]);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = b;
      }
    }
    if (best >= 0) add_edge(h, a, best);
  }

  for (NavNode& node : h.nodes)
    std::sort(node.neighbors.begin(), node.neighbors.end());

  // Objects: each high-frequency object of the room appears independently;
  // one uniformly random extra object may appear as clutter.
  for (NavNode& node : h.nodes) {
    std::vector<int> classes;
    for (int c : table.high_freq[static_cast<size_t>(node.room_type)])
      if (rng.uniform() < cfg.object_prob) classes.push_back(c);
    if (rng.uniform() < cfg.extra_object_prob)
      classes.push_back(static_cast<int>(rng.uniform_int(0, cfg.num_objects - 1)));
    for (int c : classes) {
      ObjectInstance obj;
      obj.object_class = c;
      obj.sector = static_cast<int>(rng.uniform_int(0, cfg.num_sectors - 1));
      obj.feature = table.object_feat[static_cast<size_t>(c)];
      for (double& x : obj.feature) x += rng.normal(0.0, cfg.noise_sigma);
      node.objects.push_back(std::move(obj));
    }
  }

  // Views: room prototype plus the objects visible in each sector plus noise.
  for (NavNode& node : h.nodes) {
    node.views.assign(static_cast<size_t>(cfg.num_sectors),
                      std::vector<double>(static_cast<size_t>(cfg.dim), 0.0));
    for (int s = 0; s < cfg.num_sectors; ++s) {
      std::vector<double>& view = node.views[static_cast<size_t>(s)];
      view = table.room_proto[static_cast<size_t>(node.room_type)];
      for (const ObjectInstance& obj : node.objects)
        if (obj.sector == s)
          for (int e = 0; e < cfg.dim; ++e)
            view[static_cast<size_t>(e)] += obj.feature[static_cast<size_t>(e)];
      for (double& x : view) x += rng.normal(0.0, cfg.noise_sigma);
    }
  }

  return h;
}

Adjacency full_adjacency(const HouseGraph& house) {
  Adjacency adj;
  for (const NavNode& n : house.nodes) adj[n.id];
  for (const Edge& e : house.edges) {
    adj[e.a].emplace_back(e.b, e.length);
    adj[e.b].emplace_back(e.a, e.length);
  }
  for (auto& [id, nbrs] : adj) std::sort(nbrs.begin(), nbrs.end());
  return adj;
}

double edge_length(const HouseGraph& house, int a, int b) {
  for (const Edge& e : house.edges)
    if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) return e.length;
  fail("edge_length: no edge between ", a, " and ", b, " in ", house.house_id);
}

Observation observe(const HouseGraph& house, int node_id) {
  LAD_CHECK(node_id >= 0 && node_id < static_cast<int>(house.nodes.size()),
            "observe: unknown node ", node_id, " in ", house.house_id);
  const NavNode& node = house.nodes[static_cast<size_t>(node_id)];
  Observation obs;
  obs.node = node_id;
  obs.views = node.views;
  obs.objects = node.objects;
  for (int nbr : node.neighbors) {
    const NavNode& other = house.nodes[static_cast<size_t>(nbr)];
    NeighborView nv;
    nv.id = nbr;
    const double dx = other.x - node.x, dy = other.y - node.y;
    nv.distance = edge_length(house, node_id, nbr);
    double theta = std::atan2(dy, dx);
    if (theta < 0) theta += kTau;
    nv.heading = theta;
    nv.view = node.views[static_cast<size_t>(sector_of(dx, dy, house.num_sectors))];
    obs.neighbors.push_back(std::move(nv));
  }
  return obs;
}

namespace {

double edge_weight_between(const Adjacency& adj, int u, int v) {
  for (const auto& [nbr, w] : adj.at(u))
    if (nbr == v) return w;
  fail("adjacency: no edge between ", u, " and ", v);
}

}  // namespace

std::map<int, double> dijkstra_dist(const Adjacency& adj, int src) {
  LAD_CHECK(adj.count(src), "dijkstra: node ", src, " not in graph");
  std::map<int, double> dist;
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> pq;
  dist[src] = 0.0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    auto it = dist.find(u);
    if (it == dist.end() || d > it->second) continue;
    for (const auto& [v, w] : adj.at(u)) {
      if (!adj.count(v)) continue;
      const double nd = d + w;
      auto vit = dist.find(v);
      if (vit == dist.end() || nd < vit->second) {
        dist[v] = nd;
        pq.push({nd, v});
      }
    }
  }
  return dist;
}

PlanResult dijkstra_plan(const Adjacency& adj, int from, int to) {
  LAD_CHECK(adj.count(from), "dijkstra_plan: node ", from, " not in graph");
  LAD_CHECK(adj.count(to), "dijkstra_plan: node ", to, " not in graph");
  PlanResult out;
  if (from == to) {
    out.reachable = true;
    out.path = {from};
    out.length = 0.0;
    return out;
  }
  const std::map<int, double> dist = dijkstra_dist(adj, to);
  if (!dist.count(from)) return out;  // unreachable

  // Walk from the source, always taking the smallest neighbor that lies on
  // some shortest path; this yields the lexicographically smallest one.
  out.reachable = true;
  out.path.push_back(from);
  int u = from;
  while (u != to) {
    int next = -1;
    for (const auto& [v, w] : adj.at(u)) {
      auto vit = dist.find(v);
      if (vit == dist.end()) continue;
      if (w + vit->second == dist.at(u)) {
        next = v;
        break;
      }
    }
    LAD_CHECK(next >= 0, "dijkstra_plan: no shortest-path successor at node ", u);
    out.length += edge_weight_between(adj, u, next);
    out.path.push_back(next);
    u = next;
  }
  return out;
}

int teacher_next(const HouseGraph& house, int current, int goal) {
  LAD_CHECK(current != goal, "teacher_next: already at goal node ", goal);
  const Adjacency adj = full_adjacency(house);
  const std::map<int, double> dist = dijkstra_dist(adj, goal);
  LAD_CHECK(dist.count(current), "teacher_next: goal ", goal,
            " unreachable from ", current, " in ", house.house_id);
  int best = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& [v, w] : adj.at(current)) {
    auto it = dist.find(v);
    if (it == dist.end()) continue;
    const double cost = w + it->second;
    if (cost < best_cost) {
      best_cost = cost;
      best = v;
    }
  }
  LAD_CHECK(best >= 0, "teacher_next: no neighbor can reach goal");
  return best;
}

Episode sample_episode(const HouseGraph& house, const EpisodeConfig& cfg,
                       Rng& rng, const std::string& episode_id) {
  cfg.validate();
  const int n = static_cast<int>(house.nodes.size());
  const Adjacency adj = full_adjacency(house);
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    const int goal = static_cast<int>(rng.uniform_int(0, n - 1));
    const NavNode& goal_node = house.nodes[static_cast<size_t>(goal)];
    if (goal_node.objects.empty()) continue;
    const int start = static_cast<int>(rng.uniform_int(0, n - 1));
    if (start == goal) continue;
    PlanResult plan = dijkstra_plan(adj, start, goal);
    if (!plan.reachable) continue;
    const int hops = static_cast<int>(plan.path.size()) - 1;
    if (hops < cfg.hop_min || hops > cfg.hop_max) continue;

    Episode ep;
    ep.episode_id = episode_id;
    ep.house_id = house.house_id;
    ep.start = start;
    ep.goal = goal;
    ep.target_object_index = static_cast<int>(
        rng.uniform_int(0, static_cast<int64_t>(goal_node.objects.size()) - 1));
    ep.target_object_class =
        goal_node.objects[static_cast<size_t>(ep.target_object_index)].object_class;
    const int tmpl = static_cast<int>(rng.uniform_int(0, kNumTemplates - 1));
    ep.tokens = make_instruction(tmpl, goal_node.room_type, ep.target_object_class);
    ep.gold_path = std::move(plan.path);
    ep.gold_length = plan.length;
    return ep;
  }
  fail("sample_episode: no valid (start, goal) pair within hop range [",
       cfg.hop_min, ",", cfg.hop_max, "] in ", house.house_id, " after ",
       cfg.max_retries, " attempts");
}

}  // namespace lad
