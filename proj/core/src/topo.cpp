#include "lad/topo.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "lad/error.hpp"

namespace lad {

int TopoMap::index_of(int id) const {
  auto it = index.find(id);
  LAD_CHECK(it != index.end(), "topo map: unknown node ", id);
  return it->second;
}

int TopoMap::frontier_count() const {
  int n = 0;
  for (const MapNode& m : nodes) n += m.status == NodeStatus::kFrontier ? 1 : 0;
  return n;
}

std::vector<int> TopoMap::frontier_ids() const {
  std::vector<int> out;
  for (const MapNode& m : nodes)
    if (m.status == NodeStatus::kFrontier) out.push_back(m.id);
  return out;
}

namespace {

void add_known_edge(Adjacency& adj, int a, int b, double len) {
  auto& row = adj[a];
  for (auto& [to, w] : row)
    if (to == b) return;
  row.push_back({b, len});
  std::sort(row.begin(), row.end());
}

Tensor view_row(const Tensor& fused_views, int sector) {
  return reshape(gather_rows(fused_views, {sector}), {fused_views.cols()});
}

}  // namespace

void update_topo_map(TopoMap& map, const Observation& obs, int step,
                     const Tensor& fused_views, const Tensor& fused_objects) {
  LAD_CHECK(fused_views.rank() == 2 && fused_views.rows() >= 1,
            "topo update: fused views must be rank 2 and nonempty");
  const int num_sectors = static_cast<int>(fused_views.rows());
  const int64_t dv = fused_views.cols();

  if (map.empty()) {
    MapNode start;
    start.id = obs.node;
    start.x = 0.0;
    start.y = 0.0;
    map.index[obs.node] = 0;
    map.nodes.push_back(std::move(start));
  } else {
    LAD_CHECK(map.has(obs.node), "topo update: observed node ", obs.node,
              " not in map");
  }

  if (map.current >= 0 && map.current != obs.node)
    map.at(map.current).status = NodeStatus::kVisited;

  MapNode& cur = map.at(obs.node);
  const bool first_visit = cur.last_step == 0;
  cur.status = NodeStatus::kCurrent;
  cur.last_step = step;
  map.current = obs.node;
  if (first_visit) {
    std::vector<Tensor> rows = {fused_views};
    if (fused_objects.defined() && fused_objects.rows() > 0)
      rows.push_back(fused_objects);
    cur.rep = mean_rows(concat_rows(rows));
    cur.partial_sum = Tensor();
    cur.partial_count = 0;
  }

  const double cx = cur.x, cy = cur.y;
  for (const NeighborView& nb : obs.neighbors) {
    const int sector =
        sector_of(std::cos(nb.heading), std::sin(nb.heading), num_sectors);
    LAD_CHECK(static_cast<int64_t>(nb.view.size()) == dv,
              "topo update: neighbor view width ", nb.view.size(), " vs ", dv);
    if (!map.has(nb.id)) {
      MapNode m;
      m.id = nb.id;
      m.x = cx + nb.distance * std::cos(nb.heading);
      m.y = cy + nb.distance * std::sin(nb.heading);
      m.partial_sum = view_row(fused_views, sector);
      m.partial_count = 1;
      m.rep = m.partial_sum;
      map.index[nb.id] = map.size();
      map.nodes.push_back(std::move(m));
    } else {
      MapNode& m = map.at(nb.id);
      if (m.status == NodeStatus::kFrontier) {
        m.partial_sum = add(m.partial_sum, view_row(fused_views, sector));
        m.partial_count += 1;
        m.rep = scale(m.partial_sum, 1.0 / m.partial_count);
      }
    }
    add_known_edge(map.adj, obs.node, nb.id, nb.distance);
    add_known_edge(map.adj, nb.id, obs.node, nb.distance);
  }
}

std::vector<int64_t> hop_buckets(const TopoMap& map) {
  const int n = map.size();
  const int rows = n + 1;
  std::vector<int64_t> buckets(static_cast<size_t>(rows) * rows, 3);
  for (int i = 0; i < rows; ++i) buckets[static_cast<size_t>(i) * rows + i] = 0;
  for (int i = 1; i < rows; ++i) {
    buckets[static_cast<size_t>(i)] = 1;
    buckets[static_cast<size_t>(i) * rows] = 1;
  }
  // BFS from every node over the observed graph.
  for (int s = 0; s < n; ++s) {
    std::vector<int> hop(static_cast<size_t>(n), -1);
    std::deque<int> q;
    hop[static_cast<size_t>(s)] = 0;
    q.push_back(s);
    while (!q.empty()) {
      const int u = q.front();
      q.pop_front();
      auto it = map.adj.find(map.nodes[static_cast<size_t>(u)].id);
      if (it == map.adj.end()) continue;
      for (const auto& [to, w] : it->second) {
        const int v = map.index_of(to);
        if (hop[static_cast<size_t>(v)] >= 0) continue;
        hop[static_cast<size_t>(v)] = hop[static_cast<size_t>(u)] + 1;
        q.push_back(v);
      }
    }
    for (int v = 0; v < n; ++v) {
      const int h = hop[static_cast<size_t>(v)];
      buckets[static_cast<size_t>(s + 1) * rows + (v + 1)] =
          h < 0 ? 3 : std::min<int64_t>(h, 3);
    }
  }
  return buckets;
}

}  // namespace lad
