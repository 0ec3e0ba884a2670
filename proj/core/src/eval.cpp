#include "lad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "lad/error.hpp"
#include "lad/rng.hpp"

namespace lad {

namespace {

struct HouseView {
  std::map<int, const NavNode*> by_id;
  std::map<std::pair<int, int>, double> edge;

  explicit HouseView(const HouseGraph& house) {
    for (const NavNode& n : house.nodes) by_id[n.id] = &n;
    for (const Edge& e : house.edges) {
      edge[{e.a, e.b}] = e.length;
      edge[{e.b, e.a}] = e.length;
    }
  }

  const NavNode& node(int id) const {
    auto it = by_id.find(id);
    LAD_CHECK(it != by_id.end(), "score: node ", id, " not in house");
    return *it->second;
  }

  double edge_len(int a, int b) const {
    auto it = edge.find({a, b});
    LAD_CHECK(it != edge.end(), "score: hop ", a, " -> ", b,
              " is not an edge of the house");
    return it->second;
  }
};

double euclid(const NavNode& a, const NavNode& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace

EpisodeScore score_episode(const Rollout& roll, const Episode& ep,
                           const HouseGraph& house, double success_radius) {
  LAD_CHECK(!roll.path.empty(), "score: empty trajectory");
  LAD_CHECK(roll.path.front() == ep.start, "score: trajectory starts at ",
            roll.path.front(), " but episode starts at ", ep.start);
  LAD_CHECK(roll.path.back() == roll.end_node,
            "score: trajectory end ", roll.path.back(),
            " disagrees with recorded end node ", roll.end_node);
  LAD_CHECK(ep.gold_length > 0.0, "score: episode gold length must be positive");

  const HouseView view(house);
  const NavNode& goal = view.node(ep.goal);

  EpisodeScore s;
  s.episode_id = ep.episode_id;
  for (size_t i = 1; i < roll.path.size(); ++i)
    s.tl += view.edge_len(roll.path[i - 1], roll.path[i]);

  s.sr = euclid(view.node(roll.end_node), goal) < success_radius ? 1.0 : 0.0;
  for (int id : roll.path)
    if (euclid(view.node(id), goal) < success_radius) s.osr = 1.0;

  const double weight = ep.gold_length / std::max(s.tl, ep.gold_length);
  s.spl = s.sr * weight;
  // Instance-level grounding: the picked object is the referred one exactly
  // when the agent stands at the goal node and selects the target's slot.
  s.rgs = (s.sr == 1.0 && roll.end_node == ep.goal &&
           roll.selected_object == ep.target_object_index)
              ? 1.0
              : 0.0;
  s.rgspl = s.rgs * weight;

  LAD_CHECK(s.spl <= s.sr + 1e-12 && s.rgspl <= s.rgs + 1e-12 &&
                s.rgs <= s.sr && s.sr <= s.osr,
            "score: metric ordering violated for ", ep.episode_id);
  return s;
}

namespace {

double mean_of(const std::vector<EpisodeScore>& rows,
               double EpisodeScore::* field) {
  double sum = 0.0;
  for (const EpisodeScore& r : rows) sum += r.*field;
  return sum / static_cast<double>(rows.size());
}

MetricSummary summarize(const std::vector<EpisodeScore>& rows,
                        double EpisodeScore::* field,
                        const std::vector<std::vector<size_t>>& resamples) {
  MetricSummary m;
  m.mean = mean_of(rows, field);
  if (resamples.empty()) {
    m.ci_lo = m.ci_hi = m.mean;
    return m;
  }
  std::vector<double> means;
  means.reserve(resamples.size());
  for (const auto& idx : resamples) {
    double sum = 0.0;
    for (size_t i : idx) sum += rows[i].*field;
    means.push_back(sum / static_cast<double>(idx.size()));
  }
  std::sort(means.begin(), means.end());
  const size_t b = means.size();
  const size_t lo = static_cast<size_t>(std::floor(0.025 * static_cast<double>(b)));
  const size_t hi = std::min(b - 1, static_cast<size_t>(
                                        std::floor(0.975 * static_cast<double>(b))));
  m.ci_lo = means[lo];
  m.ci_hi = means[hi];
  return m;
}

}  // namespace

SplitMetrics aggregate(const std::vector<EpisodeScore>& rows, uint64_t seed,
                       int resamples) {
  LAD_CHECK(!rows.empty(), "aggregate: no episode scores");
  LAD_CHECK(resamples >= 0, "aggregate: negative resample count");

  Rng rng(seed);
  std::vector<std::vector<size_t>> draws;
  for (int r = 0; r < resamples; ++r) {
    std::vector<size_t> idx(rows.size());
    for (size_t& i : idx)
      i = static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(rows.size()) - 1));
    draws.push_back(std::move(idx));
  }

  SplitMetrics out;
  out.count = static_cast<int>(rows.size());
  out.tl = summarize(rows, &EpisodeScore::tl, draws);
  out.sr = summarize(rows, &EpisodeScore::sr, draws);
  out.osr = summarize(rows, &EpisodeScore::osr, draws);
  out.spl = summarize(rows, &EpisodeScore::spl, draws);
  out.rgs = summarize(rows, &EpisodeScore::rgs, draws);
  out.rgspl = summarize(rows, &EpisodeScore::rgspl, draws);
  return out;
}

std::vector<double> room_accuracy_by_step(const std::vector<Rollout>& rolls,
                                          const std::vector<const HouseGraph*>& houses,
                                          int max_t) {
  LAD_CHECK(rolls.size() == houses.size(),
            "room accuracy: rollout/house count mismatch");
  size_t horizon = max_t > 0 ? static_cast<size_t>(max_t) : 0;
  if (max_t <= 0)
    for (const Rollout& r : rolls) horizon = std::max(horizon, r.steps.size());

  std::vector<double> acc_sum(horizon, 0.0);
  std::vector<int> alive(horizon, 0);
  for (size_t ri = 0; ri < rolls.size(); ++ri) {
    const HouseView view(*houses[ri]);
    const Rollout& roll = rolls[ri];
    for (size_t k = 0; k < roll.steps.size() && k < horizon; ++k) {
      const StepDecision& d = roll.steps[k].decision;
      LAD_CHECK(d.layout.defined(), "room accuracy: step ", k + 1,
                " carries no layout predictions");
      LAD_CHECK(d.layout.rows() == static_cast<int64_t>(d.order.size()),
                "room accuracy: layout rows vs node order mismatch");
      int correct = 0;
      for (int64_t i = 0; i < d.layout.rows(); ++i) {
        int64_t best = 0;
        for (int64_t j = 1; j < d.layout.cols(); ++j)
          if (d.layout.at(i, j) > d.layout.at(i, best)) best = j;
        const int truth = view.node(d.order[static_cast<size_t>(i)]).room_type;
        correct += best == truth ? 1 : 0;
      }
      acc_sum[k] += static_cast<double>(correct) /
                    static_cast<double>(d.layout.rows());
      alive[k] += 1;
    }
  }
  std::vector<double> curve(horizon, 0.0);
  for (size_t k = 0; k < horizon; ++k)
    if (alive[k] > 0) curve[k] = acc_sum[k] / alive[k];
  return curve;
}

std::string format_metrics(const std::string& title, const SplitMetrics& m) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << title << " (n=" << m.count << ")\n";
  auto line = [&os](const char* name, const MetricSummary& s) {
    os << "  " << name << " = " << s.mean << "  [" << s.ci_lo << ", " << s.ci_hi
       << "]\n";
  };
  line("TL   ", m.tl);
  line("SR   ", m.sr);
  line("OSR  ", m.osr);
  line("SPL  ", m.spl);
  line("RGS  ", m.rgs);
  line("RGSPL", m.rgspl);
  return os.str();
}

}  // namespace lad
