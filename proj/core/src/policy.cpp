#include "lad/policy.hpp"

#include <algorithm>

#include "lad/error.hpp"

namespace lad {

namespace {

double edge_len(const Adjacency& adj, int a, int b) {
  auto it = adj.find(a);
  LAD_CHECK(it != adj.end(), "rollout: node ", a, " has no known edges");
  for (const auto& [to, w] : it->second)
    if (to == b) return w;
  fail("rollout: no known edge ", a, " -> ", b);
}

int argmax_value(const std::vector<double>& p) {
  LAD_CHECK(!p.empty(), "argmax of empty vector");
  int best = 0;
  for (size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace

EpisodeState start_episode(const LadModel& model, const HouseGraph& house,
                           const Episode& ep, const ImaginationSet& im) {
  EpisodeState s;
  s.house = &house;
  s.episode = &ep;
  s.lang = model.encode_instruction(ep.tokens);
  if (model.config().use_dreamer) s.im = LadModel::imagination_tensor(im);
  s.current = ep.start;
  s.path = {ep.start};
  return s;
}

int teacher_label(const HouseGraph& house, const Episode& ep, const TopoMap& map,
                  int current) {
  if (current == ep.goal) return -1;
  int v = current;
  for (size_t guard = 0; guard <= house.nodes.size(); ++guard) {
    if (v == ep.goal) return -2;  // goal already visited, chain exhausted
    v = teacher_next(house, v, ep.goal);
    LAD_CHECK(map.has(v), "teacher label: chain node ", v, " not in map");
    if (map.at(v).status == NodeStatus::kFrontier) return v;
  }
  fail("teacher label: chain did not terminate");
}

StepRecord policy_step(const LadModel& model, EpisodeState& state,
                       const Codebook& cb, const RolloutOptions& opt, Rng& rng) {
  LAD_CHECK(!state.done, "policy step: episode already finished");
  const int max_steps =
      opt.max_steps > 0 ? opt.max_steps : model.config().max_steps;
  LAD_CHECK(state.t <= max_steps, "policy step: budget exhausted");

  StepRecord rec;
  rec.node = state.current;

  const Observation obs = observe(*state.house, state.current);
  auto [views, objects] = model.fuse_local_visuals(obs);
  update_topo_map(state.map, obs, state.t, views, objects);
  rec.decision = model.forward_step(state.map, state.t, state.lang, cb, state.im,
                                    objects);
  rec.fused_objects = objects;
  for (const ObjectInstance& o : obs.objects) rec.object_classes.push_back(o.object_class);
  rec.label = teacher_label(*state.house, *state.episode, state.map, state.current);

  // Pick an action index over [stop, nodes...].
  int pick;
  const bool teacher_turn =
      opt.mode == ActMode::kTeacher ||
      (opt.teacher_beta >= 0.0 && rng.uniform() < opt.teacher_beta);
  if (state.t == max_steps) {
    pick = 0;
    rec.forced_stop = true;
  } else if (teacher_turn) {
    pick = rec.label >= 0 ? 1 + state.map.index_of(rec.label) : 0;
  } else {
    const std::vector<double>& probs = rec.decision.dsap_prob.vals();
    switch (opt.mode) {
      case ActMode::kGreedy:
        pick = argmax_value(probs);
        break;
      case ActMode::kSample:
        pick = static_cast<int>(rng.categorical(probs));
        break;
      case ActMode::kRandom: {
        std::vector<int> open;
        for (size_t i = 0; i < rec.decision.dsap_mask.size(); ++i)
          if (rec.decision.dsap_mask[i]) open.push_back(static_cast<int>(i));
        pick = open[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(open.size()) - 1))];
        break;
      }
      default:
        pick = 0;
    }
  }

  if (pick == 0) {
    rec.action = -1;
    state.done = true;
    state.t += 1;
    return rec;
  }

  const int target = rec.decision.order[static_cast<size_t>(pick - 1)];
  rec.action = target;
  PlanResult plan = dijkstra_plan(state.map.adj, state.current, target);
  LAD_CHECK(plan.reachable, "rollout: chosen node ", target,
            " unreachable in known graph");
  for (size_t i = 1; i < plan.path.size(); ++i) {
    const int hop = plan.path[i];
    state.walked_length += edge_len(state.map.adj, plan.path[i - 1], hop);
    state.path.push_back(hop);
    rec.segment.push_back(hop);
  }
  state.current = target;
  state.t += 1;
  return rec;
}

Rollout run_episode(const LadModel& model, const HouseGraph& house,
                    const Episode& ep, const Codebook& cb,
                    const ImaginationSet& im, const RolloutOptions& opt, Rng& rng) {
  EpisodeState state = start_episode(model, house, ep, im);
  const int max_steps =
      opt.max_steps > 0 ? opt.max_steps : model.config().max_steps;
  Rollout out;
  while (!state.done && state.t <= max_steps)
    out.steps.push_back(policy_step(model, state, cb, opt, rng));

  out.path = state.path;
  out.end_node = state.current;
  out.walked_length = state.walked_length;
  out.map = state.map;
  LAD_CHECK(!out.steps.empty(), "rollout: no decisions taken");
  const StepRecord& last = out.steps.back();
  out.stopped = last.action == -1 && !last.forced_stop;
  if (last.action == -1 && last.decision.og_scores.defined()) {
    const std::vector<double>& s = last.decision.og_scores.vals();
    out.selected_object = argmax_value(s);
    out.selected_class =
        last.object_classes[static_cast<size_t>(out.selected_object)];
  }
  return out;
}

}  // namespace lad
