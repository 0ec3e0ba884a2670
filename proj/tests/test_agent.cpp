#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lad/agent.hpp"
#include "lad/codebook.hpp"
#include "lad/env.hpp"
#include "lad/error.hpp"
#include "lad/policy.hpp"
#include "lad/rng.hpp"
#include "lad/vocab.hpp"

using namespace lad;

namespace {

AgentConfig tiny_cfg() {
  AgentConfig a;
  a.hidden = 16;
  a.heads = 2;
  a.lang_layers = 1;
  a.cross_layers = 1;
  a.vis_layers = 1;
  a.gasa_layers = 1;
  a.ffn_mult = 2;
  a.max_steps = 10;
  a.im_count = 3;
  a.vis_dim = 8;
  return a;
}

GenConfig small_gen() {
  GenConfig g;
  g.nodes_min = 10;
  g.nodes_max = 16;
  g.dim = 8;
  g.transition = default_transition_matrix();
  return g;
}

struct Fixture {
  GenConfig gen = small_gen();
  HouseGraph house;
  FeatureTable table;
  Codebook cb;
  Episode ep;
  ImaginationSet im;

  explicit Fixture(uint64_t seed) {
    house = generate_house(gen, seed, "h", "test");
    table = FeatureTable::build(gen.num_rooms, gen.num_objects, gen.dim,
                                gen.proto_seed);
    cb = build_textual_codebook(table);
    Rng rng(seed + 1);
    ep = sample_episode(house, EpisodeConfig{}, rng, "ep");
    im = imagine_destination(ep.tokens, table, 3, 0.1, seed + 2, "ep");
  }
};

TopoMap replay_gold(const LadModel& model, const HouseGraph& house,
                    const Episode& ep, size_t upto) {
  TopoMap map;
  for (size_t i = 0; i < upto && i < ep.gold_path.size(); ++i) {
    const Observation obs = observe(house, ep.gold_path[i]);
    auto [v, o] = model.fuse_local_visuals(obs);
    update_topo_map(map, obs, static_cast<int>(i) + 1, v, o);
  }
  return map;
}

// Teacher-forced sum of decision, layout, dreamer, and grounding losses over
// the gold path; the oracle loss for end-to-end gradient checking.
Tensor episode_loss(const LadModel& model, const HouseGraph& house,
                    const Episode& ep, const Codebook& cb, const Tensor& im) {
  TopoMap map;
  Tensor lang = model.encode_instruction(ep.tokens);
  Tensor total = Tensor::scalar(0.0);
  for (size_t i = 0; i < ep.gold_path.size(); ++i) {
    const int node = ep.gold_path[i];
    const Observation obs = observe(house, node);
    auto [v, o] = model.fuse_local_visuals(obs);
    update_topo_map(map, obs, static_cast<int>(i) + 1, v, o);
    StepDecision d = model.forward_step(map, static_cast<int>(i) + 1, lang, cb,
                                        im, o);
    const bool at_goal = node == ep.goal;
    const int64_t target =
        at_goal ? 0 : 1 + map.index_of(ep.gold_path[i + 1]);
    total = add(total, cross_entropy(d.dsap_logits, {target}, &d.dsap_mask));
    std::vector<int64_t> rooms;
    for (int id : d.order)
      rooms.push_back(house.nodes[static_cast<size_t>(id)].room_type);
    total = add(total, cross_entropy(d.layout, rooms));
    if (!at_goal && d.im_logits.defined())
      total = add(total,
                  cross_entropy(d.im_logits,
                                {static_cast<int64_t>(
                                    map.index_of(ep.gold_path[i + 1]))},
                                &d.im_mask));
    if (at_goal && d.og_scores.defined())
      total = add(total, cross_entropy(d.og_scores, {ep.target_object_index}));
  }
  return total;
}

std::vector<double> pattern_row(int flip, int dim) {
  std::vector<double> r(static_cast<size_t>(dim));
  for (int i = 0; i < dim; ++i) r[static_cast<size_t>(i)] = ((i + flip) % 2) ? -1.0 : 1.0;
  return r;
}

void zero_vals(Tensor t) {
  for (double& v : t.vals()) v = 0.0;
}

}  // namespace

TEST_CASE("agent config roundtrip and validation") {
  Config c;
  c.set_int("agent.hidden", 32);
  c.set_int("agent.heads", 4);
  c.set("agent.layout_head", "classifier");
  c.set_bool("agent.use_dreamer", false);
  AgentConfig a = AgentConfig::from_config(c);
  CHECK(a.hidden == 32);
  CHECK(a.layout_head == "classifier");
  CHECK(!a.use_dreamer);

  AgentConfig bad = tiny_cfg();
  bad.hidden = 30;
  bad.heads = 4;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = tiny_cfg();
  bad.layout_head = "mlp";
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("instruction encoding shapes, position use, and errors") {
  LadModel model(tiny_cfg(), 1);
  NoGradGuard ng;
  const Vocab& v = Vocab::get();
  Tensor one = model.encode_instruction({v.id("go")});
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 16);

  std::vector<int> tokens = make_instruction(0, 2, 5);
  std::vector<int> permuted = tokens;
  std::swap(permuted[0], permuted[1]);
  Tensor a = model.encode_instruction(tokens);
  Tensor b = model.encode_instruction(permuted);
  double diff = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    diff = std::max(diff, std::fabs(a.data()[i] - b.data()[i]));
  CHECK(diff > 1e-6);

  CHECK_THROWS_AS(model.encode_instruction({}), Error);
  CHECK_THROWS_AS(model.encode_instruction({64}), Error);
  CHECK_THROWS_AS(model.encode_instruction(std::vector<int>(17, 3)), Error);
}

TEST_CASE("instruction encoder gradient check") {
  LadModel model(tiny_cfg(), 2);
  const std::vector<int> tokens = make_instruction(1, 4, 9);
  auto f = [&]() {
    Tensor e = model.encode_instruction(tokens);
    return sum_all(mul(e, e));
  };
  std::vector<Tensor> inputs = {model.lang_token, model.lang_pos,
                                model.lang_type, model.lang_ln.g,
                                model.lang_layers[0].attn.wq,
                                model.lang_layers[0].ffn.in.w};
  const double err = grad_check(f, inputs, 1e-5, 6, 3, 1e-4);
  CHECK(err <= 1e-4);
}

TEST_CASE("visual fusion preserves shapes and handles empty objects") {
  Fixture fx(11);
  LadModel model(tiny_cfg(), 3);
  NoGradGuard ng;

  int with_objects = -1, without = -1;
  for (const NavNode& n : fx.house.nodes) {
    if (!n.objects.empty() && with_objects < 0) with_objects = n.id;
    if (n.objects.empty() && without < 0) without = n.id;
  }
  REQUIRE(with_objects >= 0);
  Observation obs = observe(fx.house, with_objects);
  auto [views, objects] = model.fuse_local_visuals(obs);
  CHECK(views.rows() == static_cast<int64_t>(obs.views.size()));
  CHECK(views.cols() == 8);
  CHECK(objects.rows() == static_cast<int64_t>(obs.objects.size()));

  Observation no_obj = obs;
  no_obj.objects.clear();
  auto [views2, objects2] = model.fuse_local_visuals(no_obj);
  CHECK(views2.rows() == views.rows());
  CHECK(!objects2.defined());
}

TEST_CASE("visual fusion with neutralized sublayers is a residual identity") {
  LadModel model(tiny_cfg(), 4);
  NoGradGuard ng;
  zero_vals(model.vis_view_type);
  zero_vals(model.vis_obj_type);
  zero_vals(model.vis_layers[0].attn.wo);
  zero_vals(model.vis_layers[0].attn.bo);
  zero_vals(model.vis_layers[0].ffn.out.w);
  zero_vals(model.vis_layers[0].ffn.out.b);

  Observation obs;
  obs.node = 0;
  for (int i = 0; i < 4; ++i) obs.views.push_back(pattern_row(i, 8));
  ObjectInstance oi;
  oi.object_class = 0;
  oi.sector = 0;
  oi.feature = pattern_row(1, 8);
  obs.objects.push_back(oi);

  auto [views, objects] = model.fuse_local_visuals(obs);
  for (size_t i = 0; i < 4; ++i)
    for (int j = 0; j < 8; ++j)
      CHECK(views.at(static_cast<int64_t>(i), j) ==
            doctest::Approx(obs.views[i][static_cast<size_t>(j)]).epsilon(1e-4));
  for (int j = 0; j < 8; ++j)
    CHECK(objects.at(0, j) ==
          doctest::Approx(oi.feature[static_cast<size_t>(j)]).epsilon(1e-4));
}

TEST_CASE("map update pools partial views and freezes visited reps") {
  NoGradGuard ng;
  auto mk_view = [](double base) {
    std::vector<double> v(8);
    for (int i = 0; i < 8; ++i) v[static_cast<size_t>(i)] = base + i;
    return v;
  };
  auto mk_fused = [&](double base) {
    std::vector<double> flat;
    for (int s = 0; s < 4; ++s) {
      auto row = mk_view(base + 10 * s);
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return Tensor::matrix(4, 8, std::move(flat));
  };

  const double pi = 3.14159265358979323846;
  Observation obs_a;
  obs_a.node = 0;
  obs_a.views = {mk_view(0), mk_view(10), mk_view(20), mk_view(30)};
  {
    ObjectInstance oi;
    oi.object_class = 2;
    oi.feature = mk_view(100);
    obs_a.objects.push_back(oi);
  }
  NeighborView to_b{1, mk_view(0), 10.0, 0.0};
  NeighborView to_c{2, mk_view(10), 10.0, pi / 2};
  obs_a.neighbors = {to_b, to_c};

  Tensor fused_a = mk_fused(0.0);
  Tensor obj_a = Tensor::matrix(1, 8, mk_view(100));

  TopoMap map;
  update_topo_map(map, obs_a, 1, fused_a, obj_a);
  CHECK(map.size() == 3);
  CHECK(map.current == 0);
  CHECK(map.at(0).status == NodeStatus::kCurrent);
  CHECK(map.at(0).last_step == 1);
  CHECK(map.at(1).status == NodeStatus::kFrontier);
  CHECK(map.at(1).last_step == 0);

  // Current rep: mean over the five fused rows.
  Tensor expect_cur = mean_rows(concat_rows({fused_a, obj_a}));
  CHECK(map.at(0).rep.vals() == expect_cur.vals());
  // Frontier rep equals the sector row that faces it.
  CHECK(map.at(1).rep.vals() == mk_view(0.0));   // east sector 0
  CHECK(map.at(2).rep.vals() == mk_view(10.0));  // north sector 1
  // Positions derived from polar offsets.
  CHECK(map.at(1).x == doctest::Approx(10.0));
  CHECK(map.at(2).y == doctest::Approx(10.0));

  // Second visit from B: C's rep becomes the mean of both partial views.
  Observation obs_b;
  obs_b.node = 1;
  obs_b.views = obs_a.views;
  NeighborView back{0, mk_view(0), 10.0, pi};
  NeighborView diag{2, mk_view(20), 10.0 * std::sqrt(2.0), 3 * pi / 4};
  obs_b.neighbors = {back, diag};
  Tensor fused_b = mk_fused(1000.0);
  update_topo_map(map, obs_b, 2, fused_b, Tensor());

  CHECK(map.at(0).status == NodeStatus::kVisited);
  CHECK(map.at(1).status == NodeStatus::kCurrent);
  const int sector_diag = sector_of(std::cos(3 * pi / 4), std::sin(3 * pi / 4), 4);
  Tensor row_b = reshape(gather_rows(fused_b, {sector_diag}), {8});
  Tensor expect_c = scale(add(reshape(gather_rows(fused_a, {1}), {8}), row_b), 0.5);
  CHECK(map.at(2).rep.vals() == expect_c.vals());
  CHECK(map.at(2).partial_count == 2);

  // A's rep never changes once visited; a revisit only bumps the stamp.
  const std::vector<double> a_rep = map.at(0).rep.vals();
  Observation obs_a2 = obs_a;
  update_topo_map(map, obs_a2, 3, mk_fused(777.0), Tensor());
  CHECK(map.at(0).rep.vals() == a_rep);
  CHECK(map.at(0).last_step == 3);
  CHECK(map.at(0).status == NodeStatus::kCurrent);
  CHECK(map.at(1).status == NodeStatus::kVisited);

  int currents = 0;
  for (const MapNode& m : map.nodes)
    currents += m.status == NodeStatus::kCurrent ? 1 : 0;
  CHECK(currents == 1);

  Observation bad;
  bad.node = 99;
  bad.views = obs_a.views;
  CHECK_THROWS_AS(update_topo_map(map, bad, 4, fused_a, Tensor()), Error);
}

TEST_CASE("first observation seeds current plus frontier ring") {
  Fixture fx(21);
  LadModel model(tiny_cfg(), 5);
  NoGradGuard ng;
  TopoMap map = replay_gold(model, fx.house, fx.ep, 1);
  const NavNode& start = fx.house.nodes[static_cast<size_t>(fx.ep.start)];
  CHECK(map.size() == 1 + static_cast<int>(start.neighbors.size()));
  CHECK(map.at(fx.ep.start).status == NodeStatus::kCurrent);
  for (int nb : start.neighbors) {
    CHECK(map.at(nb).status == NodeStatus::kFrontier);
    CHECK(map.at(nb).last_step == 0);
  }
}

TEST_CASE("hop distance buckets with stop row") {
  TopoMap m;
  auto addnode = [&](int id) {
    MapNode n;
    n.id = id;
    m.index[id] = m.size();
    m.nodes.push_back(n);
  };
  addnode(10);
  addnode(20);
  addnode(30);
  m.current = 10;
  m.adj[10] = {{20, 5.0}};
  m.adj[20] = {{10, 5.0}, {30, 2.0}};
  m.adj[30] = {{20, 2.0}};
  const std::vector<int64_t> b = hop_buckets(m);
  const std::vector<int64_t> expect = {0, 1, 1, 1,   //
                                       1, 0, 1, 2,   //
                                       1, 1, 0, 1,   //
                                       1, 2, 1, 0};
  CHECK(b == expect);

  addnode(40);  // no observed edges: beyond bucket cap from everything
  const std::vector<int64_t> b2 = hop_buckets(m);
  CHECK(b2[4] == 1);          // stop row still reaches it
  CHECK(b2[5 * 1 + 4] == 3);  // from node 10: unreachable, capped bucket
  CHECK(b2[5 * 5 - 1] == 0);  // self
}

TEST_CASE("node embeddings are pure and translation invariant") {
  LadModel model(tiny_cfg(), 6);
  NoGradGuard ng;
  auto build = [&](double ox, double oy) {
    TopoMap m;
    auto addnode = [&](int id, NodeStatus st, double x, double y, double base,
                       int step) {
      MapNode n;
      n.id = id;
      n.status = st;
      n.x = x + ox;
      n.y = y + oy;
      n.last_step = step;
      std::vector<double> rep(8);
      for (int i = 0; i < 8; ++i) rep[static_cast<size_t>(i)] = base + i;
      n.rep = Tensor::row(std::move(rep));
      m.index[id] = m.size();
      m.nodes.push_back(n);
    };
    addnode(0, NodeStatus::kCurrent, 5, 5, 1.0, 2);
    addnode(1, NodeStatus::kFrontier, 8, 9, 2.0, 0);
    addnode(2, NodeStatus::kFrontier, 8, 9, 2.0, 0);  // twin of node 1
    addnode(3, NodeStatus::kVisited, 2, 1, 3.0, 1);
    m.current = 0;
    m.adj[0] = {{1, 5.0}, {2, 5.0}, {3, 5.0}};
    return m;
  };

  TopoMap m = build(0, 0);
  Tensor h = model.embed_nodes(m, 3);
  CHECK(h.rows() == 5);
  CHECK(h.cols() == 16);
  for (int j = 0; j < 16; ++j) CHECK(h.at(2, j) == h.at(3, j));

  TopoMap shifted = build(100, -50);
  Tensor h2 = model.embed_nodes(shifted, 3);
  CHECK(h.vals() == h2.vals());

  // Current node's location features are exactly (0, sin 0, cos 0).
  Tensor manual = model.node_ln.apply(concat_rows(
      {reshape(model.stop_token, {1, 16}),
       add(add(model.vis_proj.apply(stack_rows({m.nodes[0].rep})),
               model.loc_proj.apply(Tensor::matrix(1, 3, {0.0, 0.0, 1.0}))),
           gather_rows(model.step_table, {2}))}));
  for (int j = 0; j < 16; ++j) CHECK(h.at(1, j) == manual.at(1, j));
}

TEST_CASE("gasa with zeroed hop bias equals plain self-attention") {
  Fixture fx(31);
  LadModel model(tiny_cfg(), 7);
  NoGradGuard ng;
  TopoMap map = replay_gold(model, fx.house, fx.ep, 2);
  Tensor h = model.embed_nodes(map, 2);

  Tensor biased = model.gasa(h, map);
  Tensor plain = h;
  for (const EncoderLayer& l : model.gasa_layers) plain = l.apply(plain);
  double diff = 0.0;
  for (int64_t i = 0; i < biased.size(); ++i)
    diff = std::max(diff, std::fabs(biased.data()[i] - plain.data()[i]));
  CHECK(diff > 1e-9);  // learned bias is active

  for (Tensor& b : model.gasa_bias) zero_vals(b);
  Tensor unbiased = model.gasa(h, map);
  for (int64_t i = 0; i < unbiased.size(); ++i)
    CHECK(unbiased.data()[i] == doctest::Approx(plain.data()[i]).epsilon(1e-12));
}

TEST_CASE("single node map keeps gasa and local branch well formed") {
  LadModel model(tiny_cfg(), 8);
  NoGradGuard ng;
  TopoMap m;
  MapNode n;
  n.id = 0;
  n.status = NodeStatus::kCurrent;
  n.last_step = 1;
  n.rep = Tensor::row(std::vector<double>(8, 0.5));
  m.index[0] = 0;
  m.nodes.push_back(n);
  m.current = 0;

  Tensor h = model.embed_nodes(m, 1);
  Tensor g = model.gasa(h, m);
  CHECK(g.rows() == 2);
  Tensor lang = model.encode_instruction(make_instruction(0, 1, 2));
  std::vector<int64_t> rows;
  Tensor loc = model.cross_local(g, lang, m, &rows);
  CHECK(loc.rows() == 2);
  CHECK(rows == std::vector<int64_t>{0, 1});
}

TEST_CASE("cross attention collapses duplicated memory rows") {
  Fixture fx(41);
  LadModel model(tiny_cfg(), 9);
  NoGradGuard ng;
  TopoMap map = replay_gold(model, fx.house, fx.ep, 2);
  Tensor h = model.gasa(model.embed_nodes(map, 2), map);

  Tensor one = model.encode_instruction({Vocab::get().id("bedroom")});
  Tensor three = concat_rows({one, one, one});
  Tensor a = model.cross_global(h, one);
  Tensor b = model.cross_global(h, three);
  for (int64_t i = 0; i < a.size(); ++i)
    CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));

  std::vector<int64_t> rows;
  Tensor loc = model.cross_local(h, one, map, &rows);
  const int deg = static_cast<int>(map.adj.at(map.current).size());
  CHECK(loc.rows() == 2 + deg);
  CHECK(static_cast<int>(rows.size()) == 2 + deg);
}

TEST_CASE("layout scores match hand-computed codebook dot products") {
  AgentConfig cfg = tiny_cfg();
  cfg.hidden = 4;
  cfg.vis_dim = 2;
  cfg.num_rooms = 2;
  LadModel model(cfg, 10);
  NoGradGuard ng;

  zero_vals(model.layout_proj.w);
  zero_vals(model.layout_proj.b);
  model.layout_proj.w.vals()[0] = 1.0;  // w[0][0]
  model.layout_proj.w.vals()[3] = 1.0;  // w[1][1]

  Codebook cb;
  cb.num_rooms = 2;
  cb.entries_per_room = 2;
  cb.dim = 2;
  cb.data = {1, 0, 0, 1, 1, 1, 2, 0};
  cb.labels = {"r0", "r1"};

  Tensor h = Tensor::matrix(2, 4, {9, 9, 9, 9, 1, 2, 0, 0});
  Tensor scores = model.layout_predict(h, cb);
  CHECK(scores.rows() == 1);
  CHECK(scores.at(0, 0) == 3.0);  // (1,2)*(1,0) + (1,2)*(0,1)
  CHECK(scores.at(0, 1) == 5.0);  // (1,2)*(1,1) + (1,2)*(2,0)
}

TEST_CASE("layout argmax follows the matching orthonormal codebook row") {
  AgentConfig cfg = tiny_cfg();
  cfg.hidden = 4;
  cfg.vis_dim = 4;
  cfg.num_rooms = 2;
  LadModel model(cfg, 11);
  NoGradGuard ng;

  Codebook cb;
  cb.num_rooms = 2;
  cb.entries_per_room = 2;
  cb.dim = 4;
  cb.data = {1, 0, 0, 0,   //
             0, 1, 0, 0,   //
             0, 0, 1, 0,   //
             0, 0, 0, 1};
  cb.labels = {"r0", "r1"};

  zero_vals(model.layout_proj.w);
  zero_vals(model.layout_proj.b);
  model.layout_proj.b.vals()[0] = 1.0;  // projection constant at e1 = room 0 entry
  Tensor h = Tensor::matrix(3, 4, {0, 0, 0, 0, 5, 5, 5, 5, -2, 0, 1, 3});
  Tensor scores = model.layout_predict(h, cb);
  for (int64_t i = 0; i < scores.rows(); ++i) {
    CHECK(scores.at(i, 0) == 1.0);
    CHECK(scores.at(i, 1) == 0.0);
  }
}

TEST_CASE("layout scores are linear in the node embedding") {
  Fixture fx(51);
  LadModel model(tiny_cfg(), 12);
  NoGradGuard ng;
  zero_vals(model.layout_proj.b);
  TopoMap map = replay_gold(model, fx.house, fx.ep, 2);
  Tensor lang = model.encode_instruction(fx.ep.tokens);
  Tensor h = model.cross_global(model.gasa(model.embed_nodes(map, 2), map), lang);

  Tensor s1 = model.layout_predict(h, fx.cb);
  Tensor s2 = model.layout_predict(scale(h, 2.0), fx.cb);
  for (int64_t i = 0; i < s1.size(); ++i)
    CHECK(s2.data()[i] == doctest::Approx(2.0 * s1.data()[i]).epsilon(1e-12));
}

TEST_CASE("dreamer attention ignores query content with one imagination row") {
  LadModel model(tiny_cfg(), 13);
  NoGradGuard ng;
  Tensor im = Tensor::matrix(1, 8, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor h = Tensor::matrix(3, 16, [] {
    std::vector<double> v(48);
    for (size_t i = 0; i < v.size(); ++i) v[i] = std::sin(static_cast<double>(i));
    return v;
  }());
  Tensor out = model.dream_attn.apply(h, im, im);
  for (int j = 0; j < 16; ++j) {
    CHECK(out.at(0, j) == doctest::Approx(out.at(1, j)).epsilon(1e-12));
    CHECK(out.at(1, j) == doctest::Approx(out.at(2, j)).epsilon(1e-12));
  }
}

TEST_CASE("dreamer distribution covers exactly the frontier") {
  Fixture fx(61);
  LadModel model(tiny_cfg(), 14);
  NoGradGuard ng;
  TopoMap map = replay_gold(model, fx.house, fx.ep, 2);
  Tensor lang = model.encode_instruction(fx.ep.tokens);
  Tensor h = model.cross_global(model.gasa(model.embed_nodes(map, 2), map), lang);
  Tensor im = LadModel::imagination_tensor(fx.im);

  std::vector<uint8_t> mask;
  auto [hat, pr] = model.dreamer(h, im, map, &mask);
  CHECK(hat.rows() == map.size() + 1);
  REQUIRE(pr.defined());
  CHECK(pr.size() == map.size());
  double total = 0.0;
  for (int i = 0; i < map.size(); ++i) {
    const bool frontier =
        map.nodes[static_cast<size_t>(i)].status == NodeStatus::kFrontier;
    CHECK(mask[static_cast<size_t>(i)] == (frontier ? 1 : 0));
    if (!frontier) CHECK(pr.at(i) == 0.0);
    total += pr.at(i);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

  // Fully explored map: no distribution, loss step is skipped upstream.
  TopoMap closed;
  for (int id = 0; id < 2; ++id) {
    MapNode n;
    n.id = id;
    n.status = id == 0 ? NodeStatus::kCurrent : NodeStatus::kVisited;
    n.last_step = id + 1;
    n.rep = Tensor::row(std::vector<double>(8, 0.1));
    closed.index[id] = id;
    closed.nodes.push_back(n);
  }
  closed.current = 0;
  closed.adj[0] = {{1, 4.0}};
  closed.adj[1] = {{0, 4.0}};
  Tensor h2 = model.cross_global(
      model.gasa(model.embed_nodes(closed, 3), closed), lang);
  auto [hat2, pr2] = model.dreamer(h2, im, closed);
  CHECK(hat2.defined());
  CHECK(!pr2.defined());
}

TEST_CASE("gate endpoints isolate the fused branches") {
  Fixture fx(71);
  LadModel model(tiny_cfg(), 15);
  NoGradGuard ng;
  TopoMap map = replay_gold(model, fx.house, fx.ep, 2);
  Tensor lang = model.encode_instruction(fx.ep.tokens);
  Tensor im = LadModel::imagination_tensor(fx.im);
  const Observation obs = observe(fx.house, fx.ep.gold_path[1]);

  auto decide = [&]() {
    return model.forward_step(map, 2, lang, fx.cb, im, Tensor());
  };

  // lambda -> 0: dreamer score head becomes irrelevant.
  for (double& v : model.head_lambda.out.b.vals()) v = -40.0;
  StepDecision d0 = decide();
  for (double& v : model.head_fgd_dream.out.w.vals()) v += 3.7;
  StepDecision d0b = decide();
  for (int64_t i = 0; i < d0.dsap_prob.size(); ++i)
    CHECK(d0.dsap_prob.at(i) == doctest::Approx(d0b.dsap_prob.at(i)).epsilon(1e-12));
  for (int64_t i = 0; i < d0.lambda.size(); ++i)
    CHECK(d0.lambda.at(i) <= 1e-12);

  // lambda -> 1: global score head becomes irrelevant.
  for (double& v : model.head_lambda.out.b.vals()) v = 40.0;
  StepDecision d1 = decide();
  for (double& v : model.head_fgd_glo.out.w.vals()) v -= 2.9;
  StepDecision d1b = decide();
  for (int64_t i = 0; i < d1.dsap_prob.size(); ++i)
    CHECK(d1.dsap_prob.at(i) == doctest::Approx(d1b.dsap_prob.at(i)).epsilon(1e-12));
  for (int64_t i = 0; i < d1.lambda.size(); ++i)
    CHECK(d1.lambda.at(i) >= 1.0 - 1e-12);

  // Shift invariance of the final softmax.
  StepDecision d = decide();
  Tensor shifted = softmax(add_const(d.dsap_logits, 7.5), &d.dsap_mask);
  for (int64_t i = 0; i < shifted.size(); ++i)
    CHECK(shifted.at(i) == doctest::Approx(d.dsap_prob.at(i)).epsilon(1e-12));
  (void)obs;
}

TEST_CASE("grounding scores one value per object") {
  Fixture fx(81);
  LadModel model(tiny_cfg(), 16);
  NoGradGuard ng;
  Tensor lang = model.encode_instruction(fx.ep.tokens);

  Observation obs = observe(fx.house, fx.ep.goal);
  REQUIRE(!obs.objects.empty());
  auto [views, objects] = model.fuse_local_visuals(obs);
  Tensor scores = model.ground_objects(objects, lang);
  CHECK(scores.size() == static_cast<int64_t>(obs.objects.size()));

  Observation solo = obs;
  solo.objects.resize(1);
  auto [v2, o2] = model.fuse_local_visuals(solo);
  Tensor s2 = model.ground_objects(o2, lang);
  CHECK(s2.size() == 1);
}

TEST_CASE("grounding loss gradient check") {
  Fixture fx(91);
  LadModel model(tiny_cfg(), 17);
  Observation obs = observe(fx.house, fx.ep.goal);
  REQUIRE(!obs.objects.empty());
  auto f = [&]() {
    Tensor lang = model.encode_instruction(fx.ep.tokens);
    auto [views, objects] = model.fuse_local_visuals(obs);
    return cross_entropy(model.ground_objects(objects, lang),
                         {fx.ep.target_object_index});
  };
  std::vector<Tensor> inputs = {model.head_og.in.w, model.head_og.out.w,
                                model.vis_layers[0].attn.wv,
                                model.vis_obj_type, model.lang_token};
  const double err = grad_check(f, inputs, 1e-5, 6, 5, 1e-4);
  CHECK(err <= 1e-4);
}

TEST_CASE("end to end gradients match finite differences on a toy episode") {
  Fixture fx(101);
  LadModel model(tiny_cfg(), 18);
  Tensor im = LadModel::imagination_tensor(fx.im);
  auto f = [&]() { return episode_loss(model, fx.house, fx.ep, fx.cb, im); };
  std::vector<Tensor> inputs;
  for (const auto& [name, t] : model.params().items()) inputs.push_back(t);
  std::string worst;
  const double err = grad_check(f, inputs, 1e-5, 2, 9, 1e-4, &worst);
  INFO("worst: ", worst);
  CHECK(err <= 1e-4);
}

TEST_CASE("greedy policy is deterministic and walks valid paths") {
  Fixture fx(111);
  LadModel model(tiny_cfg(), 19);
  NoGradGuard ng;
  RolloutOptions opt;
  opt.mode = ActMode::kGreedy;
  Rng r1(5), r2(5);
  Rollout a = run_episode(model, fx.house, fx.ep, fx.cb, fx.im, opt, r1);
  Rollout b = run_episode(model, fx.house, fx.ep, fx.cb, fx.im, opt, r2);
  CHECK(a.path == b.path);
  CHECK(a.end_node == b.end_node);
  CHECK(a.walked_length == b.walked_length);
  REQUIRE(a.steps.size() == b.steps.size());
  for (size_t i = 0; i < a.steps.size(); ++i)
    CHECK(a.steps[i].decision.dsap_prob.vals() ==
          b.steps[i].decision.dsap_prob.vals());

  // Every executed segment is a chain of true edges ending at the target.
  const Adjacency truth = full_adjacency(fx.house);
  for (const StepRecord& s : a.steps) {
    if (s.action < 0) continue;
    int prev = s.node;
    for (int hop : s.segment) {
      bool edge = false;
      for (const auto& [to, w] : truth.at(prev)) edge = edge || to == hop;
      CHECK(edge);
      prev = hop;
    }
    CHECK(prev == s.action);
  }
}

TEST_CASE("sampled rollouts are seed-reproducible with valid distributions") {
  Fixture fx(121);
  LadModel model(tiny_cfg(), 20);
  NoGradGuard ng;
  RolloutOptions opt;
  opt.mode = ActMode::kSample;
  Rng r1(7), r2(7), r3(8);
  Rollout a = run_episode(model, fx.house, fx.ep, fx.cb, fx.im, opt, r1);
  Rollout b = run_episode(model, fx.house, fx.ep, fx.cb, fx.im, opt, r2);
  CHECK(a.path == b.path);
  Rollout c = run_episode(model, fx.house, fx.ep, fx.cb, fx.im, opt, r3);
  (void)c;

  std::vector<int> visited;
  for (const StepRecord& s : a.steps) {
    const StepDecision& d = s.decision;
    visited.push_back(s.node);
    double total = 0.0;
    for (int64_t i = 0; i < d.dsap_prob.size(); ++i) {
      if (!d.dsap_mask[static_cast<size_t>(i)]) CHECK(d.dsap_prob.at(i) == 0.0);
      total += d.dsap_prob.at(i);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.dsap_mask[0] == 1);
    // Support never includes a node already walked through.
    for (size_t i = 0; i < d.order.size(); ++i)
      if (d.dsap_mask[i + 1])
        CHECK(std::find(visited.begin(), visited.end(), d.order[i]) ==
              visited.end());
  }
}

TEST_CASE("teacher rollout reproduces the gold path and stops") {
  Fixture fx(131);
  LadModel model(tiny_cfg(), 21);
  NoGradGuard ng;
  RolloutOptions opt;
  opt.mode = ActMode::kTeacher;
  Rng rng(3);
  Rollout r = run_episode(model, fx.house, fx.ep, fx.cb, fx.im, opt, rng);
  CHECK(r.path == fx.ep.gold_path);
  CHECK(r.end_node == fx.ep.goal);
  CHECK(r.stopped);
  CHECK(r.steps.back().label == -1);
  for (const StepRecord& s : r.steps)
    CHECK((s.label == -1 || s.label >= 0));
}

TEST_CASE("budget exhaustion forces a stop decision") {
  Fixture fx(141);
  LadModel model(tiny_cfg(), 22);
  NoGradGuard ng;
  RolloutOptions opt;
  opt.mode = ActMode::kTeacher;
  opt.max_steps = 3;
  Rng rng(4);
  REQUIRE(static_cast<int>(fx.ep.gold_path.size()) > 3);
  Rollout r = run_episode(model, fx.house, fx.ep, fx.cb, fx.im, opt, rng);
  CHECK(r.steps.size() == 3);
  CHECK(r.steps.back().forced_stop);
  CHECK(r.steps.back().action == -1);
  CHECK(!r.stopped);
}

TEST_CASE("visited node reps are write-once during rollouts") {
  Fixture fx(151);
  LadModel model(tiny_cfg(), 23);
  NoGradGuard ng;
  EpisodeState state = start_episode(model, fx.house, fx.ep, fx.im);
  RolloutOptions opt;
  opt.mode = ActMode::kRandom;
  Rng rng(6);
  std::map<int, std::vector<double>> frozen;
  while (!state.done) {
    policy_step(model, state, fx.cb, opt, rng);
    for (const MapNode& n : state.map.nodes) {
      if (n.status == NodeStatus::kFrontier) continue;
      auto it = frozen.find(n.id);
      if (it == frozen.end())
        frozen[n.id] = n.rep.vals();
      else
        CHECK(it->second == n.rep.vals());
    }
  }
}

TEST_CASE("ablated variants run the reduced pipeline") {
  Fixture fx(161);
  AgentConfig cfg = tiny_cfg();
  cfg.use_dreamer = false;
  cfg.use_layout = false;
  cfg.use_fuse = false;
  LadModel model(cfg, 24);
  NoGradGuard ng;
  CHECK(!model.params().has("dream.attn.wq"));
  CHECK(!model.params().has("head.lambda.in.w"));
  CHECK(!model.params().has("layout.proj.w"));
  CHECK(!model.params().has("head.fuse.in.w"));

  RolloutOptions opt;
  opt.mode = ActMode::kGreedy;
  Rng rng(9);
  Rollout r = run_episode(model, fx.house, fx.ep, fx.cb, ImaginationSet{}, opt, rng);
  CHECK(!r.steps.empty());
  for (const StepRecord& s : r.steps) {
    CHECK(!s.decision.lambda.defined());
    CHECK(!s.decision.pr_im.defined());
    CHECK(!s.decision.layout.defined());
    CHECK(s.decision.sigma == 0.5);
  }

  AgentConfig cls = tiny_cfg();
  cls.layout_head = "classifier";
  LadModel model2(cls, 25);
  CHECK(model2.params().has("layout.cls.w"));
  TopoMap map = replay_gold(model2, fx.house, fx.ep, 1);
  Tensor lang = model2.encode_instruction(fx.ep.tokens);
  Tensor h = model2.cross_global(model2.gasa(model2.embed_nodes(map, 1), map), lang);
  Tensor scores = model2.layout_predict(h, fx.cb);
  CHECK(scores.rows() == map.size());
  CHECK(scores.cols() == 8);
}
