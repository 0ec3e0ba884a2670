#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "lad/agent.hpp"
#include "lad/checkpoint.hpp"
#include "lad/codebook.hpp"
#include "lad/env.hpp"
#include "lad/error.hpp"
#include "lad/policy.hpp"
#include "lad/rng.hpp"
#include "lad/training.hpp"
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

// Generated multi-house corpus with train and two validation splits, plus
// imagination features for every episode.
struct TrainWorld {
  GenConfig gen = small_gen();
  HouseIndex houses;
  FeatureTable table;
  Codebook cb;
  std::vector<Episode> train, val_seen, val_unseen;
  std::map<std::string, ImaginationSet> ims;
  TrainData data;

  TrainWorld(int n_houses, int eps_per_house, uint64_t seed) {
    table = FeatureTable::build(gen.num_rooms, gen.num_objects, gen.dim,
                                gen.proto_seed);
    cb = build_textual_codebook(table);
    std::vector<HouseGraph> hs;
    for (int h = 0; h < n_houses; ++h)
      hs.push_back(generate_house(gen, seed + static_cast<uint64_t>(h),
                                  "h" + std::to_string(h), "train"));
    hs.push_back(generate_house(gen, seed + 100, "hx", "val-unseen"));
    Rng rng(seed * 31 + 7);
    for (int h = 0; h < n_houses; ++h)
      for (int e = 0; e < eps_per_house; ++e)
        train.push_back(sample_episode(
            hs[static_cast<size_t>(h)], EpisodeConfig{}, rng,
            "tr-" + std::to_string(h) + "-" + std::to_string(e)));
    val_seen.push_back(sample_episode(hs[0], EpisodeConfig{}, rng, "vs-0"));
    val_unseen.push_back(sample_episode(hs.back(), EpisodeConfig{}, rng, "vu-0"));
    houses.add(std::move(hs));

    std::vector<Episode> all = train;
    all.insert(all.end(), val_seen.begin(), val_seen.end());
    all.insert(all.end(), val_unseen.begin(), val_unseen.end());
    ims = imagine_for(all, table, 3, 0.1, seed + 5);

    data.houses = &houses;
    data.train = &train;
    data.val_seen = &val_seen;
    data.val_unseen = &val_unseen;
    data.codebook = &cb;
    data.imaginations = &ims;
  }
};

// Hand-built four-node chain house with one object at the far end; the
// start node has a single neighbor, so the first decision state has exactly
// one frontier node.
struct ChainWorld {
  HouseGraph house;
  Episode ep;
  FeatureTable table;
  Codebook cb;
  std::map<std::string, ImaginationSet> ims;

  ChainWorld() {
    table = FeatureTable::build(8, 16, 8, 9001);
    cb = build_textual_codebook(table);
    house.house_id = "chain";
    house.split = "train";
    house.num_rooms = 8;
    house.num_sectors = 4;
    house.dim = 8;
    for (int i = 0; i < 4; ++i) {
      NavNode n;
      n.id = i;
      n.x = 4.0 * i;
      n.y = 0.0;
      n.room_type = i % 8;
      n.views.resize(4);
      for (int s = 0; s < 4; ++s) {
        n.views[static_cast<size_t>(s)].resize(8);
        for (int k = 0; k < 8; ++k)
          n.views[static_cast<size_t>(s)][static_cast<size_t>(k)] =
              0.1 * (i + 1) + 0.05 * s + 0.01 * k;
      }
      house.nodes.push_back(n);
    }
    house.nodes[0].neighbors = {1};
    house.nodes[1].neighbors = {0, 2};
    house.nodes[2].neighbors = {1, 3};
    house.nodes[3].neighbors = {2};
    house.edges = {{0, 1, 4.0}, {1, 2, 4.0}, {2, 3, 4.0}};
    for (int c = 0; c < 2; ++c) {
      ObjectInstance obj;
      obj.object_class = c;
      obj.sector = c;
      obj.feature = table.object_feat[static_cast<size_t>(c)];
      house.nodes[3].objects.push_back(obj);
    }

    ep.episode_id = "chain-ep";
    ep.house_id = "chain";
    ep.start = 0;
    ep.goal = 3;
    ep.target_object_index = 0;
    ep.target_object_class = 0;
    ep.tokens = {2, 41, 49};
    ep.gold_path = {0, 1, 2, 3};
    ep.gold_length = 12.0;
    ims = imagine_for({ep}, table, 3, 0.1, 7);
  }

  WarmupItem item(int t, bool text = false, uint64_t aux = 11) const {
    WarmupItem it;
    it.house = &house;
    it.ep = &ep;
    it.t = t;
    it.aux_text = text;
    it.aux_seed = aux;
    return it;
  }
};

Tensor param(LadModel& m, const std::string& name) {
  for (auto& [n, t] : m.params().items())
    if (n == name) return t;
  fail("test: missing parameter ", name);
}

std::string tmp_dir(const std::string& leaf) {
  return "/tmp/lad_training_tests/" + leaf;
}

}  // namespace

TEST_CASE("stage defaults, overrides, and validation") {
  Config cfg;
  TrainConfig w = TrainConfig::from_config(cfg, Stage::kWarmup);
  CHECK(w.iterations == 5000);
  CHECK(w.batch_size == 8);
  CHECK(w.lr == doctest::Approx(5e-5));
  CHECK(w.val_every == 250);
  CHECK(w.patience == 10);
  CHECK(w.aux_text_per_batch == 2);
  TrainConfig d = TrainConfig::from_config(cfg, Stage::kDagger);
  CHECK(d.iterations == 3000);
  CHECK(d.batch_size == 4);
  CHECK(d.lr == doctest::Approx(1e-5));
  CHECK(d.dagger_beta0 == doctest::Approx(0.95));
  CHECK_FALSE(d.dagger_greedy);

  cfg.set_int("warmup.iterations", 42);
  cfg.set_double("warmup.lr", 3e-4);
  cfg.set_int("train.threads", 3);
  cfg.set_int("seed", 123);
  cfg.set_double("dagger.beta0", 0.5);
  cfg.set_bool("dagger.greedy", true);
  TrainConfig w2 = TrainConfig::from_config(cfg, Stage::kWarmup);
  CHECK(w2.iterations == 42);
  CHECK(w2.lr == doctest::Approx(3e-4));
  CHECK(w2.threads == 3);
  CHECK(w2.seed == 123);
  TrainConfig d2 = TrainConfig::from_config(cfg, Stage::kDagger);
  CHECK(d2.dagger_beta0 == doctest::Approx(0.5));
  CHECK(d2.dagger_greedy);

  TrainConfig bad = w;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = w;
  bad.lr = -1e-5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = w;
  bad.lr = 0.0;  // zero step size is a legal no-op configuration
  CHECK_NOTHROW(bad.validate());
  bad = w;
  bad.dagger_beta0 = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = w;
  bad.threads = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = w;
  bad.w_lp = -0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("imagination precompute is keyed, sized, and deterministic") {
  TrainWorld world(2, 2, 50);
  CHECK(world.ims.size() == world.train.size() + 2);
  for (const Episode& ep : world.train) {
    auto it = world.ims.find(ep.episode_id);
    REQUIRE(it != world.ims.end());
    CHECK(it->second.count == 3);
    CHECK(it->second.dim == world.gen.dim);
    CHECK(it->second.episode_id == ep.episode_id);
  }
  std::vector<Episode> all = world.train;
  all.insert(all.end(), world.val_seen.begin(), world.val_seen.end());
  all.insert(all.end(), world.val_unseen.begin(), world.val_unseen.end());
  auto again = imagine_for(all, world.table, 3, 0.1, 55);
  CHECK(again.at(world.train[0].episode_id).data ==
        world.ims.at(world.train[0].episode_id).data);
  // Distinct episodes draw from distinct streams even with equal tokens.
  CHECK(world.ims.at(world.train[0].episode_id).data !=
        world.ims.at(world.train[1].episode_id).data);
}

TEST_CASE("warmup batches sample valid prefixes deterministically") {
  TrainWorld world(2, 3, 60);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 5;
  cfg.aux_text_per_batch = 2;
  Rng r1(9), r2(9);
  WarmupBatch b1 = sample_warmup_batch(world.data, cfg, r1);
  WarmupBatch b2 = sample_warmup_batch(world.data, cfg, r2);
  REQUIRE(b1.items.size() == 5);
  int text = 0;
  for (size_t i = 0; i < b1.items.size(); ++i) {
    const WarmupItem& it = b1.items[i];
    CHECK(it.t >= 1);
    CHECK(it.t <= static_cast<int>(it.ep->gold_path.size()));
    CHECK(&world.houses.get(it.ep->house_id) == it.house);
    text += it.aux_text ? 1 : 0;
    CHECK(b2.items[i].ep->episode_id == it.ep->episode_id);
    CHECK(b2.items[i].t == it.t);
    CHECK(b2.items[i].aux_text == it.aux_text);
    CHECK(b2.items[i].aux_seed == it.aux_seed);
  }
  CHECK(text == 2);

  cfg.aux_text_per_batch = 9;  // more than the batch holds
  Rng r3(10);
  WarmupBatch b3 = sample_warmup_batch(world.data, cfg, r3);
  int text3 = 0;
  for (const WarmupItem& it : b3.items) text3 += it.aux_text ? 1 : 0;
  CHECK(text3 == 5);
}

TEST_CASE("warmup total equals the weighted sum of its parts") {
  TrainWorld world(2, 2, 70);
  LadModel model(tiny_cfg(), 3);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 6;
  cfg.aux_text_per_batch = 2;
  Rng rng(4);
  WarmupBatch batch = sample_warmup_batch(world.data, cfg, rng);
  WarmupLosses l = warmup_losses(model, batch, world.cb, world.ims, cfg);
  CHECK(l.items == 6);
  CHECK(l.text_items == 2);
  CHECK(l.og_items + l.skipped_og == 6);
  double sum = l.mlm.item() + l.mrc.item() + l.og.item() + l.lp.item() +
               l.d.item() + l.dsap.item();
  CHECK(std::abs(l.total.item() - sum) <= 1e-12);

  cfg.w_mlm = 0.5;
  cfg.w_mrc = 2.0;
  cfg.w_og = 1.5;
  cfg.w_lp = 0.7;
  cfg.w_d = 3.0;
  cfg.w_dsap = 1.1;
  WarmupLosses lw = warmup_losses(model, batch, world.cb, world.ims, cfg);
  double wsum = 0.5 * lw.mlm.item() + 2.0 * lw.mrc.item() +
                1.5 * lw.og.item() + 0.7 * lw.lp.item() + 3.0 * lw.d.item() +
                1.1 * lw.dsap.item();
  CHECK(std::abs(lw.total.item() - wsum) <= 1e-12);
  // Reweighting scales the aggregate, not the raw components.
  CHECK(lw.dsap.item() == doctest::Approx(l.dsap.item()).epsilon(1e-12));
}

TEST_CASE("untrained layout loss sits near uniform over room types") {
  TrainWorld world(2, 4, 80);
  LadModel model(tiny_cfg(), 21);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 8;
  cfg.aux_text_per_batch = 0;
  Rng rng(6);
  WarmupBatch batch = sample_warmup_batch(world.data, cfg, rng);
  WarmupLosses l = warmup_losses(model, batch, world.cb, world.ims, cfg);
  CHECK(l.lp.item() == doctest::Approx(std::log(8.0)).epsilon(0.3 / std::log(8.0)));
}

TEST_CASE("single-frontier dreamer loss is exactly zero") {
  ChainWorld world;
  LadModel model(tiny_cfg(), 8);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 1;
  WarmupBatch batch;
  batch.items.push_back(world.item(1));
  WarmupLosses l = warmup_losses(model, batch, world.cb, world.ims, cfg);
  CHECK(l.d_items == 1);
  CHECK(l.d.item() == 0.0);
  CHECK(l.dsap.item() > 0.0);
  CHECK(l.og_items == 0);
  CHECK(l.skipped_og == 1);
}

TEST_CASE("goal-state items supervise grounding and skip the dreamer") {
  ChainWorld world;
  LadModel model(tiny_cfg(), 8);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 1;
  WarmupBatch batch;
  batch.items.push_back(world.item(4));
  WarmupLosses l = warmup_losses(model, batch, world.cb, world.ims, cfg);
  CHECK(l.og_items == 1);
  CHECK(l.skipped_d == 1);
  CHECK(l.d_items == 0);
  CHECK(l.d.item() == 0.0);
  CHECK(l.og.item() > 0.0);
}

TEST_CASE("text losses backpropagate: finite differences agree") {
  ChainWorld world;
  LadModel model(tiny_cfg(), 13);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 1;
  cfg.w_og = 0.0;
  cfg.w_lp = 0.0;
  cfg.w_d = 0.0;
  cfg.w_dsap = 0.0;
  WarmupBatch batch;
  batch.items.push_back(world.item(2, true, 17));
  auto f = [&]() {
    return warmup_losses(model, batch, world.cb, world.ims, cfg).total;
  };
  std::vector<Tensor> inputs = {
      param(model, "head.mlm.w"), param(model, "head.mrc.w"),
      param(model, "lang.token"), param(model, "map.visual_proj.w")};
  std::string worst;
  double err = grad_check(f, inputs, 1e-5, 3, 5, 1e-4, &worst);
  INFO("worst: " << worst);
  CHECK(err <= 1e-4);
}

TEST_CASE("full-teacher rollouts reproduce the gold paths") {
  TrainWorld world(2, 3, 90);
  LadModel model(tiny_cfg(), 9);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 3;
  std::vector<const HouseGraph*> houses;
  std::vector<const Episode*> eps;
  for (size_t i = 0; i < 3; ++i) {
    eps.push_back(&world.train[i]);
    houses.push_back(&world.houses.get(world.train[i].house_id));
  }
  Rng rng(14);
  DaggerLosses l =
      dagger_losses(model, houses, eps, world.cb, world.ims, 1.0, cfg, rng);
  REQUIRE(l.rollouts.size() == 3);
  double dsap_manual = 0.0;
  for (size_t i = 0; i < 3; ++i) {
    const Rollout& roll = l.rollouts[i];
    CHECK(roll.path == eps[i]->gold_path);
    CHECK_FALSE(roll.steps.back().forced_stop);
    double ep_sum = 0.0;
    for (size_t k = 0; k < roll.steps.size(); ++k) {
      const StepRecord& rec = roll.steps[k];
      // Teacher labels along the gold path name the next gold node.
      if (k + 1 < eps[i]->gold_path.size())
        CHECK(rec.label == eps[i]->gold_path[k + 1]);
      else
        CHECK(rec.label == -1);
      int64_t target = 0;
      if (rec.label >= 0) {
        auto pos = std::find(rec.decision.order.begin(),
                             rec.decision.order.end(), rec.label);
        REQUIRE(pos != rec.decision.order.end());
        target = 1 + (pos - rec.decision.order.begin());
      }
      ep_sum += cross_entropy(rec.decision.dsap_logits, {target},
                              &rec.decision.dsap_mask)
                    .item();
    }
    dsap_manual += ep_sum / static_cast<double>(roll.steps.size());
  }
  dsap_manual /= 3.0;
  CHECK(std::abs(l.dsap.item() - dsap_manual) <= 1e-12);
  CHECK(l.og_steps == 3);  // every teacher rollout ends at the goal
}

TEST_CASE("mixture rollouts carry teacher labels matching a chain oracle") {
  TrainWorld world(1, 1, 95);
  LadModel model(tiny_cfg(), 10);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 20;
  const Episode& ep = world.train[0];
  const HouseGraph& house = world.houses.get(ep.house_id);
  std::vector<const HouseGraph*> houses(20, &house);
  std::vector<const Episode*> eps(20, &ep);
  Rng rng(15);
  DaggerLosses l =
      dagger_losses(model, houses, eps, world.cb, world.ims, 0.5, cfg, rng);
  REQUIRE(l.rollouts.size() == 20);
  std::set<std::vector<int>> distinct;
  for (const Rollout& roll : l.rollouts) {
    distinct.insert(roll.path);
    std::set<int> visited;
    for (const StepRecord& rec : roll.steps) {
      visited.insert(rec.node);
      int expect;
      if (rec.node == ep.goal) {
        expect = -1;
      } else {
        expect = -2;
        int v = rec.node;
        for (size_t guard = 0; guard <= house.nodes.size(); ++guard) {
          if (v == ep.goal) break;  // chain exhausted: goal already visited
          v = teacher_next(house, v, ep.goal);
          if (!visited.count(v)) {
            expect = v;
            break;
          }
        }
      }
      CHECK(rec.label == expect);
    }
  }
  CHECK(distinct.size() > 1);  // the coin actually mixes policies
}

TEST_CASE("gradient reduction is thread-count invariant") {
  TrainWorld world(2, 2, 100);
  LadModel model(tiny_cfg(), 11);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 6;
  cfg.aux_text_per_batch = 2;
  Rng rng(16);
  WarmupBatch batch = sample_warmup_batch(world.data, cfg, rng);
  auto item_loss = [&](int i) {
    WarmupBatch one;
    one.items.push_back(batch.items[static_cast<size_t>(i)]);
    return scale(warmup_losses(model, one, world.cb, world.ims, cfg).total,
                 1.0 / 6.0);
  };
  GradStore g1 = parallel_grad(6, 1, item_loss);
  GradStore g3 = parallel_grad(6, 3, item_loss);
  CHECK(g1.entry_count() == g3.entry_count());
  double worst = 0.0;
  for (auto& [name, t] : model.params().items()) {
    const std::vector<double>* a = g1.find(t);
    const std::vector<double>* b = g3.find(t);
    CHECK((a == nullptr) == (b == nullptr));
    if (!a || !b) continue;
    REQUIRE(a->size() == b->size());
    for (size_t i = 0; i < a->size(); ++i)
      worst = std::max(worst, std::abs((*a)[i] - (*b)[i]));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("a short warmup run reduces the training loss") {
  TrainWorld world(2, 2, 110);
  LadModel model(tiny_cfg(), 12);
  TrainConfig cfg;
  cfg.iterations = 200;
  cfg.batch_size = 4;
  cfg.lr = 5e-4;
  cfg.val_every = 0;
  cfg.threads = 2;
  cfg.seed = 33;
  TrainResult r =
      train(Stage::kWarmup, model, world.data, cfg, tmp_dir("overfit"));
  REQUIRE(r.loss_history.size() == 200);
  CHECK(r.iterations_run == 200);
  CHECK_FALSE(r.early_stopped);
  auto mean_of = [&](size_t lo, size_t hi) {
    double s = 0.0;
    for (size_t i = lo; i < hi; ++i) s += r.loss_history[i];
    return s / static_cast<double>(hi - lo);
  };
  CHECK(r.loss_history.back() < r.loss_history.front());
  CHECK(mean_of(190, 200) < mean_of(0, 10));
  CHECK(std::filesystem::exists(tmp_dir("overfit") + "/last.ckpt"));
  CHECK(std::filesystem::exists(tmp_dir("overfit") + "/metrics.log"));
}

TEST_CASE("zero learning rate leaves every parameter bit-identical") {
  TrainWorld world(1, 2, 120);
  LadModel model(tiny_cfg(), 14);
  std::vector<std::vector<double>> before;
  for (auto& [name, t] : model.params().items()) before.push_back(t.vals());
  TrainConfig cfg;
  cfg.iterations = 15;
  cfg.batch_size = 2;
  cfg.lr = 0.0;
  cfg.val_every = 0;
  cfg.seed = 44;
  train(Stage::kWarmup, model, world.data, cfg, tmp_dir("zero-lr"));
  size_t ix = 0;
  for (auto& [name, t] : model.params().items()) {
    INFO("parameter " << name);
    CHECK(t.vals() == before[ix]);
    ++ix;
  }
}

TEST_CASE("identical seeds give identical logs and losses") {
  TrainWorld world(2, 2, 130);
  TrainConfig cfg;
  cfg.iterations = 12;
  cfg.batch_size = 2;
  cfg.lr = 1e-4;
  cfg.val_every = 6;
  cfg.val_episodes = 1;
  cfg.seed = 77;
  LadModel m1(tiny_cfg(), 20), m2(tiny_cfg(), 20);
  TrainResult r1 = train(Stage::kWarmup, m1, world.data, cfg, tmp_dir("rep-a"));
  TrainResult r2 = train(Stage::kWarmup, m2, world.data, cfg, tmp_dir("rep-b"));
  CHECK(r1.loss_history == r2.loss_history);
  CHECK(r1.log == r2.log);
  CHECK(r1.best_iteration == r2.best_iteration);
}

TEST_CASE("non-finite losses abort with the offending iteration") {
  TrainWorld world(1, 2, 140);
  LadModel model(tiny_cfg(), 15);
  param(model, "map.visual_proj.w").vals()[0] = std::nan("");
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.batch_size = 2;
  cfg.lr = 1e-4;
  cfg.val_every = 0;
  cfg.seed = 55;
  bool threw = false;
  try {
    train(Stage::kWarmup, model, world.data, cfg, tmp_dir("nan"));
  } catch (const Error& e) {
    threw = true;
    const std::string msg = e.what();
    CHECK(msg.find("iteration 1") != std::string::npos);
    CHECK(msg.find("tr-0-") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("validation tracks the best checkpoint and writes loadable files") {
  TrainWorld world(2, 2, 150);
  LadModel model(tiny_cfg(), 16);
  TrainConfig cfg;
  cfg.iterations = 10;
  cfg.batch_size = 2;
  cfg.lr = 1e-4;
  cfg.val_every = 5;
  cfg.seed = 66;
  TrainResult r =
      train(Stage::kWarmup, model, world.data, cfg, tmp_dir("val"));
  CHECK(r.best_val_sr >= 0.0);
  CHECK(r.best_iteration >= 1);
  int val_seen_lines = 0, val_unseen_lines = 0;
  for (const std::string& line : r.log) {
    val_seen_lines += line.find("split=val-seen") != std::string::npos;
    val_unseen_lines += line.find("split=val-unseen") != std::string::npos;
  }
  CHECK(val_seen_lines == 2);
  CHECK(val_unseen_lines == 2);
  REQUIRE(std::filesystem::exists(r.best_checkpoint));
  REQUIRE(std::filesystem::exists(r.last_checkpoint));
  LadModel fresh(tiny_cfg(), 99);
  CHECK_NOTHROW(load_params(r.best_checkpoint, fresh.params()));
}

TEST_CASE("policy-stage training decays the teacher coin per epoch") {
  TrainWorld world(2, 2, 160);
  LadModel model(tiny_cfg(), 17);
  TrainConfig cfg;
  cfg.iterations = 4;
  cfg.batch_size = 2;
  cfg.lr = 1e-4;
  cfg.val_every = 0;
  cfg.iters_per_epoch = 2;
  cfg.dagger_beta0 = 0.5;
  cfg.seed = 88;
  TrainResult r =
      train(Stage::kDagger, model, world.data, cfg, tmp_dir("dagger"));
  REQUIRE(r.loss_history.size() == 4);
  for (double v : r.loss_history) CHECK(std::isfinite(v));
  CHECK(r.log[0].find("stage=dagger") != std::string::npos);
  CHECK(r.log[0].find("beta=1") != std::string::npos);
  CHECK(r.log[1].find("beta=1") != std::string::npos);
  CHECK(r.log[2].find("beta=0.5") != std::string::npos);
  CHECK(r.log[3].find("beta=0.5") != std::string::npos);
}
