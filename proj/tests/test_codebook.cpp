#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <vector>

#include "doctest.h"
#include "lad/codebook.hpp"
#include "lad/env.hpp"
#include "lad/error.hpp"
#include "lad/rng.hpp"
#include "lad/vocab.hpp"

using namespace lad;

namespace {

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

std::vector<std::vector<double>> blob_points(Rng& rng, double cx, double cy,
                                             int n, double sigma) {
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < n; ++i)
    pts.push_back({cx + rng.normal(0.0, sigma), cy + rng.normal(0.0, sigma)});
  return pts;
}

double partition_inertia(const std::vector<std::vector<double>>& pts,
                         const std::vector<int>& assign, int k) {
  const size_t dim = pts[0].size();
  std::vector<std::vector<double>> means(static_cast<size_t>(k),
                                         std::vector<double>(dim, 0.0));
  std::vector<int> counts(static_cast<size_t>(k), 0);
  for (size_t i = 0; i < pts.size(); ++i) {
    ++counts[static_cast<size_t>(assign[i])];
    for (size_t e = 0; e < dim; ++e)
      means[static_cast<size_t>(assign[i])][e] += pts[i][e];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<size_t>(c)] == 0)
      return std::numeric_limits<double>::infinity();
    for (size_t e = 0; e < dim; ++e)
      means[static_cast<size_t>(c)][e] /= counts[static_cast<size_t>(c)];
  }
  double inertia = 0.0;
  for (size_t i = 0; i < pts.size(); ++i)
    inertia += dist2(pts[i], means[static_cast<size_t>(assign[i])]);
  return inertia;
}

FeatureTable one_room_table(double object_x) {
  FeatureTable t;
  t.num_rooms = 1;
  t.num_objects = 1;
  t.dim = 2;
  t.room_proto = {{0.0, 0.0}};
  t.object_feat = {{object_x, 0.0}};
  t.high_freq = {{0}};
  return t;
}

}  // namespace

TEST_CASE("kmeans with k equal to n gives zero inertia") {
  std::vector<std::vector<double>> pts = {{0, 0}, {3, 1}, {-2, 5}, {7, -4}};
  KmeansResult r = kmeans(pts, 4, 11);
  CHECK(r.inertia == 0.0);
  std::set<std::pair<double, double>> centroid_set, point_set;
  for (const auto& c : r.centroids) centroid_set.insert({c[0], c[1]});
  for (const auto& p : pts) point_set.insert({p[0], p[1]});
  CHECK(centroid_set == point_set);
  for (size_t i = 0; i < pts.size(); ++i)
    CHECK(r.centroids[static_cast<size_t>(r.assignments[i])] == pts[i]);
}

TEST_CASE("kmeans recovers two separated blobs") {
  Rng rng(21);
  auto pts = blob_points(rng, 10.0, 0.0, 30, 0.01);
  auto neg = blob_points(rng, -10.0, 0.0, 30, 0.01);
  pts.insert(pts.end(), neg.begin(), neg.end());
  KmeansResult r = kmeans(pts, 2, 5);
  REQUIRE(r.centroids.size() == 2);
  std::vector<double> xs = {r.centroids[0][0], r.centroids[1][0]};
  std::sort(xs.begin(), xs.end());
  CHECK(std::fabs(xs[0] + 10.0) <= 0.1);
  CHECK(std::fabs(xs[1] - 10.0) <= 0.1);
}

TEST_CASE("kmeans inertia is non-increasing and the result is a fixed point") {
  Rng rng(31);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 20; ++i)
    pts.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)});
  KmeansResult r = kmeans(pts, 3, 7);
  REQUIRE(!r.inertia_trace.empty());
  for (size_t i = 1; i < r.inertia_trace.size(); ++i)
    CHECK(r.inertia_trace[i] <= r.inertia_trace[i - 1] + 1e-12);

  // Exhaustive assignment check: every point sits with its nearest centroid.
  for (size_t i = 0; i < pts.size(); ++i) {
    const double assigned = dist2(pts[i], r.centroids[static_cast<size_t>(r.assignments[i])]);
    for (const auto& c : r.centroids) CHECK(assigned <= dist2(pts[i], c) + 1e-12);
  }
  // Centroids equal member means.
  for (int c = 0; c < 3; ++c) {
    std::vector<double> mean(3, 0.0);
    int count = 0;
    for (size_t i = 0; i < pts.size(); ++i) {
      if (r.assignments[i] != c) continue;
      ++count;
      for (int e = 0; e < 3; ++e) mean[static_cast<size_t>(e)] += pts[i][static_cast<size_t>(e)];
    }
    REQUIRE(count > 0);
    for (int e = 0; e < 3; ++e) {
      mean[static_cast<size_t>(e)] /= count;
      CHECK(r.centroids[static_cast<size_t>(c)][static_cast<size_t>(e)] ==
            doctest::Approx(mean[static_cast<size_t>(e)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("kmeans matches exhaustive partition search on separated data") {
  Rng rng(41);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 4; ++i)
    pts.push_back({rng.normal(0.0, 0.2), rng.normal(0.0, 0.2)});
  for (int i = 0; i < 4; ++i)
    pts.push_back({8.0 + rng.normal(0.0, 0.2), rng.normal(0.0, 0.2)});
  KmeansResult r = kmeans(pts, 2, 9);

  double best = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(pts.size());
  for (int mask = 1; mask < (1 << n) - 1; ++mask) {
    std::vector<int> assign(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) assign[static_cast<size_t>(i)] = (mask >> i) & 1;
    best = std::min(best, partition_inertia(pts, assign, 2));
  }
  CHECK(r.inertia == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("kmeans rejects invalid k") {
  std::vector<std::vector<double>> pts = {{0, 0}, {1, 1}};
  CHECK_THROWS_AS(kmeans(pts, 3, 1), Error);
  CHECK_THROWS_AS(kmeans(pts, 0, 1), Error);
}

TEST_CASE("kmeans handles identical points deterministically") {
  std::vector<std::vector<double>> pts(10, {2.0, 3.0});
  KmeansResult a = kmeans(pts, 3, 13);
  KmeansResult b = kmeans(pts, 3, 13);
  CHECK(a.assignments == b.assignments);
  CHECK(a.inertia == 0.0);
  for (const auto& c : a.centroids) CHECK(c == std::vector<double>{2.0, 3.0});
}

TEST_CASE("degenerate codebook build selects the prototype-plus-objects vector") {
  FeatureTable t = FeatureTable::build(8, 16, 16, 500);
  CodebookConfig cfg;
  cfg.n_samples = 20;
  cfg.entries_per_room = 3;
  cfg.sigma = 0.0;
  cfg.mixture_prob = 1.0;  // exactly one possible mixture
  Codebook cb = build_room_codebook(t, cfg, 77);
  for (int room = 0; room < 8; ++room) {
    std::vector<double> expect = t.room_proto[static_cast<size_t>(room)];
    for (int c : t.high_freq[static_cast<size_t>(room)])
      for (int e = 0; e < t.dim; ++e)
        expect[static_cast<size_t>(e)] += t.object_feat[static_cast<size_t>(c)][static_cast<size_t>(e)];
    for (int s = 0; s < cfg.entries_per_room; ++s)
      CHECK(cb.entry_vec(room, s) == expect);
  }
}

TEST_CASE("codebook picks one representative per separated blob") {
  FeatureTable t = one_room_table(20.0);
  CodebookConfig cfg;
  cfg.n_samples = 40;
  cfg.entries_per_room = 2;
  cfg.sigma = 0.01;
  cfg.mixture_prob = 0.5;  // half the samples carry the object offset
  Codebook cb = build_room_codebook(t, cfg, 3);
  std::vector<double> xs = {cb.entry(0, 0)[0], cb.entry(0, 1)[0]};
  std::sort(xs.begin(), xs.end());
  CHECK(std::fabs(xs[0]) <= 1.0);
  CHECK(std::fabs(xs[1] - 20.0) <= 1.0);
}

TEST_CASE("codebook entries are generated samples, never synthesized vectors") {
  // With zero noise every sample is one of four exact mixture vectors, so
  // entry membership can be checked against the closed set.
  FeatureTable t = FeatureTable::build(8, 16, 12, 501);
  CodebookConfig cfg;
  cfg.n_samples = 100;
  cfg.entries_per_room = 4;
  cfg.sigma = 0.0;
  cfg.mixture_prob = 0.5;
  Codebook cb = build_room_codebook(t, cfg, 11);
  for (int room = 0; room < 8; ++room) {
    std::vector<std::vector<double>> possible;
    const auto& hf = t.high_freq[static_cast<size_t>(room)];
    for (int mask = 0; mask < (1 << hf.size()); ++mask) {
      std::vector<double> v = t.room_proto[static_cast<size_t>(room)];
      for (size_t j = 0; j < hf.size(); ++j)
        if ((mask >> j) & 1)
          for (int e = 0; e < t.dim; ++e)
            v[static_cast<size_t>(e)] +=
                t.object_feat[static_cast<size_t>(hf[j])][static_cast<size_t>(e)];
      possible.push_back(std::move(v));
    }
    for (int s = 0; s < cfg.entries_per_room; ++s) {
      const std::vector<double> entry = cb.entry_vec(room, s);
      CHECK(std::count(possible.begin(), possible.end(), entry) >= 1);
    }
  }
}

TEST_CASE("codebook build is deterministic and entries distinct at default config") {
  FeatureTable t = FeatureTable::build(8, 16, 32, 502);
  CodebookConfig cfg;
  Codebook a = build_room_codebook(t, cfg, 99);
  Codebook b = build_room_codebook(t, cfg, 99);
  CHECK(a.data == b.data);
  CHECK(a.labels == b.labels);
  Codebook c = build_room_codebook(t, cfg, 100);
  CHECK(a.data != c.data);
  for (int room = 0; room < a.num_rooms; ++room)
    for (int s = 0; s < a.entries_per_room; ++s)
      for (int s2 = s + 1; s2 < a.entries_per_room; ++s2)
        CHECK(a.entry_vec(room, s) != a.entry_vec(room, s2));
  CHECK(a.labels[1] == "bathroom");
  CHECK(a.seed == 99);
  CHECK(a.n_samples == cfg.n_samples);
}

TEST_CASE("nearest-room scoring classifies clean prototypes perfectly") {
  FeatureTable t = FeatureTable::build(8, 16, 32, 503);
  for (double sigma : {0.05, 0.1, 0.2}) {
    CodebookConfig cfg;
    cfg.sigma = sigma;
    Codebook cb = build_room_codebook(t, cfg, 7);
    for (int room = 0; room < 8; ++room) {
      const std::vector<double> scores =
          room_scores(t.room_proto[static_cast<size_t>(room)], cb);
      const int argmax = static_cast<int>(
          std::max_element(scores.begin(), scores.end()) - scores.begin());
      CHECK(argmax == room);
    }
  }
  Codebook textual = build_textual_codebook(t);
  CHECK(textual.entries_per_room == 1);
  for (int room = 0; room < 8; ++room) {
    CHECK(textual.entry_vec(room, 0) == t.room_proto[static_cast<size_t>(room)]);
    const std::vector<double> scores =
        room_scores(t.room_proto[static_cast<size_t>(room)], textual);
    const int argmax = static_cast<int>(
        std::max_element(scores.begin(), scores.end()) - scores.begin());
    CHECK(argmax == room);
  }
}

TEST_CASE("codebook file round trip") {
  FeatureTable t = FeatureTable::build(8, 16, 16, 504);
  CodebookConfig cfg;
  cfg.entries_per_room = 3;
  Codebook cb = build_room_codebook(t, cfg, 42);
  const std::string path = "test_codebook.bin";
  save_codebook(path, cb);
  Codebook r = load_codebook(path);
  CHECK(r.num_rooms == cb.num_rooms);
  CHECK(r.entries_per_room == cb.entries_per_room);
  CHECK(r.dim == cb.dim);
  CHECK(r.data == cb.data);
  CHECK(r.labels == cb.labels);
  CHECK(r.seed == cb.seed);
  CHECK(r.n_samples == cb.n_samples);
  CHECK(r.sigma == cb.sigma);
  std::remove(path.c_str());
}

TEST_CASE("imagination is a pure function of the instruction") {
  FeatureTable t = FeatureTable::build(8, 16, 32, 505);
  const std::vector<int> tokens = make_instruction(0, 1, 2);

  ImaginationSet zero = imagine_destination(tokens, t, 5, 0.0, 9, "ep0");
  REQUIRE(zero.count == 5);
  std::vector<double> base(static_cast<size_t>(t.dim));
  for (int e = 0; e < t.dim; ++e)
    base[static_cast<size_t>(e)] = t.room_proto[1][static_cast<size_t>(e)] +
                                   t.object_feat[2][static_cast<size_t>(e)];
  for (int i = 0; i < 5; ++i)
    for (int e = 0; e < t.dim; ++e)
      CHECK(zero.vec(i)[e] == base[static_cast<size_t>(e)]);

  ImaginationSet a = imagine_destination(tokens, t, 5, 0.1, 10, "a");
  ImaginationSet b = imagine_destination(tokens, t, 5, 0.1, 11, "b");
  CHECK(a.data != b.data);
  ImaginationSet a2 = imagine_destination(tokens, t, 5, 0.1, 10, "a");
  CHECK(a.data == a2.data);

  // Means across many seeds agree with the noiseless base per coordinate.
  std::vector<double> mean(static_cast<size_t>(t.dim), 0.0);
  const int draws = 1000;
  for (int s = 0; s < draws; ++s) {
    ImaginationSet im = imagine_destination(tokens, t, 5, 0.1, 1000 + s);
    for (int i = 0; i < im.count; ++i)
      for (int e = 0; e < t.dim; ++e) mean[static_cast<size_t>(e)] += im.vec(i)[e];
  }
  for (int e = 0; e < t.dim; ++e) {
    mean[static_cast<size_t>(e)] /= draws * 5.0;
    CHECK(std::fabs(mean[static_cast<size_t>(e)] - base[static_cast<size_t>(e)]) <=
          0.01);
  }

  CHECK_THROWS_AS(
      imagine_destination({Vocab::get().id("go"), Vocab::get().id("to")}, t, 5,
                          0.1, 1),
      Error);
}

TEST_CASE("imagination points toward the true goal more often than chance") {
  GenConfig g;
  g.transition = default_transition_matrix();
  g.nodes_min = 16;
  g.nodes_max = 24;
  FeatureTable t = FeatureTable::build(g.num_rooms, g.num_objects, g.dim, g.proto_seed);
  EpisodeConfig ec;
  Rng rng(60);
  int wins = 0, total = 0;
  for (int hi = 0; hi < 25 && total < 500; ++hi) {
    HouseGraph h = generate_house(g, rng.next_u64(), "im", "train");
    for (int j = 0; j < 20 && total < 500; ++j) {
      Rng er = rng.child("imep", static_cast<uint64_t>(hi), static_cast<uint64_t>(j));
      Episode ep = sample_episode(h, ec, er, "e");
      ImaginationSet im =
          imagine_destination(ep.tokens, t, 5, 0.1, er.next_u64());
      std::vector<double> pooled(static_cast<size_t>(t.dim), 0.0);
      for (int i = 0; i < im.count; ++i)
        for (int e = 0; e < t.dim; ++e)
          pooled[static_cast<size_t>(e)] += im.vec(i)[e] / im.count;

      auto node_pool = [&](int node) {
        std::vector<double> p(static_cast<size_t>(t.dim), 0.0);
        const NavNode& n = h.nodes[static_cast<size_t>(node)];
        for (const auto& view : n.views)
          for (int e = 0; e < t.dim; ++e)
            p[static_cast<size_t>(e)] += view[static_cast<size_t>(e)] /
                                         static_cast<double>(n.views.size());
        return p;
      };
      int other = static_cast<int>(
          er.uniform_int(0, static_cast<int64_t>(h.nodes.size()) - 1));
      if (other == ep.goal) other = (other + 1) % static_cast<int>(h.nodes.size());
      ++total;
      if (cosine(pooled, node_pool(ep.goal)) > cosine(pooled, node_pool(other)))
        ++wins;
    }
  }
  CHECK(total == 500);
  CHECK(wins >= 400);
}

TEST_CASE("imagination cache round trip") {
  FeatureTable t = FeatureTable::build(8, 16, 8, 506);
  std::vector<ImaginationSet> sets;
  sets.push_back(imagine_destination(make_instruction(1, 3, 6), t, 5, 0.1, 1, "ep-a"));
  sets.push_back(imagine_destination(make_instruction(2, 0, 1), t, 5, 0.1, 2, "ep-b"));
  const std::string path = "test_imagine.bin";
  save_imaginations(path, sets);
  const std::vector<ImaginationSet> r = load_imaginations(path);
  REQUIRE(r.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(r[i].episode_id == sets[i].episode_id);
    CHECK(r[i].count == sets[i].count);
    CHECK(r[i].dim == sets[i].dim);
    CHECK(r[i].data == sets[i].data);
  }
  std::remove(path.c_str());
}
