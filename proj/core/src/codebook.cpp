#include "lad/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lad/checkpoint.hpp"
#include "lad/error.hpp"
#include "lad/tensor.hpp"
#include "lad/vocab.hpp"

namespace lad {

namespace {

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<std::vector<double>> seed_centroids(
    const std::vector<std::vector<double>>& points, int k, Rng& rng) {
  const int n = static_cast<int>(points.size());
  std::vector<std::vector<double>> centroids;
  std::vector<bool> chosen(static_cast<size_t>(n), false);
  const int first = static_cast<int>(rng.uniform_int(0, n - 1));
  centroids.push_back(points[static_cast<size_t>(first)]);
  chosen[static_cast<size_t>(first)] = true;
  std::vector<double> d2(static_cast<size_t>(n));
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids)
        best = std::min(best, dist2(points[static_cast<size_t>(i)], c));
      d2[static_cast<size_t>(i)] = best;
      total += best;
    }
    int pick = -1;
    if (total > 0.0) {
      pick = static_cast<int>(rng.categorical(d2));
    } else {
      // All remaining points coincide with a centroid; take the smallest
      // index not yet chosen so seeding stays deterministic.
      for (int i = 0; i < n; ++i)
        if (!chosen[static_cast<size_t>(i)]) {
          pick = i;
          break;
        }
      if (pick < 0) pick = 0;
    }
    chosen[static_cast<size_t>(pick)] = true;
    centroids.push_back(points[static_cast<size_t>(pick)]);
  }
  return centroids;
}

}  // namespace

KmeansResult kmeans(const std::vector<std::vector<double>>& points, int k,
                    uint64_t seed, int max_iters) {
  const int n = static_cast<int>(points.size());
  LAD_CHECK(k > 0, "kmeans: k must be positive, got ", k);
  LAD_CHECK(k <= n, "kmeans: k=", k, " exceeds point count ", n);
  LAD_CHECK(max_iters > 0, "kmeans: max_iters must be positive");
  Rng rng(seed);

  KmeansResult res;
  res.centroids = seed_centroids(points, k, rng);
  res.assignments.assign(static_cast<size_t>(n), -1);
  const size_t dim = points[0].size();

  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<int> assign(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      int best_c = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = dist2(points[static_cast<size_t>(i)],
                               res.centroids[static_cast<size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best_c = c;
        }
      }
      assign[static_cast<size_t>(i)] = best_c;
    }

    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (int a : assign) ++counts[static_cast<size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) continue;
      int steal = -1;
      double far = -1.0;
      for (int i = 0; i < n; ++i) {
        const int a = assign[static_cast<size_t>(i)];
        if (counts[static_cast<size_t>(a)] <= 1) continue;
        const double d = dist2(points[static_cast<size_t>(i)],
                               res.centroids[static_cast<size_t>(a)]);
        if (d > far) {
          far = d;
          steal = i;
        }
      }
      LAD_CHECK(steal >= 0, "kmeans: cannot repair empty cluster ", c);
      --counts[static_cast<size_t>(assign[static_cast<size_t>(steal)])];
      assign[static_cast<size_t>(steal)] = c;
      ++counts[static_cast<size_t>(c)];
    }

    const bool stable = assign == res.assignments;
    res.assignments = assign;
    for (int c = 0; c < k; ++c)
      std::fill(res.centroids[static_cast<size_t>(c)].begin(),
                res.centroids[static_cast<size_t>(c)].end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const int a = res.assignments[static_cast<size_t>(i)];
      for (size_t e = 0; e < dim; ++e)
        res.centroids[static_cast<size_t>(a)][e] += points[static_cast<size_t>(i)][e];
    }
    for (int c = 0; c < k; ++c)
      for (size_t e = 0; e < dim; ++e)
        res.centroids[static_cast<size_t>(c)][e] /=
            static_cast<double>(counts[static_cast<size_t>(c)]);

    double inertia = 0.0;
    for (int i = 0; i < n; ++i)
      inertia += dist2(points[static_cast<size_t>(i)],
                       res.centroids[static_cast<size_t>(
                           res.assignments[static_cast<size_t>(i)])]);
    res.inertia_trace.push_back(inertia);
    res.inertia = inertia;
    res.iterations = iter + 1;
    if (stable) break;
  }
  return res;
}

const double* Codebook::entry(int room, int s) const {
  LAD_CHECK(room >= 0 && room < num_rooms && s >= 0 && s < entries_per_room,
            "codebook: bad entry (", room, ",", s, ")");
  return data.data() + (static_cast<size_t>(room) *
                            static_cast<size_t>(entries_per_room) +
                        static_cast<size_t>(s)) *
                           static_cast<size_t>(dim);
}

std::vector<double> Codebook::entry_vec(int room, int s) const {
  const double* p = entry(room, s);
  return std::vector<double>(p, p + dim);
}

CodebookConfig CodebookConfig::from_config(const Config& cfg) {
  CodebookConfig c;
  c.n_samples = cfg.get_int("codebook.n_samples", c.n_samples);
  c.entries_per_room = cfg.get_int("codebook.entries_per_room", c.entries_per_room);
  c.sigma = cfg.get_double("codebook.sigma", c.sigma);
  c.mixture_prob = cfg.get_double("codebook.mixture_prob", c.mixture_prob);
  c.validate();
  return c;
}

void CodebookConfig::validate() const {
  LAD_CHECK(n_samples > 0, "codebook config: n_samples must be positive");
  LAD_CHECK(entries_per_room > 0 && entries_per_room <= n_samples,
            "codebook config: need 0 < entries_per_room <= n_samples");
  LAD_CHECK(sigma >= 0.0, "codebook config: sigma must be non-negative");
  LAD_CHECK(mixture_prob >= 0.0 && mixture_prob <= 1.0,
            "codebook config: mixture_prob must be in [0,1]");
}

std::vector<std::vector<double>> generate_room_samples(const FeatureTable& table,
                                                       int room, int n_samples,
                                                       double sigma,
                                                       double mixture_prob,
                                                       Rng& rng) {
  LAD_CHECK(room >= 0 && room < table.num_rooms, "room samples: bad room ", room);
  std::vector<std::vector<double>> samples;
  samples.reserve(static_cast<size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    std::vector<double> v = table.room_proto[static_cast<size_t>(room)];
    for (int c : table.high_freq[static_cast<size_t>(room)])
      if (rng.uniform() < mixture_prob)
        for (int e = 0; e < table.dim; ++e)
          v[static_cast<size_t>(e)] +=
              table.object_feat[static_cast<size_t>(c)][static_cast<size_t>(e)];
    for (double& x : v) x += rng.normal(0.0, sigma);
    samples.push_back(std::move(v));
  }
  return samples;
}

Codebook build_room_codebook(const FeatureTable& table, const CodebookConfig& cfg,
                             uint64_t seed) {
  cfg.validate();
  Codebook cb;
  cb.num_rooms = table.num_rooms;
  cb.entries_per_room = cfg.entries_per_room;
  cb.dim = table.dim;
  cb.seed = seed;
  cb.n_samples = cfg.n_samples;
  cb.sigma = cfg.sigma;
  cb.data.assign(static_cast<size_t>(table.num_rooms) *
                     static_cast<size_t>(cfg.entries_per_room) *
                     static_cast<size_t>(table.dim),
                 0.0);
  const Vocab& vocab = Vocab::get();
  const Rng master(seed);
  for (int room = 0; room < table.num_rooms; ++room) {
    cb.labels.push_back(table.num_rooms == vocab.num_rooms()
                            ? vocab.room_name(room)
                            : "room" + std::to_string(room));
    Rng rng = master.child("codebook.samples", static_cast<uint64_t>(room));
    const auto samples = generate_room_samples(table, room, cfg.n_samples,
                                               cfg.sigma, cfg.mixture_prob, rng);
    Rng krng = master.child("codebook.kmeans", static_cast<uint64_t>(room));
    const KmeansResult km = kmeans(samples, cfg.entries_per_room, krng.next_u64());
    for (int s = 0; s < cfg.entries_per_room; ++s) {
      int rep = -1;
      double best = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < samples.size(); ++i) {
        if (km.assignments[i] != s) continue;
        const double d = dist2(samples[i], km.centroids[static_cast<size_t>(s)]);
        if (d < best) {
          best = d;
          rep = static_cast<int>(i);
        }
      }
      LAD_CHECK(rep >= 0, "codebook: cluster ", s, " of room ", room,
                " is empty after k-means");
      double* dst = cb.data.data() +
                    (static_cast<size_t>(room) *
                         static_cast<size_t>(cfg.entries_per_room) +
                     static_cast<size_t>(s)) *
                        static_cast<size_t>(table.dim);
      std::copy(samples[static_cast<size_t>(rep)].begin(),
                samples[static_cast<size_t>(rep)].end(), dst);
    }
  }
  return cb;
}

Codebook build_textual_codebook(const FeatureTable& table) {
  Codebook cb;
  cb.num_rooms = table.num_rooms;
  cb.entries_per_room = 1;
  cb.dim = table.dim;
  cb.n_samples = 1;
  cb.sigma = 0.0;
  const Vocab& vocab = Vocab::get();
  for (int room = 0; room < table.num_rooms; ++room) {
    cb.labels.push_back(table.num_rooms == vocab.num_rooms()
                            ? vocab.room_name(room)
                            : "room" + std::to_string(room));
    cb.data.insert(cb.data.end(), table.room_proto[static_cast<size_t>(room)].begin(),
                   table.room_proto[static_cast<size_t>(room)].end());
  }
  return cb;
}

std::vector<double> room_scores(const std::vector<double>& v, const Codebook& cb) {
  LAD_CHECK(static_cast<int>(v.size()) == cb.dim, "room_scores: dim mismatch");
  std::vector<double> scores(static_cast<size_t>(cb.num_rooms), 0.0);
  for (int room = 0; room < cb.num_rooms; ++room)
    for (int s = 0; s < cb.entries_per_room; ++s) {
      const double* e = cb.entry(room, s);
      double dot = 0.0;
      for (int i = 0; i < cb.dim; ++i) dot += v[static_cast<size_t>(i)] * e[i];
      scores[static_cast<size_t>(room)] += dot;
    }
  return scores;
}

void save_codebook(const std::string& path, const Codebook& cb) {
  std::vector<std::pair<std::string, Tensor>> entries;
  const double seed_lo = static_cast<double>(cb.seed & 0xffffffffULL);
  const double seed_hi = static_cast<double>(cb.seed >> 32);
  entries.emplace_back(
      "meta",
      Tensor::row({static_cast<double>(cb.num_rooms),
                   static_cast<double>(cb.entries_per_room),
                   static_cast<double>(cb.dim), static_cast<double>(cb.n_samples),
                   cb.sigma, seed_lo, seed_hi}));
  for (int room = 0; room < cb.num_rooms; ++room)
    for (int s = 0; s < cb.entries_per_room; ++s)
      entries.emplace_back("room." + cb.labels[static_cast<size_t>(room)] + "." +
                               std::to_string(s),
                           Tensor::row(cb.entry_vec(room, s)));
  save_tensors(path, entries);
}

Codebook load_codebook(const std::string& path) {
  const auto entries = load_tensors(path);
  LAD_CHECK(!entries.empty() && entries[0].first == "meta",
            "codebook file ", path, ": missing meta entry");
  const auto& meta = entries[0].second;
  LAD_CHECK(meta.size() == 7, "codebook file ", path, ": bad meta entry");
  Codebook cb;
  cb.num_rooms = static_cast<int>(meta.at(0));
  cb.entries_per_room = static_cast<int>(meta.at(1));
  cb.dim = static_cast<int>(meta.at(2));
  cb.n_samples = static_cast<int>(meta.at(3));
  cb.sigma = meta.at(4);
  cb.seed = static_cast<uint64_t>(meta.at(5)) |
            (static_cast<uint64_t>(meta.at(6)) << 32);
  LAD_CHECK(static_cast<int>(entries.size()) ==
                1 + cb.num_rooms * cb.entries_per_room,
            "codebook file ", path, ": entry count mismatch");
  cb.data.reserve(static_cast<size_t>(cb.num_rooms) *
                  static_cast<size_t>(cb.entries_per_room) *
                  static_cast<size_t>(cb.dim));
  size_t idx = 1;
  for (int room = 0; room < cb.num_rooms; ++room) {
    const std::string& name = entries[idx].first;
    const size_t dot = name.rfind('.');
    LAD_CHECK(name.rfind("room.", 0) == 0 && dot > 5, "codebook file ", path,
              ": bad entry name ", name);
    cb.labels.push_back(name.substr(5, dot - 5));
    for (int s = 0; s < cb.entries_per_room; ++s, ++idx) {
      const auto& [ename, t] = entries[idx];
      LAD_CHECK(ename == "room." + cb.labels.back() + "." + std::to_string(s),
                "codebook file ", path, ": unexpected entry ", ename);
      LAD_CHECK(t.size() == cb.dim, "codebook file ", path, ": entry ", ename,
                " has wrong dim");
      cb.data.insert(cb.data.end(), t.vals().begin(), t.vals().end());
    }
  }
  return cb;
}

const double* ImaginationSet::vec(int i) const {
  LAD_CHECK(i >= 0 && i < count, "imagination: bad index ", i);
  return data.data() + static_cast<size_t>(i) * static_cast<size_t>(dim);
}

ImaginationSet imagine_destination(const std::vector<int>& tokens,
                                   const FeatureTable& table, int count,
                                   double sigma_im, uint64_t seed,
                                   const std::string& episode_id) {
  LAD_CHECK(count > 0, "imagine: count must be positive");
  const ParsedInstruction parsed = parse_instruction(tokens);
  LAD_CHECK(parsed.room_type < table.num_rooms, "imagine: room type ",
            parsed.room_type, " outside feature table");
  LAD_CHECK(parsed.object_class < table.num_objects, "imagine: object class ",
            parsed.object_class, " outside feature table");
  ImaginationSet set;
  set.episode_id = episode_id;
  set.count = count;
  set.dim = table.dim;
  set.data.reserve(static_cast<size_t>(count) * static_cast<size_t>(table.dim));
  Rng rng(seed);
  for (int i = 0; i < count; ++i)
    for (int e = 0; e < table.dim; ++e) {
      const double base =
          table.room_proto[static_cast<size_t>(parsed.room_type)]
                          [static_cast<size_t>(e)] +
          table.object_feat[static_cast<size_t>(parsed.object_class)]
                           [static_cast<size_t>(e)];
      set.data.push_back(base + rng.normal(0.0, sigma_im));
    }
  return set;
}

void save_imaginations(const std::string& path,
                       const std::vector<ImaginationSet>& sets) {
  std::vector<std::pair<std::string, Tensor>> entries;
  for (const ImaginationSet& s : sets) {
    LAD_CHECK(!s.episode_id.empty(), "imagination cache: empty episode id");
    entries.emplace_back(
        "im." + s.episode_id,
        Tensor::leaf({s.count, s.dim}, s.data, false));
  }
  save_tensors(path, entries);
}

std::vector<ImaginationSet> load_imaginations(const std::string& path) {
  std::vector<ImaginationSet> sets;
  for (const auto& [name, t] : load_tensors(path)) {
    LAD_CHECK(name.rfind("im.", 0) == 0, "imagination cache ", path,
              ": bad entry name ", name);
    LAD_CHECK(t.rank() == 2, "imagination cache ", path, ": entry ", name,
              " must be rank 2");
    ImaginationSet s;
    s.episode_id = name.substr(3);
    s.count = static_cast<int>(t.rows());
    s.dim = static_cast<int>(t.cols());
    s.data = t.vals();
    sets.push_back(std::move(s));
  }
  return sets;
}

}  // namespace lad
