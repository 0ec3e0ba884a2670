#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lad/config.hpp"
#include "lad/env.hpp"
#include "lad/rng.hpp"

namespace lad {

struct KmeansResult {
  std::vector<int> assignments;
  std::vector<std::vector<double>> centroids;
  std::vector<double> inertia_trace;  // one entry per Lloyd iteration
  double inertia = 0.0;
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding. Deterministic given seed.
// Assignment ties resolve to the smallest centroid index; an emptied
// cluster steals the point farthest from its centroid (smallest index on
// ties) so every cluster stays non-empty.
KmeansResult kmeans(const std::vector<std::vector<double>>& points, int k,
                    uint64_t seed, int max_iters = 100);

// Room-type feature bank: entries_per_room selected sample vectors per room.
struct Codebook {
  int num_rooms = 0;
  int entries_per_room = 0;  // S
  int dim = 0;
  std::vector<double> data;  // num_rooms * S * dim, row-major
  std::vector<std::string> labels;
  uint64_t seed = 0;
  int n_samples = 0;
  double sigma = 0.0;

  const double* entry(int room, int s) const;
  std::vector<double> entry_vec(int room, int s) const;
};

struct CodebookConfig {
  int n_samples = 100;
  int entries_per_room = 4;  // S
  double sigma = 0.1;
  double mixture_prob = 0.5;  // inclusion probability per high-freq object

  static CodebookConfig from_config(const Config& cfg);
  void validate() const;
};

// The synthetic analogue of rendering room images: each sample is the room
// prototype plus a random subset of its high-frequency object features plus
// Gaussian noise.
std::vector<std::vector<double>> generate_room_samples(const FeatureTable& table,
                                                       int room, int n_samples,
                                                       double sigma,
                                                       double mixture_prob,
                                                       Rng& rng);

// Per room: draw samples, cluster into S groups, keep the member sample
// nearest each cluster centroid.
Codebook build_room_codebook(const FeatureTable& table, const CodebookConfig& cfg,
                             uint64_t seed);

// Ablation variant: one entry per room, the bare prototype.
Codebook build_textual_codebook(const FeatureTable& table);

// Sum of dot products between v and every entry of each room (the layout
// similarity scoring the model mirrors in tensor ops).
std::vector<double> room_scores(const std::vector<double>& v, const Codebook& cb);

void save_codebook(const std::string& path, const Codebook& cb);
Codebook load_codebook(const std::string& path);

struct ImaginationSet {
  std::string episode_id;
  int count = 0;
  int dim = 0;
  std::vector<double> data;  // count * dim

  const double* vec(int i) const;
};

// Destination imagination from the instruction alone: count draws of
// goal-room prototype + target-object feature + N(0, sigma_im^2 I).
// Receives only tokens and the shared feature table, never a house.
ImaginationSet imagine_destination(const std::vector<int>& tokens,
                                   const FeatureTable& table, int count,
                                   double sigma_im, uint64_t seed,
                                   const std::string& episode_id = "");

void save_imaginations(const std::string& path,
                       const std::vector<ImaginationSet>& sets);
std::vector<ImaginationSet> load_imaginations(const std::string& path);

}  // namespace lad
