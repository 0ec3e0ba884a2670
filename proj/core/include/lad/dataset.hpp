#pragma once

#include <map>
#include <string>
#include <vector>

#include "lad/config.hpp"
#include "lad/env.hpp"

namespace lad {

// One record per line; every record carries a schema version field.
void write_houses_jsonl(const std::string& path,
                        const std::vector<HouseGraph>& houses);
std::vector<HouseGraph> read_houses_jsonl(const std::string& path);
void write_episodes_jsonl(const std::string& path,
                          const std::vector<Episode>& episodes);
std::vector<Episode> read_episodes_jsonl(const std::string& path);

struct DatasetPaths {
  std::string houses_train;
  std::string houses_val_unseen;
  std::string episodes_train;
  std::string episodes_val_seen;
  std::string episodes_val_unseen;

  static DatasetPaths in_dir(const std::string& dir);
  std::vector<std::string> all() const;
};

// Generates houses and episodes for all splits under out_dir. val-unseen
// houses use the same generation config but disjoint ids and seeds.
DatasetPaths generate_dataset(const Config& cfg, uint64_t seed,
                              const std::string& out_dir);

// Owned house collection with id lookup.
class HouseIndex {
 public:
  HouseIndex() = default;
  explicit HouseIndex(std::vector<HouseGraph> houses);
  void add(std::vector<HouseGraph> houses);
  const HouseGraph& get(const std::string& house_id) const;
  const std::vector<HouseGraph>& all() const { return houses_; }
  size_t size() const { return houses_.size(); }

 private:
  std::vector<HouseGraph> houses_;
  std::map<std::string, size_t> by_id_;
};

}  // namespace lad
