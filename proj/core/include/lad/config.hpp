#pragma once

#include <map>
#include <string>
#include <vector>

namespace lad {

// Flat "key = value" configuration with '#' comments. Nested concepts use
// dotted keys (e.g. "warmup.lr"). Keys keep insertion independence: the map
// is ordered by key so serialization is deterministic.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, int64_t v);
  void set_double(const std::string& key, double v);
  void set_bool(const std::string& key, bool v);

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int64_t> get_int_list(const std::string& key,
                                    const std::vector<int64_t>& fallback) const;

  // Overlays other's entries on top of this config.
  void merge(const Config& other);

  std::string serialize() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace lad
