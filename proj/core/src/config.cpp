#include "lad/config.hpp"

#include <cstdlib>
#include <sstream>

#include "lad/digest.hpp"
#include "lad/error.hpp"

namespace lad {

namespace {
std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}
}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    LAD_CHECK(eq != std::string::npos, "config line ", lineno, " has no '=': ", t);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    LAD_CHECK(!key.empty(), "config line ", lineno, " has empty key");
    cfg.entries_[key] = value;
  }
  return cfg;
}

Config Config::load(const std::string& path) { return parse(read_file(path)); }

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

void Config::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

void Config::set_int(const std::string& key, int64_t v) {
  entries_[key] = std::to_string(v);
}

void Config::set_double(const std::string& key, double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  entries_[key] = os.str();
}

void Config::set_bool(const std::string& key, bool v) {
  entries_[key] = v ? "true" : "false";
}

std::string Config::get_str(const std::string& key) const {
  auto it = entries_.find(key);
  LAD_CHECK(it != entries_.end(), "missing config key: ", key);
  return it->second;
}

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

int64_t Config::get_int(const std::string& key) const {
  const std::string v = get_str(key);
  char* end = nullptr;
  const long long r = std::strtoll(v.c_str(), &end, 10);
  LAD_CHECK(end && *end == '\0' && !v.empty(), "config key ", key,
            " is not an integer: ", v);
  return r;
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double Config::get_double(const std::string& key) const {
  const std::string v = get_str(key);
  char* end = nullptr;
  const double r = std::strtod(v.c_str(), &end);
  LAD_CHECK(end && *end == '\0' && !v.empty(), "config key ", key,
            " is not a number: ", v);
  return r;
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = get_str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail("config key ", key, " is not a boolean: ", v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::vector<int64_t> Config::get_int_list(const std::string& key,
                                          const std::vector<int64_t>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int64_t> out;
  std::istringstream ss(get_str(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const long long r = std::strtoll(item.c_str(), &end, 10);
    LAD_CHECK(end && *end == '\0' && !item.empty(), "config key ", key,
              " has non-integer element: ", item);
    out.push_back(r);
  }
  LAD_CHECK(!out.empty(), "config key ", key, " is an empty list");
  return out;
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string Config::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
  return os.str();
}

}  // namespace lad
