#include "lad/digest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "lad/error.hpp"

namespace lad {

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
  uint64_t h = seed;
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string digest_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string digest_bytes(const std::string& bytes) {
  return digest_hex(fnv1a64(bytes.data(), bytes.size()));
}

std::string digest_file(const std::string& path) {
  return digest_bytes(read_file(path));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  LAD_CHECK(in.good(), "cannot open file for reading: ", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  LAD_CHECK(out.good(), "cannot open file for writing: ", path);
  out << content;
  LAD_CHECK(out.good(), "write failed: ", path);
}

}  // namespace lad
