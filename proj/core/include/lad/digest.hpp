#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lad {

// FNV-1a 64-bit digest; used to fingerprint files in run manifests.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);
std::string digest_hex(uint64_t h);
std::string digest_bytes(const std::string& bytes);
std::string digest_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace lad
