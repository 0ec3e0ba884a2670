#include "lad/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "lad/error.hpp"

namespace lad {

namespace {

constexpr char kMagic[8] = {'L', 'A', 'D', 'C', 'K', 'P', 'T', '1'};

void check_little_endian() {
  const uint32_t probe = 1;
  char b;
  std::memcpy(&b, &probe, 1);
  LAD_CHECK(b == 1, "checkpoint io requires a little-endian host");
}

void put_u64(std::ostream& out, uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

uint64_t get_u64(std::istream& in, const std::string& path) {
  char buf[8];
  in.read(buf, 8);
  LAD_CHECK(in.gcount() == 8, "truncated checkpoint file: ", path);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& entries) {
  check_little_endian();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  LAD_CHECK(out.good(), "cannot open checkpoint for writing: ", path);
  out.write(kMagic, 8);
  put_u64(out, entries.size());
  for (const auto& [name, t] : entries) {
    LAD_CHECK(t.defined(), "cannot save undefined tensor: ", name);
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, static_cast<uint64_t>(t.rank()));
    for (int64_t d : t.shape()) put_u64(out, static_cast<uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * 8));
  }
  LAD_CHECK(out.good(), "checkpoint write failed: ", path);
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path) {
  check_little_endian();
  std::ifstream in(path, std::ios::binary);
  LAD_CHECK(in.good(), "cannot open checkpoint: ", path);
  char magic[8];
  in.read(magic, 8);
  LAD_CHECK(in.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0,
            "unknown checkpoint magic in ", path);
  const uint64_t count = get_u64(in, path);
  std::vector<std::pair<std::string, Tensor>> entries;
  entries.reserve(count);
  for (uint64_t e = 0; e < count; ++e) {
    const uint64_t name_len = get_u64(in, path);
    LAD_CHECK(name_len < (1u << 20), "implausible name length in ", path);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    LAD_CHECK(in.gcount() == static_cast<std::streamsize>(name_len),
              "truncated checkpoint file: ", path);
    const uint64_t rank = get_u64(in, path);
    LAD_CHECK(rank <= 8, "implausible tensor rank ", rank, " in ", path);
    std::vector<int64_t> shape(rank);
    int64_t n = 1;
    for (uint64_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int64_t>(get_u64(in, path));
      n *= shape[i];
    }
    std::vector<double> vals(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(n * 8));
    LAD_CHECK(in.gcount() == static_cast<std::streamsize>(n * 8),
              "truncated checkpoint file: ", path);
    entries.emplace_back(std::move(name),
                         Tensor::leaf(std::move(shape), std::move(vals), false));
  }
  return entries;
}

void save_params(const std::string& path, const ParamSet& params) {
  save_tensors(path, params.items());
}

void load_params(const std::string& path, ParamSet& params) {
  auto entries = load_tensors(path);
  std::set<std::string> seen;
  for (const auto& [name, t] : entries) {
    LAD_CHECK(params.has(name), "checkpoint entry ", name,
              " has no matching parameter (wrong model configuration?)");
    Tensor p = params.get(name);
    LAD_CHECK(p.shape() == t.shape(), "checkpoint entry ", name,
              " shape mismatch with parameter");
    const_cast<Tensor&>(p).vals() = t.vals();
    seen.insert(name);
  }
  for (const auto& [name, p] : params.items())
    LAD_CHECK(seen.count(name), "parameter ", name, " missing from checkpoint ",
              path);
}

}  // namespace lad
