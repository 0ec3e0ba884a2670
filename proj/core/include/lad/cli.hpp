#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lad/config.hpp"

namespace lad {

// Parsed command line: one subcommand, shared flags, and config overlays.
// `paths` holds the file/directory flags by name (out, data, codebook,
// init, episodes, imaginations, manifest).
struct RunConfig {
  std::string subcommand;
  std::map<std::string, std::string> paths;
  bool has_seed = false;
  uint64_t seed = 0;
  int threads = 1;
  Config overrides;        // from repeated --set key=value
  std::string config_path; // from --config
  std::string episode_id;  // trace target
  std::string split;       // eval split filter (empty = all val splits)
  std::string mode;        // trace action mode: greedy | sample

  static RunConfig parse(const std::vector<std::string>& args);
};

// Record written beside every subcommand's outputs: the fully resolved
// configuration, the seed and thread count, digests of every input file,
// and digests of every output file. Serialized in the flat config format,
// so a manifest is itself parseable.
struct RunManifest {
  std::string subcommand;
  uint64_t seed = 0;
  int threads = 1;
  Config config;                                   // resolved module keys
  std::map<std::string, std::string> input_paths;  // name -> path
  std::map<std::string, std::string> input_digests; // name -> digest
  std::map<std::string, std::string> output_digests; // file name -> digest

  void write(const std::string& path) const;
  static RunManifest load(const std::string& path);
};

// Dispatches a parsed command line: gen-data, build-codebook, imagine,
// warmup, dagger, eval, ablate, trace, selftest, or rerun (replays a
// previous run from its manifest into a fresh output directory). Returns
// the process exit status: 0 success, 1 runtime or invariant failure,
// 2 usage error.
int run_cli(const std::vector<std::string>& args);

std::string usage_text();

}  // namespace lad
