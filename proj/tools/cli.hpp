// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace selafd::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kManifestName = "run_manifest.txt";

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitNumerical = 4,
};

/// Record of one artifact-producing command. Written as key=value lines
/// with no timestamps, so reruns with the same inputs compare equal.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::string seed_source;
  std::vector<std::pair<std::string, std::string>> config;
  /// role -> (path, hash)
  std::vector<std::pair<std::string, std::pair<std::string, std::string>>> inputs;
  /// file name relative to the output directory -> hash
  std::vector<std::pair<std::string, std::string>> outputs;
  std::vector<std::string> notes;

  std::string format() const;
};

/// Runs one command line without the program name. Everything meant for
/// people goes to `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace selafd::cli
