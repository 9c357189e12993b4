// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace selafd {

/// Incremental 64-bit FNV-1a. Used for split hashes, frozen-weight hashes
/// and input hashes in run manifests; not cryptographic.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes);
  void update(std::string_view text);
  void update(std::span<const double> values);
  void update_u64(std::uint64_t value);

  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);

/// Hash of a whole file's bytes; throws IoError if unreadable.
std::string hash_file(const std::string& path);

}  // namespace selafd
