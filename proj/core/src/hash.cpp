// SPDX-License-Identifier: Apache-2.0
#include "selafd/hash.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <fstream>

#include "selafd/error.hpp"

namespace selafd {

namespace {
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
}

void Fnv1a::update(std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    state_ ^= static_cast<std::uint64_t>(b);
    state_ *= kFnvPrime;
  }
}

void Fnv1a::update(std::string_view text) { update(std::as_bytes(std::span(text.data(), text.size()))); }

void Fnv1a::update_u64(std::uint64_t value) {
  std::array<std::byte, 8> le{};
  for (int i = 0; i < 8; ++i) le[i] = static_cast<std::byte>((value >> (8 * i)) & 0xffU);
  update(le);
}

void Fnv1a::update(std::span<const double> values) {
  for (double v : values) update_u64(std::bit_cast<std::uint64_t>(v));
}

std::string Fnv1a::hex() const { return to_hex(state_); }

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path);
  Fnv1a h;
  std::array<char, 1 << 14> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    const auto got = in.gcount();
    if (got > 0) h.update(std::as_bytes(std::span(buf.data(), static_cast<std::size_t>(got))));
  }
  return h.hex();
}

}  // namespace selafd
