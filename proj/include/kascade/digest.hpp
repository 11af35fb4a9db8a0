// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace kascade {

// 64-bit FNV-1a, used to fingerprint matrices, plans and run configs.
class Fnv1a {
 public:
  void add(std::uint64_t word) {
    for (int b = 0; b < 8; ++b) byte(static_cast<std::uint8_t>(word >> (8 * b)));
  }
  void add(double value) { add(std::bit_cast<std::uint64_t>(value)); }
  void add(std::string_view text) {
    for (char c : text) byte(static_cast<std::uint8_t>(c));
    add(std::uint64_t{text.size()});
  }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
  }

 private:
  void byte(std::uint8_t b) {
    hash_ ^= b;
    hash_ *= 0x100000001b3ull;
  }

  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

}  // namespace kascade
