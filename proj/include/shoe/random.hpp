// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace shoe {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a; stable across platforms, used for seed labels and config hashes.
inline std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derive an independent per-stage seed from the root seed and a fixed stage label.
inline std::uint64_t stage_seed(std::uint64_t root, std::string_view label) {
  const std::uint64_t tag = fnv1a(label);
  std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace shoe
