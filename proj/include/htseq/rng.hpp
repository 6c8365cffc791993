// Copyright 2026 The htseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace htseq {

/// Seeded random source with platform-independent distributions.
///
/// The raw engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The std:: distribution adaptors are implementation-defined, so
/// every distribution used by the library is derived here from raw draws;
/// identical seeds therefore produce identical datasets, plans and reports on
/// any conforming toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  bool bernoulli(double p) { return uniform01() < p; }

  double normal(double mean = 0.0, double stddev = 1.0);

  /// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 uses the power boost.
  double gamma(double shape);

  /// Fisher-Yates shuffle driven by uniform_int.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent child seed for a named or numbered stream.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);
  static std::uint64_t derive(std::uint64_t seed, std::string_view stream);

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// 64-bit FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace htseq
