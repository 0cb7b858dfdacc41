// vamce/rng.hpp
//
// Copyright 2026 The vamce authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace vamce {

namespace detail {

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

}  // namespace detail

/// Counter-based random stream. A stream is fully determined by
/// (seed, stream_id, counter): draw i of stream (s, id) is a pure function of
/// those three values, so replaying a stream is exact and distinct stream ids
/// never share state. A single stream must not be used from two threads at
/// once; distinct streams are safe to use concurrently.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}

  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed),
        stream_id_(stream_id),
        base_(detail::mix64(seed ^ 0x6A09E667F3BCC909ULL) +
              detail::mix64(stream_id ^ 0xBB67AE8584CAA73BULL)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(base_ + counter_ * detail::kGolden);
  }

  /// Uniform draw in the open interval (0, 1); never returns 0, so logs of
  /// uniforms are always finite.
  double uniform() {
    const std::uint64_t bits = next_u64() >> 11;  // top 53 bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  /// One standard normal draw (Box-Muller, two uniforms per draw).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Uniform index in [0, n). Modulo bias is negligible for the index ranges
  /// used here (shuffles over at most millions of elements).
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

/// n i.i.d. standard normal draws from the stream.
inline std::vector<double> sample_gaussian(RngStream& stream, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = stream.normal();
  return out;
}

/// Seeded Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& values, RngStream& stream) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.uniform_index(i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace vamce
