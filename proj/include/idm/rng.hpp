#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace idm {

// splitmix64 finalizer; used to derive substream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seeded, splittable random stream. identical (seed, stream_id) gives the
// identical draw sequence on every platform: mt19937_64 output is fully
// specified by the standard, and the uniform/normal mappings are spelled out
// here instead of relying on std::*_distribution (implementation-defined).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed),
        stream_id_(stream_id),
        engine_(mix64(mix64(seed) ^ mix64(~stream_id))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Derived stream; independent of this stream's position.
  RngStream child(std::uint64_t substream) const {
    return RngStream(seed_, mix64(stream_id_ ^ mix64(substream)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [lo, hi] inclusive (Lemire multiply-shift; the
  // < 2^-64 bias is irrelevant at our sample counts and fully specified).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1u;
    const auto wide =
        static_cast<unsigned __int128>(engine_()) * static_cast<unsigned __int128>(span);
    return lo + static_cast<std::int64_t>(static_cast<std::uint64_t>(wide >> 64));
  }

  // Standard normal via Box-Muller; pairs are consumed in a fixed order.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, for stable string-keyed stream ids (e.g. per-image seeds).
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace idm
