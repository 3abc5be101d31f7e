#pragma once

// Deterministic random streams and the parameter record of the ensemble.
//
// Generator: xoshiro256** (Blackman & Vigna). A stream is keyed by a 64-bit
// seed and a text label: the label is hashed with 64-bit FNV-1a, combined
// with the seed and expanded into the 256-bit state by SplitMix64. Uniform
// reals take the top 53 bits of each output. Normal variates use the
// Box-Muller transform, returning the cosine branch first and the sine
// branch on the following call. Integer draws in [0, n) use Lemire's
// multiply-and-reject method, so no platform distribution is involved.

#include "lossgeom/types.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

namespace lossgeom {

struct ModelParams {
  Index n_examples = 300;     // N
  Index n_classes = 10;       // C
  Index n_weights = 1000;     // D
  double sigma_z = 15.0;      // logit std
  double sigma_c = 1.0 / std::sqrt(1000.0);  // mean logit-gradient std
  double sigma_e = 0.7 / std::sqrt(1000.0);  // residual std
  double length_beta = 0.0;   // per-class mean-gradient length variation
  double target_accuracy = 0.95;
  std::uint64_t seed = 1;
  Index hyperplane_dim = 10;  // d

  /// Throws ValidationError naming the first offending field.
  void validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
      throw ValidationError(key + ": " + why);
    };
    auto real_ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (n_examples < 1) fail("n_examples", "must be positive");
    if (n_classes < 2) fail("n_classes", "must be at least 2");
    if (n_weights < 1) fail("n_weights", "must be positive");
    if (!real_ok(sigma_z)) fail("sigma_z", "must be finite and nonnegative");
    if (!real_ok(sigma_c)) fail("sigma_c", "must be finite and nonnegative");
    if (!real_ok(sigma_e)) fail("sigma_e", "must be finite and nonnegative");
    if (!real_ok(length_beta)) fail("length_beta", "must be finite and nonnegative");
    if (!(target_accuracy >= 0.0 && target_accuracy <= 1.0))
      fail("target_accuracy", "must lie in [0, 1]");
    if (hyperplane_dim < 1) fail("hyperplane_dim", "must be positive");
    if (hyperplane_dim > n_weights)
      fail("hyperplane_dim", "must not exceed n_weights (d <= D)");
  }
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// A labeled xoshiro256** stream. Value type: copying a stream forks it
/// (both copies continue with the same sequence).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label) : label_(label) {
    std::uint64_t key = seed;
    std::uint64_t mixed = detail::splitmix64(key) ^ detail::fnv1a64(label);
    for (auto& word : state_) word = detail::splitmix64(mixed);
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n); n must be positive.
  std::uint64_t bounded(std::uint64_t n) noexcept {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal variate.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  const std::string& label() const noexcept { return label_; }

 private:
  std::array<std::uint64_t, 4> state_{};
  std::string label_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RngStream substream(std::uint64_t seed, std::string_view label) {
  return RngStream(seed, label);
}

/// rows x cols matrix of i.i.d. Normal(0, sigma^2) entries, filled row by row.
/// The stream is consumed identically for every sigma, including zero.
inline RowMatrix gaussian_matrix(RngStream& stream, Index rows, Index cols, double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw ValidationError("gaussian_matrix: sigma must be finite and nonnegative");
  if (rows < 1 || cols < 1) throw ValidationError("gaussian_matrix: rows and cols must be >= 1");
  RowMatrix out(rows, cols);
  double* data = out.data();
  const Index size = rows * cols;
  for (Index i = 0; i < size; ++i) {
    const double z = stream.normal();
    data[i] = sigma == 0.0 ? 0.0 : sigma * z;
  }
  return out;
}

}  // namespace lossgeom
