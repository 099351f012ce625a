#pragma once

#include "dirl/types.hpp"

#include <cmath>
#include <cstdint>

namespace dirl {

/// SplitMix64 (Steele, Lea & Flood 2014): a counter-based 64-bit
/// generator. The state advances by the golden-ratio increment and each
/// output is a finalizer of the state, so streams derived from distinct
/// seeds are independent for practical purposes. Pure integer
/// arithmetic: sequences are identical across platforms.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in the open interval (0, 1): the 53-bit mantissa
    /// draw clamped to [2^-53, 1 - 2^-53] so that log(u) and
    /// log(-log(u)) stay finite.
    Real next_unit_open() {
        const Real u = static_cast<Real>(next() >> 11) * 0x1.0p-53;
        constexpr Real lo = 0x1.0p-53;
        constexpr Real hi = 1.0 - 0x1.0p-53;
        return u < lo ? lo : (u > hi ? hi : u);
    }

  private:
    std::uint64_t state_;
};

/// SplitMix64 output at a single counter value; used as a seed mixer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed expansion: stream for record `index` within a dataset drawn with
/// `dataset_seed`. Each record consumes its own stream, so datasets are
/// reproducible regardless of evaluation order.
inline SplitMix64 record_stream(std::uint64_t dataset_seed, std::uint64_t index) {
    return SplitMix64(mix64(dataset_seed ^ mix64(0x9E3779B97F4A7C15ULL * (index + 1))));
}

/// Categorical draw by cumulative-sum inversion in stored order.
/// `probs` must be nonnegative; a ragged sum is tolerated by assigning
/// the tail mass to the last index.
template <typename Derived>
int sample_categorical(SplitMix64& rng, const Eigen::MatrixBase<Derived>& probs) {
    const Real u = rng.next_unit_open();
    Real cum = 0.0;
    const Eigen::Index k = probs.size();
    for (Eigen::Index i = 0; i < k; ++i) {
        cum += probs(i);
        if (u <= cum) return static_cast<int>(i);
    }
    return static_cast<int>(k - 1);
}

/// Standard Gumbel(0, 1) draw via inverse CDF -log(-log(U)).
inline Real sample_gumbel(SplitMix64& rng) {
    return -std::log(-std::log(rng.next_unit_open()));
}

}  // namespace dirl
