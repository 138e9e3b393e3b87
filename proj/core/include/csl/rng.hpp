#pragma once

#include <cstdint>
#include <limits>
#include <span>

namespace csl {

/// xoshiro256** seeded from (seed, stream) through splitmix64.
///
/// Every draw in the library goes through this generator so that splits,
/// planted data and random subspaces are identical across platforms.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed, std::uint64_t stream = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [0, bound), bound > 0, without modulo bias.
    std::uint64_t below(std::uint64_t bound);
    /// Standard normal via Box-Muller; the second variate is cached.
    double normal();

private:
    std::uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

/// Fisher-Yates shuffle driven by Xoshiro256::below.
template <typename T>
void shuffle(std::span<T> items, Xoshiro256& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace csl
