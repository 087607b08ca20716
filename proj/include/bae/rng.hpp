#ifndef BAE_RNG_HPP
#define BAE_RNG_HPP

#include <cmath>
#include <cstdint>

namespace bae {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Seeded stream of random numbers. Same seed and same call sequence give
/// identical outputs on every platform (the generator and the
/// distributions are implemented here, not taken from <random>, whose
/// distributions vary across standard libraries).
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return detail::splitmix64(state_); }

    /// Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one value per call; the pair's
    /// second half is deliberately discarded to keep the call sequence
    /// trivially reproducible).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer on [0, n).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    /// Deterministic child seed, e.g. one stream per ensemble member.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t s = seed ^ (0x9E3779B97F4A7C15ULL * (index + 1));
        return detail::splitmix64(s);
    }

private:
    std::uint64_t state_;
    std::uint64_t seed_;
};

}  // namespace bae

#endif  // BAE_RNG_HPP
