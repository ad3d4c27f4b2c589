#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace sduda {

namespace detail {

// SplitMix64 output scrambler. Stateless, so the generator below is a pure
// function of (key, counter) and reproduces bit-for-bit across platforms.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

// Splittable counter-based generator. derive() hashes extra stream ids into
// the key, so every (sample, epoch, purpose) triple gets an independent
// stream regardless of call order elsewhere in the program.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(detail::mix64(seed) ^ detail::mix64(detail::mix64(stream) + 0x6a09e667f3bcc909ULL)) {}

    Rng derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
        std::uint64_t k = key_;
        k = detail::mix64(k ^ detail::mix64(a + 0x243f6a8885a308d3ULL));
        k = detail::mix64(k ^ detail::mix64(b + 0x13198a2e03707344ULL));
        k = detail::mix64(k ^ detail::mix64(c + 0xa4093822299f31d0ULL));
        Rng r(0);
        r.key_ = k;
        r.counter_ = 0;
        return r;
    }

    std::uint64_t next_u64() { return detail::mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; always consumes exactly two uniforms.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // N(0, sigma^2) clamped to [-clip, clip].
    double truncated_normal(double sigma, double clip) {
        return std::clamp(normal() * sigma, -clip, clip);
    }

    // Fisher-Yates shuffle; index type kept generic for sample orderings.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace sduda
