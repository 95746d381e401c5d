#pragma once

#include <cstdint>
#include <cmath>

namespace nslab {

// Immutable stream descriptor. Identical (seed, stream_id) reproduces the
// identical sample sequence; distinct stream_ids give independent streams.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    [[nodiscard]] RngStream substream(std::uint64_t k) const;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace detail

inline RngStream RngStream::substream(std::uint64_t k) const {
    return RngStream{seed, detail::splitmix64(stream_id ^ (0xa0761d6478bd642full + k))};
}

// Counter-based generator: output i is a keyed hash of the counter, so the
// sequence is a pure function of the descriptor and position.
class Rng {
public:
    explicit Rng(RngStream s)
        : desc_(s),
          key_(detail::splitmix64(detail::splitmix64(s.seed) ^ detail::splitmix64(~s.stream_id))) {}

    std::uint64_t next_u64() {
        return detail::splitmix64(key_ + 0x9e3779b97f4a7c15ull * ++counter_);
    }

    // Uniform on (0,1), never exactly 0 or 1.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal; Box-Muller, fixed consumption of two uniforms per pair.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    [[nodiscard]] RngStream descriptor() const { return desc_; }

private:
    RngStream desc_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

// Adaptor so std::*_distribution can consume an Rng.
struct RngEngine {
    using result_type = std::uint64_t;
    Rng* rng;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~0ull; }
    result_type operator()() { return rng->next_u64(); }
};

} // namespace nslab
