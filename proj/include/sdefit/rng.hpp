// Self-contained counter-seeded random number generation.
//
// Streams are addressed by (seed, stream_id); identical addresses reproduce
// identical draw sequences bit-for-bit on every platform, which is what makes
// saved observation streams replayable and replications order-independent.

#pragma once

#include <cmath>
#include <cstdint>

namespace sdefit {

/// Address of an independent substream of the experiment-wide generator.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
inline std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
}
}  // namespace detail

// xoshiro256++ with splitmix64 state expansion over hash(seed, stream_id).
class Rng {
  public:
    explicit Rng(RngStream stream) {
        std::uint64_t h = stream.seed;
        std::uint64_t mix = detail::splitmix64(h);
        h = mix ^ (stream.stream_id * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
        for (auto& word : state_) word = detail::splitmix64(h);
    }
    Rng(std::uint64_t seed, std::uint64_t stream_id) : Rng(RngStream{seed, stream_id}) {}

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    /// Uniform draw in the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (no rejection, so draw counts are
    /// data-independent and streams stay aligned across code changes).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace sdefit
