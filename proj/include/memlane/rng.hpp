#pragma once

#include <cmath>
#include <cstdint>

namespace memlane {

// splitmix64: tiny, portable, bit-exact on every platform. All randomness in
// the project (init, data generation, training draws, policies) comes from
// this generator so that golden files and checkpoints reproduce everywhere.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; one draw per call, the sine partner is discarded to keep
    // the stream layout independent of call parity.
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

// Derives an independent stream for (seed, index). Mixing the index through
// the splitmix finalizer decorrelates neighbouring indices.
inline SplitMix64 substream(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 mixer(seed ^ (index * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
    return SplitMix64(mixer.next_u64());
}

}  // namespace memlane
