#pragma once

#include <cmath>
#include <cstdint>

namespace koopid {

// Counter-based PRNG (SplitMix64): each draw advances a counter by a fixed
// odd constant and passes it through an avalanching finalizer. All randomness
// in the library flows through this class so that experiments are
// reproducible bit-for-bit on one machine, and fork() derives independent
// streams (one per trajectory, per model component, ...) so that parallel
// generation never depends on scheduling order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0,1], keeps log() finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    // Derive an independent substream. Does not advance this generator, so
    // fork(i) for distinct i gives reproducible, decorrelated streams.
    Rng fork(std::uint64_t stream) const {
        return Rng(mix(mix(state_ ^ 0xA5A5A5A55A5A5A5AULL) + stream * 0x9E3779B97F4A7C15ULL));
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace koopid
