#pragma once

#include <cmath>
#include <cstdint>

namespace qgalore {

// Purpose tags keep independently derived substreams from colliding when the
// same (seed, id, step) triple is used by different consumers.
enum class RngPurpose : std::uint64_t {
    WeightInit = 1,
    WeightUpdate = 2,
    TrainBatch = 3,
    ValBatch = 4,
    SyntheticTruth = 5,
    Generic = 6,
};

// Counter-based splittable stream built on the splitmix64 permutation.
// Substreams are derived by hashing (seed, purpose, id, step), so any
// (layer, step) pair gets an independent, reproducible stream regardless of
// call order or thread layout.
class RngStream {
public:
    RngStream() : state_(0x9E3779B97F4A7C15ULL) {}
    explicit RngStream(std::uint64_t state) : state_(state) {}

    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    static RngStream derive(std::uint64_t seed, RngPurpose purpose,
                            std::uint64_t id = 0, std::uint64_t step = 0) {
        std::uint64_t s = mix(seed ^ 0x6A09E667F3BCC909ULL);
        s = mix(s ^ static_cast<std::uint64_t>(purpose) * 0xD6E8FEB86659FD93ULL);
        s = mix(s ^ id * 0xA5A5A5A5A5A5A5A5ULL);
        s = mix(s ^ step * 0xC2B2AE3D27D4EB4FULL);
        return RngStream(s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; caches the second variate.
    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_uniform();
        double u2 = next_uniform();
        while (u1 <= 0.0) u1 = next_uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace qgalore
