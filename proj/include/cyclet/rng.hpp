#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace cyclet {

// splitmix64 finalizer; the basis for all stream derivation.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return mix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

// Deterministic splitmix64 generator. Distribution helpers are hand-rolled
// so streams are identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    float uniformf(float lo, float hi) { return float(uniform(lo, hi)); }

    // Uniform integer in [0, n), n >= 1. Multiply-high mapping.
    int uniform_int(int n) {
        return int((static_cast<unsigned __int128>(next_u64()) * std::uint64_t(n)) >> 64);
    }

    bool coin() { return (next_u64() & 1u) != 0; }

    // Box-Muller; second value cached.
    double normal(double mean = 0.0, double sd = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + sd * spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        // avoid log(0)
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return mean + sd * r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stream tags keep independent uses of the same (seed, epoch, index) key
// from colliding.
enum class StreamTag : std::uint64_t {
    example = 1,   // per-example crop + augmentation draws
    shuffle = 2,   // epoch-level dataset ordering
    init = 3,      // parameter initialization
    synth = 4,     // synthetic dataset rendering
};

// Per-example stream: keyed by (global_seed, epoch, example_index), never by
// worker identity, so parallel data prep is bit-identical to sequential.
inline Rng example_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
    std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(StreamTag::example));
    h = hash_combine(h, epoch);
    h = hash_combine(h, index);
    return Rng(h);
}

inline Rng stream_rng(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(tag));
    h = hash_combine(h, a);
    h = hash_combine(h, b);
    return Rng(h);
}

} // namespace cyclet
