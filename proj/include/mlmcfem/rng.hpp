#pragma once

#include <cmath>
#include <cstdint>

namespace mlmcfem {

namespace detail {

// SplitMix64 finalizer (Steele/Lea/Flood). Used both as the output function
// of the counter generator and to mix key material.
inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based generator: the stream is a pure function of (key, counter),
// so sample i is identical regardless of execution order or thread count.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    // Derive a stream key from (global seed, stream tag, sample index).
    static CounterRng keyed(std::uint64_t global_seed, std::uint64_t stream,
                            std::uint64_t index) {
        std::uint64_t k = detail::splitmix64(global_seed);
        k = detail::splitmix64(k ^ (0x632be59bd9b4e019ULL * (stream + 1)));
        k = detail::splitmix64(k ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
        return CounterRng(k);
    }

    std::uint64_t key() const { return key_; }

    std::uint64_t next_u64() {
        return detail::splitmix64(key_ ^ (counter_++ * 0xd1342543de82ef95ULL));
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in (lo, hi), endpoints excluded so samples stay strictly
    // inside open domains.
    double next_open(double lo, double hi) {
        double t;
        do {
            t = next_unit();
        } while (t == 0.0);
        return lo + t * (hi - lo);
    }

    // Standard normal via Box-Muller (no cached spare: keeps the stream a
    // pure function of the call sequence).
    double next_normal() {
        double u1;
        do {
            u1 = next_unit();
        } while (u1 <= 0.0);
        const double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925287 * u2);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Seed for sample `index` of level `level`. Levels get disjoint streams;
// the shared-seed mode (telescoping test fixture) ignores the level tag.
inline std::uint64_t sample_seed(std::uint64_t global_seed, int level,
                                 std::uint64_t index, bool share_across_levels = false) {
    const std::uint64_t tag = share_across_levels ? 0ULL
                                                  : static_cast<std::uint64_t>(level + 1);
    return CounterRng::keyed(global_seed, tag, index).key();
}

// Reserved stream used to retry a failed sample exactly once.
inline std::uint64_t retry_seed(std::uint64_t global_seed, int level,
                                std::uint64_t index) {
    return CounterRng::keyed(global_seed ^ 0x5afe5eedULL, static_cast<std::uint64_t>(level + 1),
                             index).key();
}

}  // namespace mlmcfem
