#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace igd {

// Deterministic random source. All draws are derived from mt19937_64 with
// fixed bit-to-double mappings so that streams are reproducible across
// standard library implementations (std::*_distribution is not portable).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);

    // Standard normal via Box-Muller (pairs cached).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates shuffle with uniform_index draws.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Random permutation of [0, n).
    std::vector<int> permutation(int n);

    // Permutation of [0, n) with no fixed point (n >= 2). Used for
    // within-batch pairing where an image must not pair with itself.
    std::vector<int> derangement(int n);

    // k distinct indices from [0, n), sampled without replacement,
    // returned in ascending order.
    std::vector<int> sample_without_replacement(int n, int k);

    // Engine state round-trip (checkpoint forensics).
    std::string state() const;
    void set_state(const std::string& s);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace igd
