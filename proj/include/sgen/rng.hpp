#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sgen {

// Derive an independent child seed from a master seed and a stream index.
// splitmix64 over (master, stream); documented so scenario splits, chain
// generation and replications are reproducible across platforms.
std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream);

// Seedable 64-bit generator used everywhere in the artifact. The engine is
// std::mt19937_64 (its output sequence is pinned by the C++ standard); all
// distributions are hand-rolled on top of the raw 64-bit stream so results
// do not depend on the standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform double in [0, 1), 53 random bits
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller (cosine branch, no caching)
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    // unbiased integer in [0, n), Lemire's multiply-with-rejection
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

} // namespace sgen
