#include "sgen/rng.hpp"

#include <cmath>

namespace sgen {

namespace {
std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}
} // namespace

std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t state = master;
    std::uint64_t a = splitmix64(state);
    state = a ^ (stream * 0xD1342543DE82EF95ull + 0x2545F4914F6CDD1Dull);
    return splitmix64(state);
}

double Rng::normal() {
    // u1 in (0,1] so log() is finite
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Lemire's nearly-divisionless method
    unsigned __int128 m = static_cast<unsigned __int128>(eng_()) * n;
    std::uint64_t lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
        std::uint64_t threshold = (0 - n) % n;
        while (lo < threshold) {
            m = static_cast<unsigned __int128>(eng_()) * n;
            lo = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

} // namespace sgen
