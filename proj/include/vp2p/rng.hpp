#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace vp2p {

// splitmix64; used to derive independent stream seeds from (seed, stream id).
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }

inline void fill_gaussian(std::mt19937_64& rng, double* dst, size_t count, double stddev = 1.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (size_t i = 0; i < count; ++i) dst[i] = dist(rng);
}

inline std::vector<double> gaussian_vector(uint64_t seed, size_t count, double stddev = 1.0) {
    auto rng = make_rng(seed);
    std::vector<double> v(count);
    fill_gaussian(rng, v.data(), count, stddev);
    return v;
}

}  // namespace vp2p
