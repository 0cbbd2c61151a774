#pragma once

#include <cmath>
#include <cstdint>

namespace mvf::rng {

/// splitmix64 finalizer; bijective on uint64.
inline std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream key from (seed, tag, index). Tags keep the
/// consumers (Brownian increments, particle noise, initial draws, ...) from
/// ever sharing a stream.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    return mix(seed ^ mix(tag ^ mix(index)));
}

/// Replicate seed splitting rule: seed_i = mix(master ^ i). Recorded in run
/// metadata so any replicate can be reproduced on its own.
inline std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t i) {
    return mix(master ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
}

/// k-th output of the splitmix64 sequence started at `key`, mapped to (0,1).
inline double uniform01(std::uint64_t key, std::uint64_t counter) {
    const std::uint64_t x = mix(key + 0x9e3779b97f4a7c15ULL * counter);
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

/// Counter-addressable standard normal draw (Box-Muller, cosine branch).
/// Consumes two uniforms per call; any (key, counter) pair can be replayed
/// independently, which is what makes runs bit-reproducible and
/// permutation-equivariance testable.
inline double normal(std::uint64_t key, std::uint64_t counter) {
    const double u1 = uniform01(key, 2 * counter);
    const double u2 = uniform01(key, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

// Stream tags.
inline constexpr std::uint64_t kTagBrownian = 0xB101;
inline constexpr std::uint64_t kTagInit = 0x1217;
inline constexpr std::uint64_t kTagParticleNoise = 0xA703;
inline constexpr std::uint64_t kTagWeightedNoise = 0xC509;
inline constexpr std::uint64_t kTagFeynmanKac = 0xF10B;
inline constexpr std::uint64_t kTagProbe = 0x9E0D;

}  // namespace mvf::rng
