#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace qpattern {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad dimensions, out-of-range
/// parameter, malformed file, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Post-selection on f = 1 cannot succeed because the grid has no white cell.
class PostselectionError : public Error {
public:
    using Error::Error;
};

/// Requested state exceeds the configured qubit budget.
class ResourceError : public Error {
public:
    using Error::Error;
};

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits. std::uniform_real_distribution
/// is implementation-defined, so it would break cross-platform reproducibility.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Rng& rng, double p) {
    return uniform01(rng) < p;
}

/// splitmix64 finaliser; used to derive independent child seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return mix_seed(base ^ mix_seed(stream));
}

inline bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

inline int log2_exact(std::uint64_t v) {
    if (!is_pow2(v)) throw InvalidArgument("value " + std::to_string(v) + " is not a power of two");
    int r = 0;
    while ((std::uint64_t{1} << r) != v) ++r;
    return r;
}

inline std::uint64_t next_pow2(std::uint64_t v) {
    std::uint64_t p = 1;
    while (p < v) p <<= 1;
    return p;
}

/// 64-bit FNV-1a; stable across platforms, used for config fingerprints.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace qpattern
