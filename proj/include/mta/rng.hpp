#pragma once

#include <cstdint>
#include <random>

namespace mta {

/// splitmix64 step; the usual stateless mixer.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based sub-stream seed: independent of evaluation order, so
/// parallel workers reproduce the serial result exactly.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter) {
    return splitmix64(splitmix64(base) ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64(splitmix64(seed));
}

}  // namespace mta
