#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vegn {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a run seed, a purpose tag and up to
// two indices (epoch, batch, tensor ordinal, ...). Every random draw in the
// engine goes through this so that a single --seed pins the whole run.
inline std::uint64_t seed_stream(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    h = splitmix64(h ^ splitmix64(seed));
    h = splitmix64(h ^ splitmix64(a + 0x517cc1b727220a95ULL));
    h = splitmix64(h ^ splitmix64(b + 0x2545f4914f6cdd1dULL));
    return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view tag,
                                std::uint64_t a = 0, std::uint64_t b = 0) {
    return std::mt19937_64(seed_stream(seed, tag, a, b));
}

}  // namespace vegn
