#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ces {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// splitmix64 finalizer, used to derive independent seed streams.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; i++) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

// Named substream: all randomness in the project flows from one top-level
// seed through (name, id) substreams so parallel and serial runs agree.
inline uint64_t substream(uint64_t seed, std::string_view name, uint64_t a = 0, uint64_t b = 0) {
    uint64_t h = fnv1a(name, mix64(seed));
    h = mix64(h ^ mix64(a + 0x51ed2701));
    h = mix64(h ^ mix64(b + 0x9e3779b9));
    return h;
}

inline std::mt19937_64 make_rng(uint64_t seed, std::string_view name, uint64_t a = 0, uint64_t b = 0) {
    return std::mt19937_64(substream(seed, name, a, b));
}

} // namespace ces
