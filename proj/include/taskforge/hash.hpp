#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace taskforge::hash {

// 64-bit FNV-1a, used for cache keys and deterministic seeding.
inline uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ull) {
    uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(std::string_view data);

// SHA-256 of a file's contents; throws std::runtime_error if unreadable.
std::string sha256_file_hex(const std::string& path);

// Deterministic counter-based RNG. Streams are a pure function of the seed,
// so sequences reproduce across processes and hosts.
class SplitMixRng {
public:
    explicit SplitMixRng(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Unbiased draw in [0, bound) via rejection sampling.
    uint64_t next_below(uint64_t bound) {
        uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    uint64_t state_;
};

}  // namespace taskforge::hash
