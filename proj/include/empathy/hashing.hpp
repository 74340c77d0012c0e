#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace empathy {

/// Lowercase hex SHA-256 of the bytes in `data`.
std::string sha256_hex(std::string_view data);

/// 64-bit FNV-1a. Stable across platforms and runs; used to seed mocks.
constexpr std::uint64_t fnv1a64(std::string_view data) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// SplitMix64 finalizer; mixes a seed with a stream discriminator.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace empathy
