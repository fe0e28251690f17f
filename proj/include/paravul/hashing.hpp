#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace paravul {

// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = kFnvOffset) {
    std::uint64_t h = seed;
    for (char c : text) {
        h ^= static_cast<std::uint8_t>(c);
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a_bytes(std::span<const std::byte> bytes, std::uint64_t seed = kFnvOffset) {
    std::uint64_t h = seed;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint8_t>(b);
        h *= kFnvPrime;
    }
    return h;
}

// Final avalanche so that low bits are usable as bucket indices.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}

}  // namespace paravul
