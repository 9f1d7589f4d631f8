#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace loadcast {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (std::byte b : bytes) {
        hash ^= static_cast<std::uint64_t>(b);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

}  // namespace loadcast
