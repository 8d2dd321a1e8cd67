#pragma once

#include <cstdint>
#include <random>

namespace swcert {

/// Engine used everywhere noise or initialisation is drawn.
using Engine = std::mt19937_64;

/// Purpose tags keep substreams for different consumers disjoint even when
/// their (a, b) coordinates coincide.
enum class StreamTag : std::uint64_t {
    SmoothingNoise = 1,
    WindowNoise = 2,
    AttackNoise = 3,
    Training = 4,
    Synthetic = 5,
    Oracle = 6,
    Init = 7,
};

/// Deterministic engine for the coordinate (seed, tag, a, b). Typical use:
/// a = stream item index, b = repetition index. Two calls with the same
/// coordinate yield identical sequences regardless of call order or thread.
inline Engine substream(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0, std::uint64_t b = 0) {
    const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    const auto t = static_cast<std::uint64_t>(tag);
    std::seed_seq seq{lo(seed), hi(seed), lo(t), lo(a), hi(a), lo(b), hi(b)};
    return Engine(seq);
}

}  // namespace swcert
