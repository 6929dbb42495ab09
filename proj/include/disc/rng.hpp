#pragma once

#include <cstdint>
#include <string_view>

namespace disc {

// Counter-based random stream. A stream is (key, counter); every draw hashes
// the pair and bumps the counter, so identical seed + identical call sequence
// reproduces the stream exactly. Named substreams derive a fresh key from the
// parent key and the name; parent and child never share state.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Independent stream addressed by (parent key, name). Deterministic.
    Rng substream(std::string_view name) const;
    // Indexed variant for per-item streams (sample i, tile i, ...).
    Rng substream(std::string_view name, std::uint64_t index) const;

    std::uint64_t next_u64();

    // Uniform on (0,1] (never returns 0, so log() is safe).
    double uniform01();
    // Uniform on [lo, hi].
    double uniform(double lo, double hi);
    // Uniform integer on {lo..hi} inclusive, unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    // Standard normal via Box-Muller. Two u64 draws per call, no cached spare.
    double normal();

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }
    // Rebuild a stream from serialized state (checkpoint resume).
    static Rng from_state(std::uint64_t key, std::uint64_t counter);

private:
    Rng() = default;
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

// 64-bit FNV-1a, used for substream naming and content hashing in manifests.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(std::string_view s);

}  // namespace disc
