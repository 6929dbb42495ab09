#include "disc/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace disc {

namespace {

// SplitMix64 finalizer; full-period bijection on the counter.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_pair(std::uint64_t key, std::uint64_t counter) {
    return mix64(mix64(counter) ^ key);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed ^ 0xd1b54a32d192ed03ULL)), counter_(0) {}

Rng Rng::from_state(std::uint64_t key, std::uint64_t counter) {
    Rng r;
    r.key_ = key;
    r.counter_ = counter;
    return r;
}

Rng Rng::substream(std::string_view name) const {
    Rng r;
    r.key_ = mix64(key_ ^ fnv1a64(name));
    r.counter_ = 0;
    return r;
}

Rng Rng::substream(std::string_view name, std::uint64_t index) const {
    Rng r;
    r.key_ = mix64(mix64(key_ ^ fnv1a64(name)) + index);
    r.counter_ = 0;
    return r;
}

std::uint64_t Rng::next_u64() { return hash_pair(key_, counter_++); }

double Rng::uniform01() {
    // 53 random bits; (0,1] so downstream log() never sees zero.
    const std::uint64_t bits = next_u64() >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("uniform: lo > hi");
    return lo + (hi - lo) * uniform01();
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit range
    // Rejection sampling for an unbiased draw.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
}

double Rng::normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

}  // namespace disc
