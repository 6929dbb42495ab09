#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "disc/tensor.hpp"

namespace disc {

// Binary model container. Self-describing: magic + format version up front,
// then tag / config hash / schedule metadata / rng state / named tensors.
// All integers little-endian fixed width, tensor payloads little-endian
// doubles, so save -> load -> save is bitwise stable.
struct Checkpoint {
    static constexpr char kMagic[9] = "DISCCKPT";
    static constexpr std::uint32_t kVersion = 1;

    std::string tag;          // model variant, e.g. "sd", "sd-disc", "ae"
    std::string config_hash;  // fnv1a hex of the resolved run config
    // noise-schedule metadata (zero for models without one)
    std::int32_t schedule_t = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    // training stream state for exact resume
    std::uint64_t rng_key = 0;
    std::uint64_t rng_counter = 0;
    std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Throws std::runtime_error on bad magic, version, or truncation.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace disc
