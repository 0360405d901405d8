#pragma once

#include <cstdint>
#include <random>

namespace cnalloc {

using Rng = std::mt19937_64;

/// Independent named streams derived from one master seed. Adding a stream
/// never perturbs the others.
enum class Stream : std::uint64_t {
    agent_init = 1,
    agent_noise = 2,
    policy = 3,
    environment = 4,
    traffic = 5,
    baseline = 6,
};

inline Rng make_stream(std::uint64_t master_seed, Stream stream, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index), 0x9e3779b9u};
    return Rng(seq);
}

inline std::uint64_t derive_seed(std::uint64_t master_seed, Stream stream, std::uint64_t index = 0) {
    Rng rng = make_stream(master_seed, stream, index);
    return rng();
}

}  // namespace cnalloc
