#pragma once

#include <cstdint>
#include <vector>

#include "freelong/tensor.hpp"

namespace freelong {

// Streams are pcg32 (XSH-RR 64/32) seeded through splitmix64; gaussians come
// from Box-Muller on the uniform stream. (seed, algorithm) fixes the stream
// bit-for-bit, independent of platform word order and thread count.
inline constexpr const char* kRngAlgorithm = "pcg32-boxmuller";

struct RngSpec {
    std::uint64_t seed = 0;
};

std::uint64_t splitmix64(std::uint64_t& state);

// Stable child spec for substreams (noise init, weights, permutations, ...).
RngSpec derive_rng(RngSpec base, std::uint64_t tag);

class RandomStream {
public:
    explicit RandomStream(RngSpec spec);

    std::uint32_t next_u32();
    double next_unit_open();  // uniform on (0, 1]
    double next_gaussian();   // standard normal
    std::uint32_t next_below(std::uint32_t bound); // uniform on [0, bound), unbiased

    // Independent substream: same seed + tag always yields the same stream.
    RandomStream child(std::uint64_t tag) const;

private:
    std::uint64_t seed_ = 0;
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// I.i.d. standard-normal real32 tensor, deterministic under the RngSpec.
Tensor sample_gaussian(const std::vector<std::size_t>& dims, RngSpec rng);

// Fisher-Yates permutation of 0..n-1 drawn from the stream.
std::vector<std::size_t> random_permutation(std::size_t n, RandomStream& stream);

} // namespace freelong
