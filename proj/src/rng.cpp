#include "freelong/rng.hpp"

#include <cmath>
#include <numbers>

namespace freelong {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

RandomStream::RandomStream(RngSpec spec) : seed_(spec.seed) {
    std::uint64_t mix = spec.seed;
    const std::uint64_t initstate = splitmix64(mix);
    const std::uint64_t initseq = splitmix64(mix);
    // Reference pcg32 seeding sequence.
    state_ = 0;
    inc_ = (initseq << 1u) | 1u;
    next_u32();
    state_ += initstate;
    next_u32();
}

std::uint32_t RandomStream::next_u32() {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
}

double RandomStream::next_unit_open() {
    // (0, 1]; never 0 so log() below stays finite.
    return (static_cast<double>(next_u32()) + 1.0) * 0x1p-32;
}

double RandomStream::next_gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    const double u1 = next_unit_open();
    const double u2 = next_unit_open();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
}

std::uint32_t RandomStream::next_below(std::uint32_t bound) {
    if (bound < 2)
        return 0;
    // Rejection below the largest multiple of bound keeps draws unbiased.
    const std::uint32_t threshold = (-bound) % bound;
    for (;;) {
        const std::uint32_t r = next_u32();
        if (r >= threshold)
            return r % bound;
    }
}

RngSpec derive_rng(RngSpec base, std::uint64_t tag) {
    std::uint64_t mix = base.seed ^ (0xa0761d6478bd642fULL + tag * 0xe7037ed1a0b428dbULL);
    return RngSpec{splitmix64(mix)};
}

RandomStream RandomStream::child(std::uint64_t tag) const {
    return RandomStream(derive_rng(RngSpec{seed_}, tag));
}

Tensor sample_gaussian(const std::vector<std::size_t>& dims, RngSpec rng) {
    Tensor out = Tensor::real32(dims);
    RandomStream stream(rng);
    for (float& v : out.r32())
        v = static_cast<float>(stream.next_gaussian());
    return out;
}

std::vector<std::size_t> random_permutation(std::size_t n, RandomStream& stream) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i)
        perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = stream.next_below(static_cast<std::uint32_t>(i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

} // namespace freelong
