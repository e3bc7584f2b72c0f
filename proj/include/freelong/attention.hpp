#pragma once

#include <span>
#include <vector>

#include "freelong/rng.hpp"
#include "freelong/spectral.hpp"
#include "freelong/tensor.hpp"

namespace freelong {

// Projection matrices for one temporal-attention layer; heads must divide
// the feature dim. Scaling inside the kernels uses sqrt(dim / heads).
struct AttentionWeights {
    std::size_t dim = 0;
    std::size_t heads = 1;
    std::vector<float> wq, wk, wv; // each dim x dim, row-major

    // Seeded N(0, 1/dim) entries; a fixed (dim, heads, seed) triple always
    // yields the same weights.
    static AttentionWeights random(std::size_t dim, std::size_t heads, RngSpec rng);
    void validate() const;
};

// [S, N, d] view: S independent token sequences (one per spatial position),
// N frames as tokens, d channels. Maps to/from VideoFeature [d, N, h, w]
// with s = y * w + x; the round trip is bit-exact.
struct SequenceFeature {
    std::size_t seqs = 0;
    std::size_t frames = 0;
    std::size_t dim = 0;
    std::vector<float> data;

    SequenceFeature() = default;
    SequenceFeature(std::size_t seqs, std::size_t frames, std::size_t dim)
        : seqs(seqs), frames(frames), dim(dim), data(seqs * frames * dim, 0.0f) {}

    float at(std::size_t s, std::size_t n, std::size_t c) const {
        return data[(s * frames + n) * dim + c];
    }
    float& at(std::size_t s, std::size_t n, std::size_t c) {
        return data[(s * frames + n) * dim + c];
    }
    std::span<const float> frame_row(std::size_t s, std::size_t n) const {
        return {data.data() + (s * frames + n) * dim, dim};
    }

    static SequenceFeature from_video(const VideoFeature& z);
    VideoFeature to_video(std::size_t height, std::size_t width) const;

    // Frames [first, first + count) of every sequence, copied out.
    SequenceFeature slice_frames(std::size_t first, std::size_t count) const;
};

struct QkvProjection {
    SequenceFeature q, k, v;
};

QkvProjection project_qkv(const SequenceFeature& z, const AttentionWeights& w);

// Row-stochastic N x N maps, one per (sequence, head).
struct AttentionMaps {
    std::size_t seqs = 0;
    std::size_t heads = 0;
    std::size_t frames = 0;
    std::vector<float> data;

    std::span<const float> map(std::size_t s, std::size_t head) const {
        return {data.data() + (s * heads + head) * frames * frames, frames * frames};
    }
    Tensor to_tensor() const; // real32 [S, H, N, N]
};

// How out-of-window entries are handled in local attention. The default
// masks logits before the softmax so rows renormalize over the window;
// PostSoftmaxZero zeroes full-softmax entries afterwards, which leaves rows
// summing below 1 and exists for comparison runs only.
enum class LocalMaskMode { RenormalizedSoftmax, PostSoftmaxZero };

// Every frame attends to all frames.
SequenceFeature global_attention(const SequenceFeature& q, const SequenceFeature& k,
                                 const SequenceFeature& v, std::size_t heads,
                                 AttentionMaps* maps = nullptr);

// Frame i attends to frames j with |i - j| <= alpha.
SequenceFeature local_attention(const SequenceFeature& q, const SequenceFeature& k,
                                const SequenceFeature& v, std::size_t alpha, std::size_t heads,
                                AttentionMaps* maps = nullptr,
                                LocalMaskMode mode = LocalMaskMode::RenormalizedSoftmax);

// Window start offsets 0, stride, 2*stride, ... with a final window clamped
// to end at the last frame so every frame is covered.
std::vector<std::size_t> sliding_window_offsets(std::size_t frames, std::size_t window,
                                                std::size_t stride);

// Baseline: full attention inside each window; frames in several windows
// get the arithmetic mean of their per-window outputs.
SequenceFeature sliding_window_attention(const SequenceFeature& q, const SequenceFeature& k,
                                         const SequenceFeature& v, std::size_t window,
                                         std::size_t stride, std::size_t heads);

// The blended temporal-attention layer: one shared QKV projection, a local
// and a global attention pass, and a low-pass spectral fusion of the two
// outputs during the first tau denoising steps (step <= tau). Past tau the
// local output is returned untouched.
VideoFeature spectralblend_ta(const VideoFeature& z_in, const AttentionWeights& w,
                              std::size_t alpha, const LowPassFilter& filter, std::size_t step,
                              std::size_t tau);

struct DiagonalityStats {
    double band_mass = 0.0;       // mass within |i-j| <= band, divided by N
    double row_entropy_mean = 0.0; // nats
};

DiagonalityStats attention_diagonality(std::span<const float> map, std::size_t frames,
                                       std::size_t band);

} // namespace freelong
