#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "freelong/attention.hpp"
#include "freelong/rng.hpp"
#include "freelong/tensor.hpp"

namespace freelong {

enum class DenoiseMode { Direct, SlidingWindow, FreeLong };
enum class NoiseInit { Random, Rescheduled };

const char* denoise_mode_name(DenoiseMode mode);
DenoiseMode denoise_mode_from_name(const std::string& name);
const char* noise_init_name(NoiseInit init);
NoiseInit noise_init_from_name(const std::string& name);

struct Segment {
    std::size_t start = 0;
    std::string id;
};

struct DenoiseConfig {
    std::size_t channels = 4;
    std::size_t frames = 128;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t total_steps = 50;
    std::size_t tau = 25;
    std::size_t alpha = 8;
    double d0 = 0.25;
    RngSpec rng;
    DenoiseMode mode = DenoiseMode::FreeLong;
    NoiseInit noise_init = NoiseInit::Random;
    std::vector<Segment> segments; // empty -> unconditioned
    std::size_t window = 16;       // sliding mode only
    std::size_t stride = 8;
    std::size_t snapshot_stride = 0; // 0 disables snapshots

    void validate() const;
    nlohmann::json to_json() const;
};

struct Trajectory {
    std::vector<std::pair<std::size_t, VideoFeature>> snapshots; // (step, latent)
    std::vector<std::uint8_t> used_blend; // index step-1, one entry per step
    VideoFeature final_latent;
    nlohmann::json metadata; // config echo + RNG algorithm name
};

// Long initial noise from a short base block: block k holds the base frames
// reordered by a seeded permutation, with block 0 kept in order. Every
// output frame is bitwise one of the base frames.
VideoFeature reschedule_noise(const VideoFeature& base, std::size_t total_frames, RngSpec rng);

using EmbeddingMap = std::map<std::string, std::vector<float>>;

// Frame f gets the embedding of the last segment starting at or before f.
// Segment starts must be strictly increasing, begin at 0, and stay below
// total_frames; every id needs an embedding.
std::vector<std::vector<float>> segment_conditioning(const std::vector<Segment>& segments,
                                                     std::size_t total_frames,
                                                     const EmbeddingMap& embeddings);

// Deterministic per-id conditioning vector (unit-variance gaussian seeded
// by the id), so a given id means the same vector in every run.
std::vector<float> embedding_for_id(const std::string& id, std::size_t dim);

// Synthetic denoising loop: T steps of one temporal-attention layer
// (mode-dependent) plus per-frame conditioning, relaxed into the latent by
// x <- x - (1/T)(x - attended). Fully deterministic under the config.
Trajectory run_toy_denoise(const DenoiseConfig& cfg);

struct BenchTiming {
    std::string mode;
    double seconds = 0.0;      // min over repetitions
    std::size_t passes = 0;
    std::size_t attention_evals = 0;
    double attention_flops = 0.0;  // estimate
    double projection_flops = 0.0; // estimate
};

struct BenchReport {
    std::size_t frames = 0, dim = 0, spatial = 0, window = 0, stride = 0, repetitions = 0;
    std::vector<BenchTiming> timings; // direct, sliding_window, freelong
    std::string machine;

    nlohmann::json to_json() const;
};

// Times the three attention strategies on identical seeded inputs.
// direct: one projection + one full-length attention pass.
// sliding_window: an independent layer pass per window (slice, project,
//   attend) plus overlap averaging, mirroring how per-window methods
//   re-run the layer on every window.
// freelong: one projection, a banded local pass with alpha = window/2, a
//   global pass, and the spectral low-pass fusion of the two outputs.
// Refuses configurations with frames * spatial * dim > 2^24.
BenchReport bench_attention(std::size_t frames, std::size_t dim, std::size_t spatial,
                            std::size_t window, std::size_t stride, std::size_t repetitions);

} // namespace freelong
