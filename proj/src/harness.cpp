#include "freelong/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <sys/utsname.h>

#include "freelong/parallel.hpp"
#include "freelong/spectral.hpp"

namespace freelong {

namespace {

// Substream tags for the per-run derived streams.
constexpr std::uint64_t kNoiseTag = 1;
constexpr std::uint64_t kWeightsTag = 2;
constexpr std::uint64_t kPermTag = 3;

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

} // namespace

const char* denoise_mode_name(DenoiseMode mode) {
    switch (mode) {
    case DenoiseMode::Direct: return "direct";
    case DenoiseMode::SlidingWindow: return "sliding_window";
    case DenoiseMode::FreeLong: return "freelong";
    }
    return "invalid";
}

DenoiseMode denoise_mode_from_name(const std::string& name) {
    if (name == "direct")
        return DenoiseMode::Direct;
    if (name == "sliding_window")
        return DenoiseMode::SlidingWindow;
    if (name == "freelong")
        return DenoiseMode::FreeLong;
    throw ValidationError("unknown denoise mode \"" + name +
                          "\" (expected direct, sliding_window, or freelong)");
}

const char* noise_init_name(NoiseInit init) {
    return init == NoiseInit::Random ? "random" : "rescheduled";
}

NoiseInit noise_init_from_name(const std::string& name) {
    if (name == "random")
        return NoiseInit::Random;
    if (name == "rescheduled")
        return NoiseInit::Rescheduled;
    throw ValidationError("unknown noise init \"" + name + "\" (expected random or rescheduled)");
}

void DenoiseConfig::validate() const {
    if (channels < 1 || frames < 1 || height < 1 || width < 1)
        throw ValidationError("latent dims must all be >= 1");
    if (total_steps < 1)
        throw ValidationError("total_steps must be >= 1");
    if (tau > total_steps)
        throw ValidationError("tau (" + std::to_string(tau) + ") must not exceed total_steps (" +
                              std::to_string(total_steps) + ")");
    if (!(d0 > 0.0))
        throw ValidationError("d0 must be > 0");
    if (mode == DenoiseMode::SlidingWindow) {
        if (window == 0 || window > frames)
            throw ValidationError("sliding window must lie in [1, frames]");
        if (stride == 0 || stride > window)
            throw ValidationError("stride must lie in [1, window]");
    }
    if (noise_init == NoiseInit::Rescheduled && frames % 16 != 0)
        throw ValidationError("rescheduled noise needs a frame count that is a multiple of 16");
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (i == 0 && segments[i].start != 0)
            throw ValidationError("first segment must start at frame 0");
        if (i > 0 && segments[i].start <= segments[i - 1].start)
            throw ValidationError("segment starts must be strictly increasing");
        if (segments[i].start >= frames)
            throw ValidationError("segment start " + std::to_string(segments[i].start) +
                                  " is past the last frame");
        if (segments[i].id.empty())
            throw ValidationError("segment ids must be non-empty");
    }
}

nlohmann::json DenoiseConfig::to_json() const {
    nlohmann::json segs = nlohmann::json::array();
    for (const Segment& s : segments)
        segs.push_back({{"start", s.start}, {"id", s.id}});
    return {
        {"channels", channels},
        {"frames", frames},
        {"height", height},
        {"width", width},
        {"total_steps", total_steps},
        {"tau", tau},
        {"alpha", alpha},
        {"d0", d0},
        {"seed", rng.seed},
        {"mode", denoise_mode_name(mode)},
        {"noise_init", noise_init_name(noise_init)},
        {"segments", segs},
        {"window", window},
        {"stride", stride},
        {"snapshot_stride", snapshot_stride},
    };
}

VideoFeature reschedule_noise(const VideoFeature& base, std::size_t total_frames, RngSpec rng) {
    const std::size_t block = base.frames();
    if (total_frames == 0 || total_frames % block != 0)
        throw ValidationError("total_frames (" + std::to_string(total_frames) +
                              ") must be a positive multiple of the base block (" +
                              std::to_string(block) + "); partial blocks are not allowed");
    const std::size_t blocks = total_frames / block;
    const std::size_t chans = base.channels(), h = base.height(), w = base.width();
    const std::size_t plane = h * w;

    VideoFeature out(chans, total_frames, h, w);
    RandomStream stream(rng);
    for (std::size_t b = 0; b < blocks; ++b) {
        std::vector<std::size_t> perm;
        if (b == 0) {
            perm.resize(block);
            for (std::size_t i = 0; i < block; ++i)
                perm[i] = i;
        } else {
            perm = random_permutation(block, stream);
        }
        for (std::size_t c = 0; c < chans; ++c)
            for (std::size_t i = 0; i < block; ++i)
                std::memcpy(out.values().data() + out.offset(c, b * block + i, 0, 0),
                            base.values().data() + base.offset(c, perm[i], 0, 0),
                            plane * sizeof(float));
    }
    return out;
}

std::vector<std::vector<float>> segment_conditioning(const std::vector<Segment>& segments,
                                                     std::size_t total_frames,
                                                     const EmbeddingMap& embeddings) {
    if (segments.empty())
        throw ValidationError("at least one segment is required");
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (i == 0 && segments[i].start != 0)
            throw ValidationError("first segment must start at frame 0");
        if (i > 0 && segments[i].start <= segments[i - 1].start)
            throw ValidationError("segment starts must be strictly increasing");
        if (segments[i].start >= total_frames)
            throw ValidationError("segment start " + std::to_string(segments[i].start) +
                                  " must be below total_frames " + std::to_string(total_frames));
        if (!embeddings.contains(segments[i].id))
            throw ValidationError("no embedding for segment id \"" + segments[i].id + "\"");
    }

    std::vector<std::vector<float>> table(total_frames);
    std::size_t seg = 0;
    for (std::size_t f = 0; f < total_frames; ++f) {
        while (seg + 1 < segments.size() && segments[seg + 1].start <= f)
            ++seg;
        table[f] = embeddings.at(segments[seg].id);
    }
    return table;
}

std::vector<float> embedding_for_id(const std::string& id, std::size_t dim) {
    RandomStream stream(RngSpec{fnv1a64(id) ^ 0x656d626564ULL});
    std::vector<float> v(dim);
    for (float& x : v)
        x = static_cast<float>(stream.next_gaussian());
    return v;
}

Trajectory run_toy_denoise(const DenoiseConfig& cfg) {
    cfg.validate();

    VideoFeature latent;
    if (cfg.noise_init == NoiseInit::Random) {
        latent = VideoFeature::from_tensor(sample_gaussian(
            {cfg.channels, cfg.frames, cfg.height, cfg.width}, derive_rng(cfg.rng, kNoiseTag)));
    } else {
        const VideoFeature base = VideoFeature::from_tensor(sample_gaussian(
            {cfg.channels, std::size_t{16}, cfg.height, cfg.width}, derive_rng(cfg.rng, kNoiseTag)));
        latent = reschedule_noise(base, cfg.frames, derive_rng(cfg.rng, kPermTag));
    }

    const AttentionWeights weights =
        AttentionWeights::random(cfg.channels, 1, derive_rng(cfg.rng, kWeightsTag));
    std::optional<LowPassFilter> filter;
    if (cfg.mode == DenoiseMode::FreeLong)
        filter = gaussian_lpf(cfg.frames, cfg.height, cfg.width, cfg.d0);

    std::vector<std::vector<float>> conditioning;
    if (!cfg.segments.empty()) {
        EmbeddingMap embeddings;
        for (const Segment& s : cfg.segments)
            embeddings.emplace(s.id, embedding_for_id(s.id, cfg.channels));
        conditioning = segment_conditioning(cfg.segments, cfg.frames, embeddings);
    }

    Trajectory traj;
    traj.used_blend.assign(cfg.total_steps, 0);
    const float relax = 1.0f / static_cast<float>(cfg.total_steps);
    const std::size_t plane = cfg.height * cfg.width;

    for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
        VideoFeature attended;
        switch (cfg.mode) {
        case DenoiseMode::Direct: {
            const SequenceFeature seq = SequenceFeature::from_video(latent);
            const QkvProjection qkv = project_qkv(seq, weights);
            attended = global_attention(qkv.q, qkv.k, qkv.v, weights.heads)
                           .to_video(cfg.height, cfg.width);
            break;
        }
        case DenoiseMode::SlidingWindow: {
            const SequenceFeature seq = SequenceFeature::from_video(latent);
            const QkvProjection qkv = project_qkv(seq, weights);
            attended =
                sliding_window_attention(qkv.q, qkv.k, qkv.v, cfg.window, cfg.stride, weights.heads)
                    .to_video(cfg.height, cfg.width);
            break;
        }
        case DenoiseMode::FreeLong:
            attended = spectralblend_ta(latent, weights, cfg.alpha, *filter, step, cfg.tau);
            traj.used_blend[step - 1] = step <= cfg.tau ? 1 : 0;
            break;
        }

        if (!conditioning.empty()) {
            auto values = attended.values();
            for (std::size_t c = 0; c < cfg.channels; ++c)
                for (std::size_t n = 0; n < cfg.frames; ++n) {
                    const float add = conditioning[n][c];
                    float* row = values.data() + (c * cfg.frames + n) * plane;
                    for (std::size_t p = 0; p < plane; ++p)
                        row[p] += add;
                }
        }

        auto x = latent.values();
        auto a = attended.values();
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] += (a[i] - x[i]) * relax;

        if (cfg.snapshot_stride > 0 && step % cfg.snapshot_stride == 0)
            traj.snapshots.emplace_back(step, latent);
    }

    traj.final_latent = std::move(latent);
    traj.metadata = {{"config", cfg.to_json()}, {"rng_algorithm", kRngAlgorithm}};
    return traj;
}

namespace {

std::pair<std::size_t, std::size_t> factor_near_square(std::size_t s) {
    std::size_t best = 1;
    for (std::size_t d = 1; d * d <= s; ++d)
        if (s % d == 0)
            best = d;
    return {best, s / best};
}

std::string machine_descriptor() {
    utsname info{};
    std::string name = "unknown";
    if (uname(&info) == 0)
        name = std::string(info.sysname) + " " + info.release + " " + info.machine;
#if defined(__VERSION__)
    name += ", compiler " __VERSION__;
#endif
    name += ", threads=" + std::to_string(default_thread_count());
    return name;
}

} // namespace

nlohmann::json BenchReport::to_json() const {
    nlohmann::json modes = nlohmann::json::array();
    for (const BenchTiming& t : timings)
        modes.push_back({
            {"mode", t.mode},
            {"seconds", t.seconds},
            {"passes", t.passes},
            {"attention_evals", t.attention_evals},
            {"attention_flops", t.attention_flops},
            {"projection_flops", t.projection_flops},
        });
    return {
        {"frames", frames}, {"dim", dim},       {"spatial", spatial},
        {"window", window}, {"stride", stride}, {"repetitions", repetitions},
        {"timings", modes}, {"machine", machine}, {"rng_algorithm", kRngAlgorithm},
    };
}

BenchReport bench_attention(std::size_t frames, std::size_t dim, std::size_t spatial,
                            std::size_t window, std::size_t stride, std::size_t repetitions) {
    if (frames < 1 || dim < 1 || spatial < 1)
        throw ValidationError("bench sizes must all be >= 1");
    if (repetitions < 1)
        throw ValidationError("repetitions must be >= 1");
    const std::size_t work = frames * spatial * dim;
    if (work > (std::size_t{1} << 24))
        throw ValidationError("bench refuses configurations with frames*spatial*dim > 2^24, got " +
                              std::to_string(work));
    const std::vector<std::size_t> offsets = sliding_window_offsets(frames, window, stride);
    const auto [bench_h, bench_w] = factor_near_square(spatial);

    SequenceFeature z(spatial, frames, dim);
    {
        const Tensor noise = sample_gaussian({spatial, frames, dim}, RngSpec{0xbe9c});
        std::copy(noise.r32().begin(), noise.r32().end(), z.data.begin());
    }
    const AttentionWeights weights = AttentionWeights::random(dim, 1, RngSpec{0xbe9d});
    const LowPassFilter filter = gaussian_lpf(frames, bench_h, bench_w, 0.25);
    const std::size_t alpha = std::max<std::size_t>(1, window / 2);

    const auto run_direct = [&]() -> float {
        const QkvProjection qkv = project_qkv(z, weights);
        return global_attention(qkv.q, qkv.k, qkv.v, weights.heads).data[0];
    };
    const auto run_sliding = [&]() -> float {
        // One independent layer pass per window, then overlap averaging.
        std::vector<double> acc(spatial * frames * dim, 0.0);
        std::vector<std::size_t> cover(frames, 0);
        for (const std::size_t o : offsets) {
            const SequenceFeature wz = z.slice_frames(o, window);
            const QkvProjection qkv = project_qkv(wz, weights);
            const SequenceFeature wout = global_attention(qkv.q, qkv.k, qkv.v, weights.heads);
            for (std::size_t s = 0; s < spatial; ++s)
                for (std::size_t i = 0; i < window; ++i)
                    for (std::size_t c = 0; c < dim; ++c)
                        acc[(s * frames + o + i) * dim + c] += wout.at(s, i, c);
            for (std::size_t i = 0; i < window; ++i)
                ++cover[o + i];
        }
        SequenceFeature out(spatial, frames, dim);
        for (std::size_t s = 0; s < spatial; ++s)
            for (std::size_t i = 0; i < frames; ++i)
                for (std::size_t c = 0; c < dim; ++c)
                    out.at(s, i, c) = static_cast<float>(acc[(s * frames + i) * dim + c] /
                                                         static_cast<double>(cover[i]));
        return out.data[0];
    };
    const auto run_freelong = [&]() -> float {
        const QkvProjection qkv = project_qkv(z, weights);
        const SequenceFeature local = local_attention(qkv.q, qkv.k, qkv.v, alpha, weights.heads);
        const SequenceFeature global = global_attention(qkv.q, qkv.k, qkv.v, weights.heads);
        return spectral_blend(global.to_video(bench_h, bench_w), local.to_video(bench_h, bench_w),
                              filter)
            .values()[0];
    };

    volatile float sink = 0.0f;
    const auto time_mode = [&](const auto& fn) {
        sink = sink + fn(); // warmup
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < repetitions; ++r) {
            const auto start = std::chrono::steady_clock::now();
            sink = sink + fn();
            const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
            best = std::min(best, elapsed.count());
        }
        return best;
    };

    const double sd = static_cast<double>(spatial) * static_cast<double>(dim);
    const double nf = static_cast<double>(frames);
    const double wf = static_cast<double>(window);
    const double passes_f = static_cast<double>(offsets.size());
    const double bins = nf * static_cast<double>(bench_h) * static_cast<double>(bench_w);
    const double fft_flops = 3.0 * static_cast<double>(dim) * 5.0 * bins *
                             std::ceil(std::log2(std::max(2.0, bins)));
    const double local_span = static_cast<double>(std::min(frames, 2 * alpha + 1));

    BenchReport report;
    report.frames = frames;
    report.dim = dim;
    report.spatial = spatial;
    report.window = window;
    report.stride = stride;
    report.repetitions = repetitions;
    report.machine = machine_descriptor();
    report.timings = {
        BenchTiming{"direct", time_mode(run_direct), 1, 1, 4.0 * nf * nf * sd,
                    6.0 * nf * sd * static_cast<double>(dim)},
        BenchTiming{"sliding_window", time_mode(run_sliding), offsets.size(), offsets.size(),
                    passes_f * 4.0 * wf * wf * sd,
                    passes_f * 6.0 * wf * sd * static_cast<double>(dim)},
        BenchTiming{"freelong", time_mode(run_freelong), 1, 2,
                    4.0 * nf * nf * sd + 4.0 * nf * local_span * sd + fft_flops,
                    6.0 * nf * sd * static_cast<double>(dim)},
    };
    return report;
}

} // namespace freelong
