#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <set>
#include <vector>

#include "freelong/harness.hpp"
#include "freelong/io.hpp"
#include "freelong/spectral.hpp"

#include "test_util.hpp"

using namespace freelong;

namespace {

std::vector<std::vector<float>> frame_bytes(const VideoFeature& v, std::size_t first,
                                            std::size_t count) {
    std::vector<std::vector<float>> frames;
    const std::size_t plane = v.height() * v.width();
    for (std::size_t t = first; t < first + count; ++t) {
        std::vector<float> frame;
        for (std::size_t c = 0; c < v.channels(); ++c) {
            const float* p = v.values().data() + v.offset(c, t, 0, 0);
            frame.insert(frame.end(), p, p + plane);
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

bool same_multiset(std::vector<std::vector<float>> a, std::vector<std::vector<float>> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

} // namespace

TEST_CASE("noise rescheduling") {
    const VideoFeature base = testutil::random_video(2, 16, 4, 4, 100);

    SUBCASE("a single block passes the base through bitwise") {
        CHECK(reschedule_noise(base, 16, RngSpec{5}).tensor() == base.tensor());
    }
    SUBCASE("every block is a frame permutation of the base") {
        const VideoFeature out = reschedule_noise(base, 128, RngSpec{6});
        REQUIRE(out.frames() == 128);
        const auto base_frames = frame_bytes(base, 0, 16);
        for (std::size_t b = 0; b < 8; ++b)
            CHECK(same_multiset(frame_bytes(out, b * 16, 16), base_frames));
    }
    SUBCASE("block permutations differ from the base order past block zero") {
        const VideoFeature out = reschedule_noise(base, 32, RngSpec{7});
        CHECK(same_multiset(frame_bytes(out, 16, 16), frame_bytes(base, 0, 16)));
        // with 16! orderings a fixed seed keeping the identity would be a bug magnet
        CHECK(frame_bytes(out, 16, 16) != frame_bytes(base, 0, 16));
    }
    SUBCASE("fixed seed reproduces bitwise") {
        const VideoFeature a = reschedule_noise(base, 64, RngSpec{8});
        const VideoFeature b = reschedule_noise(base, 64, RngSpec{8});
        CHECK(a.tensor() == b.tensor());
        const VideoFeature c = reschedule_noise(base, 64, RngSpec{9});
        CHECK_FALSE(a.tensor() == c.tensor());
    }
    SUBCASE("partial blocks are rejected") {
        CHECK_THROWS_AS(reschedule_noise(base, 24, RngSpec{1}), ValidationError);
        CHECK_THROWS_AS(reschedule_noise(base, 0, RngSpec{1}), ValidationError);
    }
}

TEST_CASE("segment conditioning") {
    EmbeddingMap embeddings{{"A", {1.0f, 0.0f}}, {"B", {0.0f, 1.0f}}};

    SUBCASE("a single segment covers every frame") {
        const auto table = segment_conditioning({{0, "A"}}, 5, embeddings);
        REQUIRE(table.size() == 5);
        for (const auto& row : table)
            CHECK(row == embeddings.at("A"));
    }
    SUBCASE("boundary frames switch at the segment start") {
        const auto table = segment_conditioning({{0, "A"}, {64, "B"}}, 128, embeddings);
        REQUIRE(table.size() == 128);
        CHECK(table[0] == embeddings.at("A"));
        CHECK(table[63] == embeddings.at("A"));
        CHECK(table[64] == embeddings.at("B"));
        CHECK(table[127] == embeddings.at("B"));
    }
    SUBCASE("validation failures") {
        CHECK_THROWS_WITH_AS(segment_conditioning({{0, "C"}}, 4, embeddings),
                             doctest::Contains("\"C\""), ValidationError);
        CHECK_THROWS_AS(segment_conditioning({{0, "A"}, {4, "B"}}, 4, embeddings),
                        ValidationError);
        CHECK_THROWS_AS(segment_conditioning({{1, "A"}}, 4, embeddings), ValidationError);
        CHECK_THROWS_AS(segment_conditioning({{0, "A"}, {2, "B"}, {2, "A"}}, 4, embeddings),
                        ValidationError);
        CHECK_THROWS_AS(segment_conditioning({}, 4, embeddings), ValidationError);
    }
    SUBCASE("derived embeddings are deterministic per id") {
        CHECK(embedding_for_id("A", 4) == embedding_for_id("A", 4));
        CHECK(embedding_for_id("A", 4) != embedding_for_id("B", 4));
    }
}

TEST_CASE("toy denoise trajectories") {
    DenoiseConfig cfg;
    cfg.channels = 2;
    cfg.frames = 16;
    cfg.height = 2;
    cfg.width = 2;
    cfg.total_steps = 50;
    cfg.tau = 25;
    cfg.alpha = 2;
    cfg.rng = RngSpec{77};

    SUBCASE("blend gate follows the tau schedule") {
        const Trajectory traj = run_toy_denoise(cfg);
        REQUIRE(traj.used_blend.size() == 50);
        for (std::size_t step = 1; step <= 50; ++step)
            CHECK(static_cast<bool>(traj.used_blend[step - 1]) == (step <= 25));
    }
    SUBCASE("non-freelong modes never blend") {
        cfg.mode = DenoiseMode::Direct;
        cfg.total_steps = 8;
        cfg.tau = 4;
        const Trajectory traj = run_toy_denoise(cfg);
        for (auto flag : traj.used_blend)
            CHECK_FALSE(static_cast<bool>(flag));
    }
    SUBCASE("identical configs reproduce the final latent bitwise") {
        cfg.total_steps = 10;
        cfg.tau = 5;
        const Trajectory a = run_toy_denoise(cfg);
        const Trajectory b = run_toy_denoise(cfg);
        CHECK(a.final_latent.tensor() == b.final_latent.tensor());
        cfg.rng = RngSpec{78};
        const Trajectory c = run_toy_denoise(cfg);
        CHECK_FALSE(a.final_latent.tensor() == c.final_latent.tensor());
    }
    SUBCASE("snapshots follow the configured stride") {
        cfg.total_steps = 10;
        cfg.tau = 5;
        cfg.snapshot_stride = 4;
        const Trajectory traj = run_toy_denoise(cfg);
        REQUIRE(traj.snapshots.size() == 2);
        CHECK(traj.snapshots[0].first == 4);
        CHECK(traj.snapshots[1].first == 8);
    }
    SUBCASE("metadata echoes the config and names the generator") {
        cfg.total_steps = 2;
        cfg.tau = 1;
        const Trajectory traj = run_toy_denoise(cfg);
        CHECK(traj.metadata.at("rng_algorithm") == kRngAlgorithm);
        CHECK(traj.metadata.at("config").at("tau") == 1);
    }
    SUBCASE("conditioning shifts the conditioned frames") {
        cfg.total_steps = 4;
        cfg.tau = 2;
        cfg.segments = {{0, "A"}, {8, "B"}};
        const Trajectory with = run_toy_denoise(cfg);
        cfg.segments.clear();
        const Trajectory without = run_toy_denoise(cfg);
        CHECK_FALSE(with.final_latent.tensor() == without.final_latent.tensor());
    }
    SUBCASE("rescheduled init needs multiples of 16 frames") {
        cfg.noise_init = NoiseInit::Rescheduled;
        cfg.frames = 32;
        cfg.total_steps = 2;
        cfg.tau = 1;
        CHECK_NOTHROW(run_toy_denoise(cfg));
        cfg.frames = 20;
        CHECK_THROWS_AS(run_toy_denoise(cfg), ValidationError);
    }
    SUBCASE("config validation") {
        cfg.tau = 51;
        CHECK_THROWS_AS(run_toy_denoise(cfg), ValidationError);
        cfg.tau = 25;
        cfg.segments = {{3, "A"}};
        CHECK_THROWS_AS(run_toy_denoise(cfg), ValidationError);
    }
    SUBCASE("sliding mode runs the windowed baseline") {
        cfg.mode = DenoiseMode::SlidingWindow;
        cfg.total_steps = 3;
        cfg.tau = 1;
        cfg.window = 8;
        cfg.stride = 4;
        const Trajectory traj = run_toy_denoise(cfg);
        CHECK(traj.final_latent.frames() == 16);
    }
}

TEST_CASE("freelong keeps more spatial high-band energy than direct sampling") {
    // Regression on the toy loop at desk scale: the blended layer should not
    // lose spatial detail relative to plain global attention.
    DenoiseConfig cfg;
    cfg.channels = 4;
    cfg.frames = 128;
    cfg.height = 8;
    cfg.width = 8;
    cfg.total_steps = 50;
    cfg.tau = 25;
    cfg.alpha = 8;
    cfg.rng = RngSpec{4096};
    cfg.mode = DenoiseMode::FreeLong;
    const VideoFeature freelong_out = run_toy_denoise(cfg).final_latent;
    cfg.mode = DenoiseMode::Direct;
    const VideoFeature direct_out = run_toy_denoise(cfg).final_latent;

    const BandMaskPair spatial = band_masks(FreqDomain::Spatial, {8, 8}, 0.25);
    const double freelong_high = band_energy_fraction(freelong_out, spatial.high);
    const double direct_high = band_energy_fraction(direct_out, spatial.high);
    CHECK(freelong_high >= direct_high);
}

TEST_CASE("attention benchmark") {
    SUBCASE("pass counts follow the window formulas") {
        const BenchReport report = bench_attention(32, 8, 16, 8, 4, 1);
        REQUIRE(report.timings.size() == 3);
        CHECK(report.timings[0].mode == "direct");
        CHECK(report.timings[0].passes == 1);
        CHECK(report.timings[0].attention_evals == 1);
        CHECK(report.timings[1].mode == "sliding_window");
        CHECK(report.timings[1].passes == 7); // (32-8)/4 + 1
        CHECK(report.timings[2].mode == "freelong");
        CHECK(report.timings[2].passes == 1);
        CHECK(report.timings[2].attention_evals == 2);
        CHECK_FALSE(report.machine.empty());
        for (const BenchTiming& t : report.timings)
            CHECK(t.seconds >= 0.0);
    }
    SUBCASE("single-window sliding equals one direct pass") {
        const BenchReport report = bench_attention(16, 8, 8, 16, 8, 1);
        CHECK(report.timings[1].passes == 1);
    }
    SUBCASE("guards") {
        CHECK_THROWS_AS(bench_attention(1024, 64, 1024, 16, 8, 1), ValidationError);
        CHECK_THROWS_AS(bench_attention(32, 8, 16, 8, 4, 0), ValidationError);
        CHECK_THROWS_AS(bench_attention(8, 8, 8, 16, 8, 1), ValidationError);
    }
}
