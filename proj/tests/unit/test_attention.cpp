#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "freelong/attention.hpp"
#include "freelong/rng.hpp"

#include "test_util.hpp"

using namespace freelong;

namespace {

SequenceFeature random_sequence(std::size_t s, std::size_t n, std::size_t d, std::uint64_t seed) {
    SequenceFeature out(s, n, d);
    RandomStream stream(RngSpec{seed});
    for (float& v : out.data)
        v = static_cast<float>(stream.next_gaussian());
    return out;
}

// Plain reference attention: explicit loops, its own softmax, no sharing
// with the library kernel. alpha == SIZE_MAX means unmasked.
SequenceFeature oracle_attention(const SequenceFeature& q, const SequenceFeature& k,
                                 const SequenceFeature& v, std::size_t heads, std::size_t alpha) {
    const std::size_t n = q.frames, d = q.dim, dh = d / heads;
    SequenceFeature out(q.seqs, n, d);
    for (std::size_t s = 0; s < q.seqs; ++s)
        for (std::size_t head = 0; head < heads; ++head)
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> w(n, 0.0);
                double denom = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t dist = i > j ? i - j : j - i;
                    if (alpha != SIZE_MAX && dist > alpha)
                        continue;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < dh; ++c)
                        dot += static_cast<double>(q.at(s, i, head * dh + c)) *
                               k.at(s, j, head * dh + c);
                    w[j] = std::exp(dot / std::sqrt(static_cast<double>(dh)));
                    denom += w[j];
                }
                for (std::size_t c = 0; c < dh; ++c) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        acc += w[j] / denom * v.at(s, j, head * dh + c);
                    out.at(s, i, head * dh + c) = static_cast<float>(acc);
                }
            }
    return out;
}

double max_abs_diff(const SequenceFeature& a, const SequenceFeature& b) {
    REQUIRE(a.data.size() == b.data.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return worst;
}

} // namespace

TEST_CASE("qkv projection") {
    SUBCASE("identity weights pass the input through") {
        AttentionWeights w;
        w.dim = 3;
        w.heads = 1;
        w.wq.assign(9, 0.0f);
        w.wk.assign(9, 0.0f);
        w.wv.assign(9, 0.0f);
        for (std::size_t i = 0; i < 3; ++i)
            w.wq[i * 3 + i] = w.wk[i * 3 + i] = w.wv[i * 3 + i] = 1.0f;
        const SequenceFeature z = random_sequence(2, 4, 3, 11);
        const QkvProjection qkv = project_qkv(z, w);
        CHECK(qkv.q.data == z.data);
        CHECK(qkv.k.data == z.data);
        CHECK(qkv.v.data == z.data);
    }
    SUBCASE("zero weights give zero projections") {
        AttentionWeights w;
        w.dim = 3;
        w.heads = 1;
        w.wq.assign(9, 0.0f);
        w.wk.assign(9, 0.0f);
        w.wv.assign(9, 0.0f);
        const QkvProjection qkv = project_qkv(random_sequence(1, 2, 3, 12), w);
        for (float x : qkv.q.data)
            CHECK(x == 0.0f);
    }
    SUBCASE("random weights match a naive matmul") {
        const AttentionWeights w = AttentionWeights::random(4, 1, RngSpec{13});
        const SequenceFeature z = random_sequence(2, 3, 4, 14);
        const QkvProjection qkv = project_qkv(z, w);
        for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t n = 0; n < 3; ++n)
                for (std::size_t j = 0; j < 4; ++j) {
                    double want = 0.0;
                    for (std::size_t c = 0; c < 4; ++c)
                        want += static_cast<double>(z.at(s, n, c)) * w.wq[c * 4 + j];
                    CHECK(qkv.q.at(s, n, j) == doctest::Approx(want).epsilon(1e-5));
                }
    }
    SUBCASE("dim mismatch is rejected") {
        const AttentionWeights w = AttentionWeights::random(4, 1, RngSpec{13});
        CHECK_THROWS_AS(project_qkv(random_sequence(1, 2, 3, 15), w), ValidationError);
    }
}

TEST_CASE("global attention") {
    SUBCASE("zero queries give uniform rows and mean-of-values output") {
        const std::size_t n = 5, d = 4;
        SequenceFeature q(1, n, d);
        const SequenceFeature k = random_sequence(1, n, d, 21);
        const SequenceFeature v = random_sequence(1, n, d, 22);
        AttentionMaps maps;
        const SequenceFeature out = global_attention(q, k, v, 1, &maps);
        for (float a : maps.map(0, 0))
            CHECK(std::abs(a - 1.0 / n) <= 1e-6);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < d; ++c) {
                double mean = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    mean += v.at(0, j, c);
                CHECK(std::abs(out.at(0, i, c) - mean / n) <= 1e-6);
            }
    }
    SUBCASE("single frame is the identity") {
        const SequenceFeature q = random_sequence(2, 1, 4, 23);
        const SequenceFeature k = random_sequence(2, 1, 4, 24);
        const SequenceFeature v = random_sequence(2, 1, 4, 25);
        AttentionMaps maps;
        const SequenceFeature out = global_attention(q, k, v, 1, &maps);
        CHECK(out.data == v.data);
        CHECK(maps.map(0, 0)[0] == 1.0f);
    }
    SUBCASE("matches the reference implementation") {
        const SequenceFeature q = random_sequence(2, 5, 4, 26);
        const SequenceFeature k = random_sequence(2, 5, 4, 27);
        const SequenceFeature v = random_sequence(2, 5, 4, 28);
        CHECK(max_abs_diff(global_attention(q, k, v, 1), oracle_attention(q, k, v, 1, SIZE_MAX)) <=
              1e-5);
        CHECK(max_abs_diff(global_attention(q, k, v, 2), oracle_attention(q, k, v, 2, SIZE_MAX)) <=
              1e-5);
    }
    SUBCASE("rows are stochastic") {
        const SequenceFeature q = random_sequence(3, 7, 6, 29);
        const SequenceFeature k = random_sequence(3, 7, 6, 30);
        const SequenceFeature v = random_sequence(3, 7, 6, 31);
        AttentionMaps maps;
        global_attention(q, k, v, 2, &maps);
        for (std::size_t s = 0; s < maps.seqs; ++s)
            for (std::size_t h = 0; h < maps.heads; ++h) {
                const auto map = maps.map(s, h);
                for (std::size_t i = 0; i < maps.frames; ++i) {
                    double row = 0.0;
                    for (std::size_t j = 0; j < maps.frames; ++j)
                        row += map[i * maps.frames + j];
                    CHECK(std::abs(row - 1.0) <= 1e-5);
                }
            }
    }
    SUBCASE("permuting frames permutes the output rows") {
        const std::size_t n = 6, d = 4;
        const SequenceFeature q = random_sequence(1, n, d, 32);
        const SequenceFeature k = random_sequence(1, n, d, 33);
        const SequenceFeature v = random_sequence(1, n, d, 34);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::swap(perm[0], perm[4]);
        std::swap(perm[2], perm[5]);
        const auto permute = [&](const SequenceFeature& z) {
            SequenceFeature out(1, n, d);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < d; ++c)
                    out.at(0, i, c) = z.at(0, perm[i], c);
            return out;
        };
        const SequenceFeature base = global_attention(q, k, v, 1);
        const SequenceFeature permuted =
            global_attention(permute(q), permute(k), permute(v), 1);
        CHECK(max_abs_diff(permuted, permute(base)) <= 1e-5);
    }
}

TEST_CASE("local attention") {
    const SequenceFeature q = random_sequence(2, 6, 4, 41);
    const SequenceFeature k = random_sequence(2, 6, 4, 42);
    const SequenceFeature v = random_sequence(2, 6, 4, 43);

    SUBCASE("alpha >= N-1 reproduces global attention bit for bit") {
        const SequenceFeature g = global_attention(q, k, v, 1);
        CHECK(local_attention(q, k, v, 5, 1).data == g.data);
        CHECK(local_attention(q, k, v, 1000, 1).data == g.data);
    }
    SUBCASE("alpha = 0 returns the values untouched") {
        AttentionMaps maps;
        const SequenceFeature out = local_attention(q, k, v, 0, 1, &maps);
        CHECK(out.data == v.data);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j)
                CHECK(maps.map(0, 0)[i * 6 + j] == (i == j ? 1.0f : 0.0f));
    }
    SUBCASE("entries outside the band are exactly zero") {
        AttentionMaps maps;
        local_attention(q, k, v, 2, 1, &maps);
        for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t i = 0; i < 6; ++i)
                for (std::size_t j = 0; j < 6; ++j) {
                    const std::size_t dist = i > j ? i - j : j - i;
                    if (dist > 2)
                        CHECK(maps.map(s, 0)[i * 6 + j] == 0.0f);
                    else
                        CHECK(maps.map(s, 0)[i * 6 + j] > 0.0f);
                }
    }
    SUBCASE("banded rows renormalize and match the reference") {
        const SequenceFeature n4q = random_sequence(1, 4, 4, 44);
        const SequenceFeature n4k = random_sequence(1, 4, 4, 45);
        const SequenceFeature n4v = random_sequence(1, 4, 4, 46);
        AttentionMaps maps;
        const SequenceFeature out = local_attention(n4q, n4k, n4v, 1, 1, &maps);
        CHECK(max_abs_diff(out, oracle_attention(n4q, n4k, n4v, 1, 1)) <= 1e-5);
        for (std::size_t i = 0; i < 4; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < 4; ++j)
                row += maps.map(0, 0)[i * 4 + j];
            CHECK(std::abs(row - 1.0) <= 1e-5);
        }
    }
    SUBCASE("post-softmax zeroing keeps global weights but drops mass") {
        AttentionMaps banded, full;
        local_attention(q, k, v, 1, 1, &banded, LocalMaskMode::PostSoftmaxZero);
        global_attention(q, k, v, 1, &full);
        double row = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            const float a = banded.map(0, 0)[2 * 6 + j];
            row += a;
            const std::size_t dist = j > 2 ? j - 2 : 2 - j;
            if (dist > 1)
                CHECK(a == 0.0f);
            else
                CHECK(a == full.map(0, 0)[2 * 6 + j]);
        }
        CHECK(row < 1.0);
    }
}

TEST_CASE("sliding window attention") {
    SUBCASE("a single window equals global attention") {
        const SequenceFeature q = random_sequence(2, 8, 4, 51);
        const SequenceFeature k = random_sequence(2, 8, 4, 52);
        const SequenceFeature v = random_sequence(2, 8, 4, 53);
        CHECK(max_abs_diff(sliding_window_attention(q, k, v, 8, 8, 1),
                           global_attention(q, k, v, 1)) <= 1e-6);
    }
    SUBCASE("offset arithmetic") {
        CHECK(sliding_window_offsets(128, 16, 8).size() == 15);
        CHECK(sliding_window_offsets(16, 16, 8) == std::vector<std::size_t>{0});
        // 20 frames, window 16, stride 8: a clamped tail window covers 4..19
        CHECK(sliding_window_offsets(20, 16, 8) == std::vector<std::size_t>{0, 4});
        CHECK_THROWS_AS(sliding_window_offsets(8, 16, 8), ValidationError);
        CHECK_THROWS_AS(sliding_window_offsets(8, 4, 0), ValidationError);
        // stride past the window would leave frames no window attends to
        CHECK_THROWS_AS(sliding_window_offsets(10, 2, 5), ValidationError);
    }
    SUBCASE("disjoint windows equal per-block global attention") {
        const SequenceFeature q = random_sequence(1, 8, 4, 54);
        const SequenceFeature k = random_sequence(1, 8, 4, 55);
        const SequenceFeature v = random_sequence(1, 8, 4, 56);
        const SequenceFeature out = sliding_window_attention(q, k, v, 4, 4, 1);
        for (std::size_t block = 0; block < 2; ++block) {
            const SequenceFeature blk = global_attention(
                q.slice_frames(block * 4, 4), k.slice_frames(block * 4, 4),
                v.slice_frames(block * 4, 4), 1);
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t c = 0; c < 4; ++c)
                    CHECK(out.at(0, block * 4 + i, c) ==
                          doctest::Approx(blk.at(0, i, c)).epsilon(1e-6));
        }
    }
}

TEST_CASE("spectralblend layer") {
    const VideoFeature z = testutil::random_video(4, 12, 4, 4, 61);
    const AttentionWeights w = AttentionWeights::random(4, 1, RngSpec{62});
    const LowPassFilter filter = gaussian_lpf(12, 4, 4, 0.25);

    SUBCASE("past tau the layer is exactly the local path") {
        const VideoFeature gated = spectralblend_ta(z, w, 2, filter, 26, 25);
        const SequenceFeature seq = SequenceFeature::from_video(z);
        const QkvProjection qkv = project_qkv(seq, w);
        const VideoFeature local =
            local_attention(qkv.q, qkv.k, qkv.v, 2, 1).to_video(z.height(), z.width());
        CHECK(gated.tensor() == local.tensor());
    }
    SUBCASE("an all-ones filter at step <= tau gives the global path") {
        Tensor ones = Tensor::real32({12, 4, 4});
        for (float& x : ones.r32())
            x = 1.0f;
        const VideoFeature blended = spectralblend_ta(z, w, 2, LowPassFilter(std::move(ones)), 5, 25);
        const SequenceFeature seq = SequenceFeature::from_video(z);
        const QkvProjection qkv = project_qkv(seq, w);
        const VideoFeature global =
            global_attention(qkv.q, qkv.k, qkv.v, 1).to_video(z.height(), z.width());
        double worst = 0.0;
        for (std::size_t i = 0; i < blended.values().size(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>(blended.values()[i]) -
                                             global.values()[i]));
        CHECK(worst <= 1e-4);
    }
    SUBCASE("an all-zeros filter at step <= tau gives the local path") {
        Tensor zeros = Tensor::real32({12, 4, 4});
        const VideoFeature blended =
            spectralblend_ta(z, w, 2, LowPassFilter(std::move(zeros)), 5, 25);
        const SequenceFeature seq = SequenceFeature::from_video(z);
        const QkvProjection qkv = project_qkv(seq, w);
        const VideoFeature local =
            local_attention(qkv.q, qkv.k, qkv.v, 2, 1).to_video(z.height(), z.width());
        double worst = 0.0;
        for (std::size_t i = 0; i < blended.values().size(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>(blended.values()[i]) -
                                             local.values()[i]));
        CHECK(worst <= 1e-4);
    }
    SUBCASE("alpha >= N-1 makes the blend a fixed point of the global path") {
        const VideoFeature blended = spectralblend_ta(z, w, 11, filter, 5, 25);
        const SequenceFeature seq = SequenceFeature::from_video(z);
        const QkvProjection qkv = project_qkv(seq, w);
        const VideoFeature global =
            global_attention(qkv.q, qkv.k, qkv.v, 1).to_video(z.height(), z.width());
        double worst = 0.0;
        for (std::size_t i = 0; i < blended.values().size(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>(blended.values()[i]) -
                                             global.values()[i]));
        CHECK(worst <= 1e-4);
    }
    SUBCASE("paper-default shape stays finite and preserves dims") {
        const VideoFeature big = testutil::random_video(4, 128, 4, 4, 63);
        const LowPassFilter f = gaussian_lpf(128, 4, 4, 0.25);
        const VideoFeature out = spectralblend_ta(big, w, 8, f, 1, 25);
        CHECK(out.tensor().dims() == big.tensor().dims());
        for (float x : out.values())
            CHECK(std::isfinite(x));
    }
    SUBCASE("dim and filter mismatches are rejected") {
        CHECK_THROWS_AS(
            spectralblend_ta(z, AttentionWeights::random(3, 1, RngSpec{1}), 2, filter, 1, 25),
            ValidationError);
        const LowPassFilter wrong = gaussian_lpf(6, 4, 4, 0.25);
        CHECK_THROWS_AS(spectralblend_ta(z, w, 2, wrong, 1, 25), ValidationError);
    }
}

TEST_CASE("sequence/video layout round trip is bit-exact") {
    const VideoFeature z = testutil::random_video(3, 5, 2, 4, 71);
    const SequenceFeature seq = SequenceFeature::from_video(z);
    CHECK(seq.seqs == 8);
    CHECK(seq.frames == 5);
    CHECK(seq.dim == 3);
    CHECK(seq.at(1 * 4 + 2, 3, 1) == z.at(1, 3, 1, 2));
    CHECK(seq.to_video(2, 4).tensor() == z.tensor());
    CHECK_THROWS_AS(seq.to_video(3, 3), ValidationError);
}

TEST_CASE("diagonality statistics") {
    SUBCASE("identity map: band mass one, entropy zero") {
        const std::size_t n = 8;
        std::vector<float> map(n * n, 0.0f);
        for (std::size_t i = 0; i < n; ++i)
            map[i * n + i] = 1.0f;
        const DiagonalityStats stats = attention_diagonality(map, n, 0);
        CHECK(stats.band_mass == doctest::Approx(1.0));
        CHECK(stats.row_entropy_mean == doctest::Approx(0.0));
    }
    SUBCASE("uniform map matches the enumerated band count") {
        const std::size_t n = 16, k = 2;
        std::vector<float> map(n * n, 1.0f / n);
        std::size_t banded = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if ((i > j ? i - j : j - i) <= k)
                    ++banded;
        const DiagonalityStats stats = attention_diagonality(map, n, k);
        CHECK(stats.band_mass ==
              doctest::Approx(static_cast<double>(banded) / (n * n)).epsilon(1e-9));
        CHECK(stats.row_entropy_mean == doctest::Approx(std::log(16.0)).epsilon(1e-6));
    }
    SUBCASE("local maps concentrate all mass in their band") {
        const SequenceFeature q = random_sequence(1, 10, 4, 81);
        const SequenceFeature k = random_sequence(1, 10, 4, 82);
        const SequenceFeature v = random_sequence(1, 10, 4, 83);
        AttentionMaps maps;
        local_attention(q, k, v, 3, 1, &maps);
        const DiagonalityStats at_alpha = attention_diagonality(maps.map(0, 0), 10, 3);
        const DiagonalityStats full = attention_diagonality(maps.map(0, 0), 10, 9);
        CHECK(at_alpha.band_mass == full.band_mass);
        CHECK(at_alpha.band_mass == doctest::Approx(1.0).epsilon(1e-5));
    }
}
