#include "freelong/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "freelong/parallel.hpp"

namespace freelong {

AttentionWeights AttentionWeights::random(std::size_t dim, std::size_t heads, RngSpec rng) {
    AttentionWeights w;
    w.dim = dim;
    w.heads = heads;
    if (dim == 0 || heads == 0 || dim % heads != 0)
        throw ValidationError("head count must divide the feature dim (dim " +
                              std::to_string(dim) + ", heads " + std::to_string(heads) + ")");
    RandomStream stream(rng);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    const auto fill = [&](std::vector<float>& m) {
        m.resize(dim * dim);
        for (float& v : m)
            v = static_cast<float>(stream.next_gaussian() * scale);
    };
    fill(w.wq);
    fill(w.wk);
    fill(w.wv);
    return w;
}

void AttentionWeights::validate() const {
    if (dim == 0)
        throw ValidationError("attention dim must be >= 1");
    if (heads == 0 || dim % heads != 0)
        throw ValidationError("head count must divide the feature dim (dim " +
                              std::to_string(dim) + ", heads " + std::to_string(heads) + ")");
    for (const std::vector<float>* m : {&wq, &wk, &wv}) {
        if (m->size() != dim * dim)
            throw ValidationError("projection matrices must be dim x dim");
        for (float v : *m)
            if (!std::isfinite(v))
                throw ValidationError("projection weights contain non-finite values");
    }
}

SequenceFeature SequenceFeature::from_video(const VideoFeature& z) {
    const std::size_t d = z.channels(), n = z.frames(), h = z.height(), w = z.width();
    SequenceFeature seq(h * w, n, d);
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    seq.at(y * w + x, t, c) = z.at(c, t, y, x);
    return seq;
}

VideoFeature SequenceFeature::to_video(std::size_t height, std::size_t width) const {
    if (height * width != seqs)
        throw ValidationError("sequence count " + std::to_string(seqs) +
                              " does not factor as " + std::to_string(height) + "x" +
                              std::to_string(width));
    VideoFeature z(dim, frames, height, width);
    for (std::size_t c = 0; c < dim; ++c)
        for (std::size_t t = 0; t < frames; ++t)
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x)
                    z.at(c, t, y, x) = at(y * width + x, t, c);
    return z;
}

SequenceFeature SequenceFeature::slice_frames(std::size_t first, std::size_t count) const {
    if (first + count > frames)
        throw ValidationError("frame slice out of range");
    SequenceFeature out(seqs, count, dim);
    for (std::size_t s = 0; s < seqs; ++s)
        std::copy_n(data.data() + (s * frames + first) * dim, count * dim,
                    out.data.data() + s * count * dim);
    return out;
}

QkvProjection project_qkv(const SequenceFeature& z, const AttentionWeights& w) {
    w.validate();
    if (z.dim != w.dim)
        throw ValidationError("feature dim " + std::to_string(z.dim) +
                              " does not match weight dim " + std::to_string(w.dim));
    const std::size_t d = w.dim;
    QkvProjection out{SequenceFeature(z.seqs, z.frames, d), SequenceFeature(z.seqs, z.frames, d),
                      SequenceFeature(z.seqs, z.frames, d)};
    const std::size_t rows = z.seqs * z.frames;
    parallel_for(rows, [&](std::size_t r) {
        const float* in = z.data.data() + r * d;
        const auto apply = [&](const std::vector<float>& m, std::vector<float>& dst) {
            float* o = dst.data() + r * d;
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < d; ++c)
                    acc += static_cast<double>(in[c]) * m[c * d + j];
                o[j] = static_cast<float>(acc);
            }
        };
        apply(w.wq, out.q.data);
        apply(w.wk, out.k.data);
        apply(w.wv, out.v.data);
    });
    return out;
}

Tensor AttentionMaps::to_tensor() const {
    Tensor t = Tensor::real32({seqs, heads, frames, frames});
    std::copy(data.begin(), data.end(), t.r32().begin());
    return t;
}

namespace {

void check_shapes(const SequenceFeature& q, const SequenceFeature& k, const SequenceFeature& v,
                  std::size_t heads) {
    if (q.seqs != k.seqs || q.seqs != v.seqs || q.frames != k.frames || q.frames != v.frames ||
        q.dim != k.dim || q.dim != v.dim)
        throw ValidationError("q/k/v shapes disagree");
    if (q.dim == 0 || heads == 0 || q.dim % heads != 0)
        throw ValidationError("head count must divide the feature dim");
}

// Shared kernel: per (sequence, head) a row softmax over the window
// [i - alpha, i + alpha] followed by the value reduction. Global attention
// is the alpha >= N - 1 case, so the two paths agree bit for bit there.
SequenceFeature banded_attention(const SequenceFeature& q, const SequenceFeature& k,
                                 const SequenceFeature& v, std::size_t alpha, std::size_t heads,
                                 AttentionMaps* maps) {
    check_shapes(q, k, v, heads);
    const std::size_t n = q.frames, d = q.dim, d_head = d / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d_head));

    SequenceFeature out(q.seqs, n, d);
    if (maps) {
        maps->seqs = q.seqs;
        maps->heads = heads;
        maps->frames = n;
        maps->data.assign(q.seqs * heads * n * n, 0.0f);
    }

    parallel_for(q.seqs, [&](std::size_t s) {
        std::vector<double> logits(n);
        std::vector<double> weights(n);
        for (std::size_t head = 0; head < heads; ++head) {
            const std::size_t off = head * d_head;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t jlo = i > alpha ? i - alpha : 0;
                const std::size_t jhi = std::min(n - 1, i + alpha);
                const float* qi = q.data.data() + (s * n + i) * d + off;

                double max_logit = -std::numeric_limits<double>::infinity();
                for (std::size_t j = jlo; j <= jhi; ++j) {
                    const float* kj = k.data.data() + (s * n + j) * d + off;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < d_head; ++c)
                        dot += static_cast<double>(qi[c]) * kj[c];
                    logits[j] = dot * inv_scale;
                    max_logit = std::max(max_logit, logits[j]);
                }
                double denom = 0.0;
                for (std::size_t j = jlo; j <= jhi; ++j) {
                    weights[j] = std::exp(logits[j] - max_logit);
                    denom += weights[j];
                }

                float* oi = out.data.data() + (s * n + i) * d + off;
                std::vector<double> acc(d_head, 0.0);
                for (std::size_t j = jlo; j <= jhi; ++j) {
                    const double a = weights[j] / denom;
                    if (maps)
                        maps->data[((s * heads + head) * n + i) * n + j] = static_cast<float>(a);
                    const float* vj = v.data.data() + (s * n + j) * d + off;
                    for (std::size_t c = 0; c < d_head; ++c)
                        acc[c] += a * vj[c];
                }
                for (std::size_t c = 0; c < d_head; ++c)
                    oi[c] = static_cast<float>(acc[c]);
            }
        }
    });
    return out;
}

// Study variant: full softmax first, out-of-window entries zeroed after.
// Rows no longer sum to 1; kept out of every production path.
SequenceFeature post_softmax_zero_attention(const SequenceFeature& q, const SequenceFeature& k,
                                            const SequenceFeature& v, std::size_t alpha,
                                            std::size_t heads, AttentionMaps* maps) {
    AttentionMaps full;
    global_attention(q, k, v, heads, &full);
    const std::size_t n = q.frames, d = q.dim, d_head = d / heads;
    for (std::size_t s = 0; s < q.seqs; ++s)
        for (std::size_t head = 0; head < heads; ++head)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (j + alpha < i || j > i + alpha)
                        full.data[((s * heads + head) * n + i) * n + j] = 0.0f;

    SequenceFeature out(q.seqs, n, d);
    for (std::size_t s = 0; s < q.seqs; ++s)
        for (std::size_t head = 0; head < heads; ++head) {
            const std::size_t off = head * d_head;
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> acc(d_head, 0.0);
                for (std::size_t j = 0; j < n; ++j) {
                    const double a = full.data[((s * heads + head) * n + i) * n + j];
                    if (a == 0.0)
                        continue;
                    const float* vj = v.data.data() + (s * n + j) * d + off;
                    for (std::size_t c = 0; c < d_head; ++c)
                        acc[c] += a * vj[c];
                }
                float* oi = out.data.data() + (s * n + i) * d + off;
                for (std::size_t c = 0; c < d_head; ++c)
                    oi[c] = static_cast<float>(acc[c]);
            }
        }
    if (maps)
        *maps = std::move(full);
    return out;
}

} // namespace

SequenceFeature global_attention(const SequenceFeature& q, const SequenceFeature& k,
                                 const SequenceFeature& v, std::size_t heads,
                                 AttentionMaps* maps) {
    return banded_attention(q, k, v, q.frames == 0 ? 0 : q.frames - 1, heads, maps);
}

SequenceFeature local_attention(const SequenceFeature& q, const SequenceFeature& k,
                                const SequenceFeature& v, std::size_t alpha, std::size_t heads,
                                AttentionMaps* maps, LocalMaskMode mode) {
    if (mode == LocalMaskMode::PostSoftmaxZero)
        return post_softmax_zero_attention(q, k, v, alpha, heads, maps);
    return banded_attention(q, k, v, alpha, heads, maps);
}

std::vector<std::size_t> sliding_window_offsets(std::size_t frames, std::size_t window,
                                                std::size_t stride) {
    if (window == 0 || window > frames)
        throw ValidationError("window must lie in [1, frames]; got window " +
                              std::to_string(window) + " for " + std::to_string(frames) +
                              " frames");
    if (stride == 0)
        throw ValidationError("stride must be >= 1");
    if (stride > window)
        throw ValidationError("stride " + std::to_string(stride) + " exceeds window " +
                              std::to_string(window) + "; frames between windows would never "
                              "be attended");
    std::vector<std::size_t> offsets;
    for (std::size_t o = 0; o + window <= frames; o += stride)
        offsets.push_back(o);
    if (offsets.back() + window < frames)
        offsets.push_back(frames - window);
    return offsets;
}

SequenceFeature sliding_window_attention(const SequenceFeature& q, const SequenceFeature& k,
                                         const SequenceFeature& v, std::size_t window,
                                         std::size_t stride, std::size_t heads) {
    check_shapes(q, k, v, heads);
    const std::vector<std::size_t> offsets = sliding_window_offsets(q.frames, window, stride);
    const std::size_t n = q.frames, d = q.dim;

    std::vector<double> acc(q.seqs * n * d, 0.0);
    std::vector<std::size_t> cover(n, 0);
    for (const std::size_t o : offsets) {
        const SequenceFeature wq = q.slice_frames(o, window);
        const SequenceFeature wk = k.slice_frames(o, window);
        const SequenceFeature wv = v.slice_frames(o, window);
        const SequenceFeature wout = global_attention(wq, wk, wv, heads);
        for (std::size_t s = 0; s < q.seqs; ++s)
            for (std::size_t i = 0; i < window; ++i)
                for (std::size_t c = 0; c < d; ++c)
                    acc[(s * n + o + i) * d + c] += wout.at(s, i, c);
        for (std::size_t i = 0; i < window; ++i)
            ++cover[o + i];
    }

    SequenceFeature out(q.seqs, n, d);
    for (std::size_t s = 0; s < q.seqs; ++s)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < d; ++c)
                out.at(s, i, c) =
                    static_cast<float>(acc[(s * n + i) * d + c] / static_cast<double>(cover[i]));
    return out;
}

VideoFeature spectralblend_ta(const VideoFeature& z_in, const AttentionWeights& w,
                              std::size_t alpha, const LowPassFilter& filter, std::size_t step,
                              std::size_t tau) {
    if (z_in.channels() != w.dim)
        throw ValidationError("layer weights expect dim " + std::to_string(w.dim) +
                              ", feature has " + std::to_string(z_in.channels()) + " channels");
    if (filter.frames() != z_in.frames() || filter.height() != z_in.height() ||
        filter.width() != z_in.width())
        throw ValidationError("filter shape " + filter.tensor().shape_string() +
                              " does not match the feature grid");

    const SequenceFeature seq = SequenceFeature::from_video(z_in);
    const QkvProjection qkv = project_qkv(seq, w);
    const SequenceFeature local = local_attention(qkv.q, qkv.k, qkv.v, alpha, w.heads);
    if (step > tau)
        return local.to_video(z_in.height(), z_in.width());

    const SequenceFeature global = global_attention(qkv.q, qkv.k, qkv.v, w.heads);
    return spectral_blend(global.to_video(z_in.height(), z_in.width()),
                          local.to_video(z_in.height(), z_in.width()), filter);
}

DiagonalityStats attention_diagonality(std::span<const float> map, std::size_t frames,
                                       std::size_t band) {
    if (map.size() != frames * frames)
        throw ValidationError("attention map size does not match the frame count");
    DiagonalityStats stats;
    double banded = 0.0;
    double entropy = 0.0;
    for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t j = 0; j < frames; ++j) {
            const double a = map[i * frames + j];
            const std::size_t dist = i > j ? i - j : j - i;
            if (dist <= band)
                banded += a;
            if (a > 0.0)
                entropy -= a * std::log(a);
        }
    }
    stats.band_mass = banded / static_cast<double>(frames);
    stats.row_entropy_mean = entropy / static_cast<double>(frames);
    return stats;
}

} // namespace freelong
