#include "freelong/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "freelong/parallel.hpp"

namespace freelong {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Forward half-length twiddles exp(-2*pi*i*k/n), cached per transform size.
const std::vector<cd>& twiddles(std::size_t n) {
    thread_local std::unordered_map<std::size_t, std::vector<cd>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        std::vector<cd> table(n / 2);
        for (std::size_t k = 0; k < n / 2; ++k)
            table[k] = std::polar(1.0, -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n));
        it = cache.emplace(n, std::move(table)).first;
    }
    return it->second;
}

// Iterative radix-2 Cooley-Tukey; inverse leaves the 1/n scaling to callers.
void fft_pow2(cd* a, std::size_t n, bool inverse) {
    if (n < 2)
        return;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1)
            j ^= bit;
        j ^= bit;
        if (i < j)
            std::swap(a[i], a[j]);
    }
    const std::vector<cd>& table = twiddles(n);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n / len;
        for (std::size_t base = 0; base < n; base += len) {
            for (std::size_t k = 0; k < half; ++k) {
                cd w = table[k * step];
                if (inverse)
                    w = std::conj(w);
                const cd v = a[base + k + half] * w;
                const cd u = a[base + k];
                a[base + k] = u + v;
                a[base + k + half] = u - v;
            }
        }
    }
}

// Bluestein chirp-z for arbitrary lengths via a power-of-two convolution.
void fft_bluestein(cd* a, std::size_t n, bool inverse) {
    std::size_t m = 1;
    while (m < 2 * n - 1)
        m <<= 1;
    std::vector<cd> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t k2 = (k * k) % (2 * n);
        const double angle = kPi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = std::polar(1.0, inverse ? angle : -angle);
    }
    std::vector<cd> fa(m), fb(m);
    for (std::size_t j = 0; j < n; ++j)
        fa[j] = a[j] * chirp[j];
    fb[0] = std::conj(chirp[0]);
    for (std::size_t j = 1; j < n; ++j)
        fb[j] = fb[m - j] = std::conj(chirp[j]);
    fft_pow2(fa.data(), m, false);
    fft_pow2(fb.data(), m, false);
    for (std::size_t i = 0; i < m; ++i)
        fa[i] *= fb[i];
    fft_pow2(fa.data(), m, true);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k)
        a[k] = fa[k] * inv_m * chirp[k];
}

void fft_1d(cd* a, std::size_t n, bool inverse) {
    if (is_pow2(n))
        fft_pow2(a, n, inverse);
    else
        fft_bluestein(a, n, inverse);
}

// Transform one axis of a row-major buffer split as outer x len x inner.
void transform_axis(cd* buf, std::size_t outer, std::size_t len, std::size_t inner, bool inverse) {
    if (len == 1)
        return;
    if (inner == 1) {
        for (std::size_t o = 0; o < outer; ++o)
            fft_1d(buf + o * len, len, inverse);
        return;
    }
    std::vector<cd> scratch(len);
    for (std::size_t o = 0; o < outer; ++o) {
        cd* slab = buf + o * len * inner;
        for (std::size_t i = 0; i < inner; ++i) {
            for (std::size_t k = 0; k < len; ++k)
                scratch[k] = slab[k * inner + i];
            fft_1d(scratch.data(), len, inverse);
            for (std::size_t k = 0; k < len; ++k)
                slab[k * inner + i] = scratch[k];
        }
    }
}

// Unnormalized 3-D transform over [n][h][w]; inverse scaling is the
// caller's job so forward/inverse stay exact mirrors.
void transform3(cd* buf, std::size_t n, std::size_t h, std::size_t w, bool inverse) {
    transform_axis(buf, n * h, w, 1, inverse);
    transform_axis(buf, n, h, w, inverse);
    transform_axis(buf, 1, n, h * w, inverse);
}

struct RealResult {
    double max_abs_real = 0.0;
    double max_abs_imag = 0.0;
};

RealResult store_real(const cd* buf, std::span<float> out) {
    RealResult r;
    for (std::size_t i = 0; i < out.size(); ++i) {
        r.max_abs_real = std::max(r.max_abs_real, std::abs(buf[i].real()));
        r.max_abs_imag = std::max(r.max_abs_imag, std::abs(buf[i].imag()));
        out[i] = static_cast<float>(buf[i].real());
    }
    return r;
}

void check_imaginary_residue(double max_abs_imag, double max_abs_real) {
    if (max_abs_imag > 1e-3 * (max_abs_real + 1e-12))
        throw NumericalError("inverse transform produced a non-negligible imaginary part "
                             "(max |imag| " +
                             std::to_string(max_abs_imag) + " vs max |real| " +
                             std::to_string(max_abs_real) + "); spectrum was not conjugate-symmetric");
}

double axis_frequency_sq(std::size_t k, std::size_t len) {
    const double f = normalized_frequency(k, len);
    return f * f;
}

} // namespace

double normalized_frequency(std::size_t k, std::size_t len) {
    if (2 * k <= len)
        return 2.0 * static_cast<double>(k) / static_cast<double>(len);
    return 2.0 * (static_cast<double>(k) - static_cast<double>(len)) / static_cast<double>(len);
}

Spectrum::Spectrum(Tensor t) : tensor_(std::move(t)) {
    if (tensor_.dtype() != DType::Complex64)
        throw ValidationError(std::string("spectrum must be complex64, got ") +
                              dtype_name(tensor_.dtype()));
    if (tensor_.rank() != 4)
        throw ValidationError("spectrum must be 4-D [C,N,h,w], got " + tensor_.shape_string());
}

LowPassFilter::LowPassFilter(Tensor t, std::optional<double> d0) : tensor_(std::move(t)), d0_(d0) {
    if (tensor_.dtype() != DType::Real32)
        throw ValidationError(std::string("filter must be real32, got ") +
                              dtype_name(tensor_.dtype()));
    if (tensor_.rank() != 3)
        throw ValidationError("filter must be 3-D [N,h,w], got " + tensor_.shape_string());
    for (float v : tensor_.r32())
        if (!(v >= 0.0f && v <= 1.0f))
            throw ValidationError("filter weights must lie in [0, 1]");
}

const char* freq_domain_name(FreqDomain domain) {
    switch (domain) {
    case FreqDomain::Spatial: return "spatial";
    case FreqDomain::Temporal: return "temporal";
    case FreqDomain::Spatiotemporal: return "spatiotemporal";
    }
    return "invalid";
}

FreqDomain freq_domain_from_name(const std::string& name) {
    if (name == "spatial")
        return FreqDomain::Spatial;
    if (name == "temporal")
        return FreqDomain::Temporal;
    if (name == "spatiotemporal")
        return FreqDomain::Spatiotemporal;
    throw ValidationError("unknown frequency domain \"" + name +
                          "\" (expected spatial, temporal, or spatiotemporal)");
}

std::size_t BandMask::selected_count() const {
    std::size_t count = 0;
    for (std::uint8_t b : bits)
        count += b ? 1 : 0;
    return count;
}

Tensor BandMask::to_tensor() const {
    Tensor t = Tensor::real32(dims);
    auto out = t.r32();
    for (std::size_t i = 0; i < bits.size(); ++i)
        out[i] = bits[i] ? 1.0f : 0.0f;
    return t;
}

nlohmann::json BandReport::to_json() const {
    nlohmann::json j{
        {"domain", freq_domain_name(domain)},
        {"split", split},
        {"low_fraction", low_fraction},
        {"high_fraction", high_fraction},
        {"ratio_low", nullptr},
        {"ratio_high", nullptr},
    };
    if (ratio_low)
        j["ratio_low"] = *ratio_low;
    if (ratio_high)
        j["ratio_high"] = *ratio_high;
    return j;
}

Spectrum fft3(const VideoFeature& z) {
    const std::size_t n = z.frames(), h = z.height(), w = z.width();
    const std::size_t per_channel = n * h * w;
    Tensor out = Tensor::complex64({z.channels(), n, h, w});
    auto bins = out.c64();
    auto values = z.values();
    parallel_for(z.channels(), [&](std::size_t c) {
        std::vector<cd> buf(per_channel);
        const float* src = values.data() + c * per_channel;
        for (std::size_t i = 0; i < per_channel; ++i)
            buf[i] = cd(src[i], 0.0);
        transform3(buf.data(), n, h, w, false);
        std::complex<float>* dst = bins.data() + c * per_channel;
        for (std::size_t i = 0; i < per_channel; ++i)
            dst[i] = {static_cast<float>(buf[i].real()), static_cast<float>(buf[i].imag())};
    });
    return Spectrum(std::move(out));
}

VideoFeature ifft3(const Spectrum& s) {
    const std::size_t n = s.frames(), h = s.height(), w = s.width();
    const std::size_t per_channel = n * h * w;
    const double scale = 1.0 / static_cast<double>(per_channel);
    VideoFeature out(s.channels(), n, h, w);
    auto values = out.values();
    auto bins = s.bins();
    std::vector<RealResult> results(s.channels());
    parallel_for(s.channels(), [&](std::size_t c) {
        std::vector<cd> buf(per_channel);
        const std::complex<float>* src = bins.data() + c * per_channel;
        for (std::size_t i = 0; i < per_channel; ++i)
            buf[i] = cd(src[i].real(), src[i].imag());
        transform3(buf.data(), n, h, w, true);
        for (cd& v : buf)
            v *= scale;
        results[c] = store_real(buf.data(), values.subspan(c * per_channel, per_channel));
    });
    RealResult total;
    for (const RealResult& r : results) {
        total.max_abs_real = std::max(total.max_abs_real, r.max_abs_real);
        total.max_abs_imag = std::max(total.max_abs_imag, r.max_abs_imag);
    }
    check_imaginary_residue(total.max_abs_imag, total.max_abs_real);
    return out;
}

Spectrum dft3_oracle(const VideoFeature& z) {
    const std::size_t n = z.frames(), h = z.height(), w = z.width();
    const std::size_t per_channel = n * h * w;
    if (per_channel > 4096)
        throw ValidationError("dft3_oracle refuses inputs with more than 4096 bins per channel, got " +
                              std::to_string(per_channel));

    const auto axis_table = [](std::size_t len) {
        std::vector<cd> table(len * len);
        for (std::size_t k = 0; k < len; ++k)
            for (std::size_t t = 0; t < len; ++t)
                table[k * len + t] =
                    std::polar(1.0, -2.0 * kPi * static_cast<double>((k * t) % len) /
                                        static_cast<double>(len));
        return table;
    };
    const std::vector<cd> en = axis_table(n), eh = axis_table(h), ew = axis_table(w);

    Tensor out = Tensor::complex64({z.channels(), n, h, w});
    auto bins = out.c64();
    auto values = z.values();
    for (std::size_t c = 0; c < z.channels(); ++c) {
        const float* src = values.data() + c * per_channel;
        std::complex<float>* dst = bins.data() + c * per_channel;
        for (std::size_t kt = 0; kt < n; ++kt)
            for (std::size_t ky = 0; ky < h; ++ky)
                for (std::size_t kx = 0; kx < w; ++kx) {
                    cd sum = 0.0;
                    for (std::size_t t = 0; t < n; ++t)
                        for (std::size_t y = 0; y < h; ++y)
                            for (std::size_t x = 0; x < w; ++x)
                                sum += static_cast<double>(src[(t * h + y) * w + x]) *
                                       en[kt * n + t] * eh[ky * h + y] * ew[kx * w + x];
                    dst[(kt * h + ky) * w + kx] = {static_cast<float>(sum.real()),
                                                   static_cast<float>(sum.imag())};
                }
    }
    return Spectrum(std::move(out));
}

LowPassFilter gaussian_lpf(std::size_t frames, std::size_t height, std::size_t width, double d0) {
    if (frames < 1 || height < 1 || width < 1)
        throw ValidationError("filter dims must all be >= 1");
    if (!(d0 > 0.0))
        throw ValidationError("stop frequency d0 must be > 0");
    Tensor t = Tensor::real32({frames, height, width});
    auto out = t.r32();
    const double denom = 2.0 * d0 * d0;
    std::size_t i = 0;
    for (std::size_t kt = 0; kt < frames; ++kt) {
        const double ft2 = axis_frequency_sq(kt, frames);
        for (std::size_t ky = 0; ky < height; ++ky) {
            const double fh2 = axis_frequency_sq(ky, height);
            for (std::size_t kx = 0; kx < width; ++kx, ++i) {
                const double d2 = ft2 + fh2 + axis_frequency_sq(kx, width);
                out[i] = static_cast<float>(std::exp(-d2 / denom));
            }
        }
    }
    return LowPassFilter(std::move(t), d0);
}

BandMaskPair band_masks(FreqDomain domain, const std::vector<std::size_t>& dims, double split) {
    if (!(split > 0.0 && split < 1.0))
        throw ValidationError("band split must lie in (0, 1)");
    const std::size_t expected_rank = domain == FreqDomain::Temporal ? 1
                                      : domain == FreqDomain::Spatial ? 2
                                                                      : 3;
    if (dims.size() != expected_rank)
        throw ValidationError(std::string("band mask for the ") + freq_domain_name(domain) +
                              " domain needs " + std::to_string(expected_rank) + " dims, got " +
                              std::to_string(dims.size()));
    std::size_t bin_count = 1;
    for (std::size_t d : dims) {
        if (d == 0)
            throw ValidationError("band mask dims must all be >= 1");
        bin_count *= d;
    }

    BandMask low{domain, dims, split, Band::Low, std::vector<std::uint8_t>(bin_count, 0)};
    BandMask high{domain, dims, split, Band::High, std::vector<std::uint8_t>(bin_count, 0)};
    const double axes = static_cast<double>(dims.size());
    std::vector<std::size_t> idx(dims.size(), 0);
    for (std::size_t i = 0; i < bin_count; ++i) {
        double sum_sq = 0.0;
        for (std::size_t a = 0; a < dims.size(); ++a)
            sum_sq += axis_frequency_sq(idx[a], dims[a]);
        const double radial = std::sqrt(sum_sq / axes);
        if (radial <= split)
            low.bits[i] = 1;
        else
            high.bits[i] = 1;
        for (std::size_t a = dims.size(); a-- > 0;) {
            if (++idx[a] < dims[a])
                break;
            idx[a] = 0;
        }
    }
    return {std::move(low), std::move(high)};
}

VideoFeature spectral_blend(const VideoFeature& z_global, const VideoFeature& z_local,
                            const LowPassFilter& filter) {
    if (z_global.tensor().dims() != z_local.tensor().dims())
        throw ValidationError("blend inputs differ in shape: global " +
                              z_global.tensor().shape_string() + " vs local " +
                              z_local.tensor().shape_string());
    const std::size_t n = z_global.frames(), h = z_global.height(), w = z_global.width();
    if (filter.frames() != n || filter.height() != h || filter.width() != w)
        throw ValidationError("filter shape " + filter.tensor().shape_string() +
                              " does not match feature grid [" + std::to_string(n) + "," +
                              std::to_string(h) + "," + std::to_string(w) + "]");

    const std::size_t per_channel = n * h * w;
    const double scale = 1.0 / static_cast<double>(per_channel);
    VideoFeature out(z_global.channels(), n, h, w);
    auto out_values = out.values();
    auto g_values = z_global.values();
    auto l_values = z_local.values();
    auto weights = filter.weights();
    std::vector<RealResult> results(z_global.channels());
    parallel_for(z_global.channels(), [&](std::size_t c) {
        std::vector<cd> gbuf(per_channel), lbuf(per_channel);
        const float* g = g_values.data() + c * per_channel;
        const float* l = l_values.data() + c * per_channel;
        for (std::size_t i = 0; i < per_channel; ++i) {
            gbuf[i] = cd(g[i], 0.0);
            lbuf[i] = cd(l[i], 0.0);
        }
        transform3(gbuf.data(), n, h, w, false);
        transform3(lbuf.data(), n, h, w, false);
        for (std::size_t i = 0; i < per_channel; ++i) {
            const double p = weights[i];
            gbuf[i] = p * gbuf[i] + (1.0 - p) * lbuf[i];
        }
        transform3(gbuf.data(), n, h, w, true);
        for (cd& v : gbuf)
            v *= scale;
        results[c] = store_real(gbuf.data(), out_values.subspan(c * per_channel, per_channel));
    });
    RealResult total;
    for (const RealResult& r : results) {
        total.max_abs_real = std::max(total.max_abs_real, r.max_abs_real);
        total.max_abs_imag = std::max(total.max_abs_imag, r.max_abs_imag);
    }
    check_imaginary_residue(total.max_abs_imag, total.max_abs_real);
    return out;
}

namespace {

// Masked/total energy share of one transformed slice.
double slice_fraction(const cd* spectrum, const BandMask& mask) {
    double total = 0.0;
    double selected = 0.0;
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        const double e = std::norm(spectrum[i]);
        total += e;
        if (mask.bits[i])
            selected += e;
    }
    if (total == 0.0)
        throw NumericalError("band energy fraction undefined: slice has zero spectral energy");
    return selected / total;
}

} // namespace

double band_energy_fraction(const VideoFeature& z, const BandMask& mask) {
    const std::size_t n = z.frames(), h = z.height(), w = z.width(), chans = z.channels();
    auto values = z.values();

    std::vector<double> fractions;
    switch (mask.domain) {
    case FreqDomain::Temporal: {
        if (mask.dims != std::vector<std::size_t>{n})
            throw ValidationError("temporal mask dims do not match the video's frame count");
        const std::size_t plane = h * w;
        fractions.resize(chans * plane);
        parallel_for(chans * plane, [&](std::size_t s) {
            const std::size_t c = s / plane, p = s % plane;
            std::vector<cd> buf(n);
            for (std::size_t t = 0; t < n; ++t)
                buf[t] = cd(values[(c * n + t) * plane + p], 0.0);
            fft_1d(buf.data(), n, false);
            fractions[s] = slice_fraction(buf.data(), mask);
        });
        break;
    }
    case FreqDomain::Spatial: {
        if (mask.dims != std::vector<std::size_t>{h, w})
            throw ValidationError("spatial mask dims do not match the video's frame size");
        fractions.resize(chans * n);
        parallel_for(chans * n, [&](std::size_t s) {
            std::vector<cd> buf(h * w);
            const float* frame = values.data() + s * h * w;
            for (std::size_t i = 0; i < h * w; ++i)
                buf[i] = cd(frame[i], 0.0);
            transform_axis(buf.data(), h, w, 1, false);
            transform_axis(buf.data(), 1, h, w, false);
            fractions[s] = slice_fraction(buf.data(), mask);
        });
        break;
    }
    case FreqDomain::Spatiotemporal: {
        if (mask.dims != std::vector<std::size_t>{n, h, w})
            throw ValidationError("spatiotemporal mask dims do not match the video's grid");
        fractions.resize(chans);
        parallel_for(chans, [&](std::size_t c) {
            std::vector<cd> buf(n * h * w);
            const float* src = values.data() + c * n * h * w;
            for (std::size_t i = 0; i < n * h * w; ++i)
                buf[i] = cd(src[i], 0.0);
            transform3(buf.data(), n, h, w, false);
            fractions[c] = slice_fraction(buf.data(), mask);
        });
        break;
    }
    }

    double sum = 0.0;
    for (double f : fractions)
        sum += f;
    return sum / static_cast<double>(fractions.size());
}

BandRatios relative_band_ratio(const VideoFeature& long_video, const VideoFeature& short_video,
                               FreqDomain domain, double split) {
    if (long_video.channels() != short_video.channels())
        throw ValidationError("band ratio inputs must share a channel count");

    const auto dims_for = [&](const VideoFeature& v) -> std::vector<std::size_t> {
        switch (domain) {
        case FreqDomain::Temporal: return {v.frames()};
        case FreqDomain::Spatial: return {v.height(), v.width()};
        default: return {v.frames(), v.height(), v.width()};
        }
    };
    const BandMaskPair long_masks = band_masks(domain, dims_for(long_video), split);
    const BandMaskPair short_masks = band_masks(domain, dims_for(short_video), split);

    const double long_low = band_energy_fraction(long_video, long_masks.low);
    const double long_high = band_energy_fraction(long_video, long_masks.high);
    const double short_low = band_energy_fraction(short_video, short_masks.low);
    const double short_high = band_energy_fraction(short_video, short_masks.high);
    if (short_low == 0.0 || short_high == 0.0)
        throw NumericalError(std::string("band ratio undefined in the ") +
                             freq_domain_name(domain) + " domain: reference fraction is zero");
    return {long_low / short_low, long_high / short_high};
}

} // namespace freelong
