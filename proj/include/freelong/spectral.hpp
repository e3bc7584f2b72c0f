#pragma once

#include <complex>
#include <optional>
#include <vector>

#include <json.hpp>

#include "freelong/tensor.hpp"

namespace freelong {

// Complex64 [C, N, h, w] image of a VideoFeature under the per-channel 3-D
// DFT over (frames, height, width). Unshifted layout: DC sits at index 0 of
// every transformed axis.
class Spectrum {
public:
    explicit Spectrum(Tensor t);

    std::size_t channels() const { return tensor_.dims()[0]; }
    std::size_t frames() const { return tensor_.dims()[1]; }
    std::size_t height() const { return tensor_.dims()[2]; }
    std::size_t width() const { return tensor_.dims()[3]; }

    std::span<std::complex<float>> bins() { return tensor_.c64(); }
    std::span<const std::complex<float>> bins() const { return tensor_.c64(); }
    const Tensor& tensor() const { return tensor_; }

private:
    Tensor tensor_;
};

// Gaussian low-pass weights over the (N, h, w) frequency grid, broadcast
// across channels when applied. Values live in [0, 1], the DC bin is
// exactly 1, and weights never increase with radial frequency distance.
class LowPassFilter {
public:
    // Validates shape (3-D real32) and the [0, 1] weight range. d0 is
    // metadata; filters loaded from disk have none.
    explicit LowPassFilter(Tensor t, std::optional<double> d0 = std::nullopt);

    std::size_t frames() const { return tensor_.dims()[0]; }
    std::size_t height() const { return tensor_.dims()[1]; }
    std::size_t width() const { return tensor_.dims()[2]; }
    std::optional<double> d0() const { return d0_; }

    std::span<const float> weights() const { return tensor_.r32(); }
    const Tensor& tensor() const { return tensor_; }

private:
    Tensor tensor_;
    std::optional<double> d0_;
};

enum class FreqDomain { Spatial, Temporal, Spatiotemporal };
enum class Band { Low, High };

const char* freq_domain_name(FreqDomain domain);
FreqDomain freq_domain_from_name(const std::string& name);

// Boolean mask over the frequency bins of one transform domain:
// temporal [N], spatial [h, w], spatiotemporal [N, h, w].
struct BandMask {
    FreqDomain domain;
    std::vector<std::size_t> dims;
    double split;
    Band band;
    std::vector<std::uint8_t> bits;

    std::size_t bin_count() const { return bits.size(); }
    std::size_t selected_count() const;
    Tensor to_tensor() const; // real32 0/1 image for VLT1 export
};

struct BandMaskPair {
    BandMask low;
    BandMask high;
};

// Low/high band-energy shares for one domain plus optional ratios against a
// reference video.
struct BandReport {
    FreqDomain domain;
    double split = 0.25;
    double low_fraction = 0.0;
    double high_fraction = 0.0;
    std::optional<double> ratio_low;
    std::optional<double> ratio_high;

    nlohmann::json to_json() const;
};

// Per-axis normalized frequency for bin k of an axis of length len: 2k/len
// for the non-negative half, 2(k-len)/len past it, so values span (-1, 1]
// with Nyquist at +1.
double normalized_frequency(std::size_t k, std::size_t len);

// Forward per-channel 3-D DFT over (N, h, w), unnormalized.
Spectrum fft3(const VideoFeature& z);

// Inverse transform with 1/(N*h*w) normalization. The result is real by
// contract: the imaginary residue is checked against
// 1e-3 * (max |real| + 1e-12) and then discarded.
VideoFeature ifft3(const Spectrum& s);

// Direct triple-sum DFT used as an independent reference. Refuses inputs
// with more than 4096 bins per channel.
Spectrum dft3_oracle(const VideoFeature& z);

// exp(-d^2 / (2 d0^2)) over the frequency grid with
// d^2 = f_t^2 + f_h^2 + f_w^2; DC value is exactly 1.
LowPassFilter gaussian_lpf(std::size_t frames, std::size_t height, std::size_t width, double d0);

// Complementary low/high masks at the given normalized split. The radial
// coordinate is the root mean square of the domain's per-axis normalized
// frequencies, so it spans [0, 1] in every domain.
BandMaskPair band_masks(FreqDomain domain, const std::vector<std::size_t>& dims, double split);

// ifft3(fft3(z_global) .* P + fft3(z_local) .* (1 - P)), P broadcast over
// channels: low frequencies follow the global features, high frequencies
// the local ones.
VideoFeature spectral_blend(const VideoFeature& z_global, const VideoFeature& z_local,
                            const LowPassFilter& filter);

// Share of squared spectral magnitude inside the mask, averaged over the
// non-transformed axes. Throws NumericalError when a transformed slice has
// zero total energy.
double band_energy_fraction(const VideoFeature& z, const BandMask& mask);

struct BandRatios {
    double low = 0.0;
    double high = 0.0;
};

// Per-band fraction of the long video divided by the short reference's.
BandRatios relative_band_ratio(const VideoFeature& long_video, const VideoFeature& short_video,
                               FreqDomain domain, double split);

} // namespace freelong
