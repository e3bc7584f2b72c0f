#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "freelong/spectral.hpp"
#include "freelong/tensor.hpp"

namespace freelong {

// Band diagnostics of a stored video against a short reference video.
struct AnalysisRequest {
    std::filesystem::path video_path;
    std::filesystem::path baseline_path;
    double split = 0.25;
    std::vector<FreqDomain> domains = {FreqDomain::Spatial, FreqDomain::Temporal,
                                       FreqDomain::Spatiotemporal};
};

// One BandReport per requested domain, always assembled in the fixed order
// spatial, temporal, spatiotemporal. Each report carries the video's band
// fractions and the video/baseline ratios per band.
std::vector<BandReport> frequency_report(const VideoFeature& video, const VideoFeature& baseline,
                                         double split, const std::vector<FreqDomain>& domains);
std::vector<BandReport> frequency_report(const AnalysisRequest& req);

// Raw mean absolute difference between consecutive frames, over every
// channel and pixel. Needs at least two frames.
double temporal_flicker(const VideoFeature& video);

std::string band_reports_to_csv(const std::vector<BandReport>& reports);

} // namespace freelong
