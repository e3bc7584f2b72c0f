#include "freelong/analysis.hpp"

#include <cmath>
#include <sstream>

#include "freelong/io.hpp"

namespace freelong {

std::vector<BandReport> frequency_report(const VideoFeature& video, const VideoFeature& baseline,
                                         double split, const std::vector<FreqDomain>& domains) {
    if (baseline.frames() > video.frames())
        throw ValidationError("baseline has more frames (" + std::to_string(baseline.frames()) +
                              ") than the video (" + std::to_string(video.frames()) + ")");
    if (domains.empty())
        throw ValidationError("at least one analysis domain is required");

    const auto requested = [&](FreqDomain d) {
        for (FreqDomain have : domains)
            if (have == d)
                return true;
        return false;
    };

    std::vector<BandReport> reports;
    for (FreqDomain domain :
         {FreqDomain::Spatial, FreqDomain::Temporal, FreqDomain::Spatiotemporal}) {
        if (!requested(domain))
            continue;
        try {
            const auto dims_for = [&](const VideoFeature& v) -> std::vector<std::size_t> {
                switch (domain) {
                case FreqDomain::Temporal: return {v.frames()};
                case FreqDomain::Spatial: return {v.height(), v.width()};
                default: return {v.frames(), v.height(), v.width()};
                }
            };
            const BandMaskPair masks = band_masks(domain, dims_for(video), split);
            BandReport report;
            report.domain = domain;
            report.split = split;
            report.low_fraction = band_energy_fraction(video, masks.low);
            report.high_fraction = band_energy_fraction(video, masks.high);
            const BandRatios ratios = relative_band_ratio(video, baseline, domain, split);
            report.ratio_low = ratios.low;
            report.ratio_high = ratios.high;
            reports.push_back(report);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string("analysis failed in the ") +
                                 freq_domain_name(domain) + " domain: " + e.what());
        }
    }
    return reports;
}

std::vector<BandReport> frequency_report(const AnalysisRequest& req) {
    const VideoFeature video = VideoFeature::from_tensor(read_tensor(req.video_path));
    const VideoFeature baseline = VideoFeature::from_tensor(read_tensor(req.baseline_path));
    return frequency_report(video, baseline, req.split, req.domains);
}

double temporal_flicker(const VideoFeature& video) {
    const std::size_t n = video.frames();
    if (n < 2)
        throw ValidationError("temporal flicker needs at least 2 frames");
    const std::size_t chans = video.channels(), plane = video.height() * video.width();
    auto values = video.values();
    double sum = 0.0;
    for (std::size_t c = 0; c < chans; ++c)
        for (std::size_t t = 0; t + 1 < n; ++t) {
            const float* cur = values.data() + (c * n + t) * plane;
            const float* nxt = cur + plane;
            for (std::size_t p = 0; p < plane; ++p)
                sum += std::abs(static_cast<double>(nxt[p]) - static_cast<double>(cur[p]));
        }
    return sum / static_cast<double>(chans * (n - 1) * plane);
}

std::string band_reports_to_csv(const std::vector<BandReport>& reports) {
    std::ostringstream out;
    out << "domain,band,fraction,ratio_vs_baseline\n";
    for (const BandReport& r : reports) {
        out << freq_domain_name(r.domain) << ",low," << r.low_fraction << ",";
        if (r.ratio_low)
            out << *r.ratio_low;
        out << "\n";
        out << freq_domain_name(r.domain) << ",high," << r.high_fraction << ",";
        if (r.ratio_high)
            out << *r.ratio_high;
        out << "\n";
    }
    return out.str();
}

} // namespace freelong
