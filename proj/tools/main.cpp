#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "freelong/analysis.hpp"
#include "freelong/attention.hpp"
#include "freelong/harness.hpp"
#include "freelong/io.hpp"
#include "freelong/spectral.hpp"

namespace fl = freelong;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
    std::ostringstream out;
    out << std::hex << v;
    return out.str();
}

fl::VideoFeature load_video(const std::string& path) {
    return fl::VideoFeature::from_tensor(fl::read_tensor(path));
}

std::vector<fl::FreqDomain> parse_domains(const std::string& spec) {
    std::vector<fl::FreqDomain> domains;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            domains.push_back(fl::freq_domain_from_name(item));
    if (domains.empty())
        throw fl::ValidationError("--domains needs at least one of spatial,temporal,spatiotemporal");
    return domains;
}

std::vector<fl::Segment> parse_segments(const std::string& spec) {
    std::vector<fl::Segment> segments;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty())
            continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == item.size())
            throw fl::ValidationError("segment \"" + item + "\" is not of the form start:id");
        fl::Segment seg;
        try {
            seg.start = std::stoull(item.substr(0, colon));
        } catch (const std::exception&) {
            throw fl::ValidationError("segment start in \"" + item + "\" is not a number");
        }
        seg.id = item.substr(colon + 1);
        segments.push_back(std::move(seg));
    }
    return segments;
}

void emit(const json& payload) { std::cout << payload.dump(2) << "\n"; }

struct GenFilterArgs {
    std::size_t frames = 16, height = 8, width = 8;
    double d0 = 0.25;
    std::string out;
};

void cmd_gen_filter(const GenFilterArgs& a) {
    const fl::LowPassFilter filter = fl::gaussian_lpf(a.frames, a.height, a.width, a.d0);
    fl::write_tensor(filter.tensor(), a.out);
    float min_value = 1.0f;
    for (float v : filter.weights())
        min_value = std::min(min_value, v);
    emit({
        {"dims", {a.frames, a.height, a.width}},
        {"d0", a.d0},
        {"dc_value", filter.weights()[0]},
        {"min_value", min_value},
        {"out", a.out},
    });
}

struct BlendArgs {
    std::string global_path, local_path, filter_path, out;
    double d0 = 0.25;
    bool d0_given = false;
    bool verify = false;
};

void cmd_blend(const BlendArgs& a) {
    if (!a.filter_path.empty() && a.d0_given)
        throw fl::ValidationError("--filter and --d0 are mutually exclusive");
    const fl::VideoFeature z_global = load_video(a.global_path);
    const fl::VideoFeature z_local = load_video(a.local_path);

    json filter_info;
    std::optional<fl::LowPassFilter> filter;
    if (!a.filter_path.empty()) {
        filter.emplace(fl::read_tensor(a.filter_path));
        filter_info = {{"source", a.filter_path}};
    } else {
        filter = fl::gaussian_lpf(z_global.frames(), z_global.height(), z_global.width(), a.d0);
        filter_info = {{"d0", a.d0}};
    }

    const fl::VideoFeature blended = fl::spectral_blend(z_global, z_local, *filter);

    json payload{
        {"out", a.out},
        {"dims", blended.tensor().dims()},
        {"filter", filter_info},
    };
    if (a.verify) {
        // Independent route: the blended spectrum must be the filter-weighted
        // combination of the input spectra, checked with the direct-sum DFT.
        const fl::Spectrum sg = fl::dft3_oracle(z_global);
        const fl::Spectrum sl = fl::dft3_oracle(z_local);
        const fl::Spectrum sb = fl::dft3_oracle(blended);
        const auto weights = filter->weights();
        const std::size_t per_channel = weights.size();
        double max_err = 0.0;
        for (std::size_t c = 0; c < blended.channels(); ++c)
            for (std::size_t i = 0; i < per_channel; ++i) {
                const std::size_t idx = c * per_channel + i;
                const double p = weights[i];
                const std::complex<double> want =
                    p * std::complex<double>(sg.bins()[idx]) +
                    (1.0 - p) * std::complex<double>(sl.bins()[idx]);
                max_err = std::max(max_err, std::abs(std::complex<double>(sb.bins()[idx]) - want));
            }
        if (max_err > 1e-4)
            throw fl::NumericalError("blend verification failed: max spectrum error " +
                                     std::to_string(max_err));
        payload["verified"] = true;
        payload["max_abs_spectrum_error"] = max_err;
    }
    fl::write_tensor(blended.tensor(), a.out);
    emit(payload);
}

struct AttendArgs {
    std::string input, mode, out, dump_maps;
    std::uint64_t weights_seed = 0;
    std::size_t alpha = 8, window = 16, stride = 8, step = 1, tau = 25;
    double d0 = 0.25;
    std::int64_t stats_band = -1;
};

void cmd_attend(const AttendArgs& a) {
    const fl::VideoFeature video = load_video(a.input);
    const std::size_t d = video.channels();
    const fl::AttentionWeights weights =
        fl::AttentionWeights::random(d, 1, fl::RngSpec{a.weights_seed});

    const bool want_maps = !a.dump_maps.empty() || a.stats_band >= 0;
    if (want_maps && a.mode != "global" && a.mode != "local")
        throw fl::ValidationError("--dump-maps/--stats-band need --mode global or local");

    json payload{
        {"mode", a.mode},
        {"input_dims", video.tensor().dims()},
        {"weights_seed", a.weights_seed},
        {"heads", 1},
        {"rng_algorithm", fl::kRngAlgorithm},
        {"out", a.out},
    };

    fl::AttentionMaps maps;
    fl::VideoFeature result;
    if (a.mode == "freelong") {
        const fl::LowPassFilter filter =
            fl::gaussian_lpf(video.frames(), video.height(), video.width(), a.d0);
        result = fl::spectralblend_ta(video, weights, a.alpha, filter, a.step, a.tau);
        payload["alpha"] = a.alpha;
        payload["step"] = a.step;
        payload["tau"] = a.tau;
        payload["d0"] = a.d0;
        payload["used_blend"] = a.step <= a.tau;
    } else {
        const fl::SequenceFeature seq = fl::SequenceFeature::from_video(video);
        const fl::QkvProjection qkv = fl::project_qkv(seq, weights);
        fl::SequenceFeature out_seq;
        if (a.mode == "global") {
            out_seq = fl::global_attention(qkv.q, qkv.k, qkv.v, 1, want_maps ? &maps : nullptr);
        } else if (a.mode == "local") {
            out_seq = fl::local_attention(qkv.q, qkv.k, qkv.v, a.alpha, 1,
                                          want_maps ? &maps : nullptr);
            payload["alpha"] = a.alpha;
        } else if (a.mode == "sliding") {
            out_seq = fl::sliding_window_attention(qkv.q, qkv.k, qkv.v, a.window, a.stride, 1);
            const auto offsets = fl::sliding_window_offsets(video.frames(), a.window, a.stride);
            payload["window"] = a.window;
            payload["stride"] = a.stride;
            payload["window_count"] = offsets.size();
        } else {
            throw fl::ValidationError("unknown mode \"" + a.mode +
                                      "\" (expected global, local, sliding, or freelong)");
        }
        result = out_seq.to_video(video.height(), video.width());
    }

    fl::write_tensor(result.tensor(), a.out);
    if (!a.dump_maps.empty()) {
        fl::write_tensor(maps.to_tensor(), a.dump_maps);
        payload["maps"] = a.dump_maps;
    }
    if (a.stats_band >= 0) {
        const auto band = static_cast<std::size_t>(a.stats_band);
        double band_mass = 0.0, entropy = 0.0;
        const std::size_t count = maps.seqs * maps.heads;
        for (std::size_t s = 0; s < maps.seqs; ++s)
            for (std::size_t h = 0; h < maps.heads; ++h) {
                const auto stats = fl::attention_diagonality(maps.map(s, h), maps.frames, band);
                band_mass += stats.band_mass;
                entropy += stats.row_entropy_mean;
            }
        payload["diagonality"] = {
            {"band_mass", band_mass / static_cast<double>(count)},
            {"row_entropy_mean", entropy / static_cast<double>(count)},
            {"N", maps.frames},
            {"k", band},
        };
    }
    emit(payload);
}

struct AnalyzeArgs {
    std::string video, baseline, domains = "spatial,temporal,spatiotemporal";
    double split = 0.25;
    bool csv = false, json_out = false;
};

void cmd_analyze(const AnalyzeArgs& a) {
    const fl::VideoFeature video = load_video(a.video);
    const fl::VideoFeature baseline = load_video(a.baseline);
    const auto reports = fl::frequency_report(video, baseline, a.split, parse_domains(a.domains));
    const double flicker_video = fl::temporal_flicker(video);
    const double flicker_baseline = fl::temporal_flicker(baseline);

    if (a.csv) {
        std::cout << fl::band_reports_to_csv(reports);
        std::cout << "flicker,video," << flicker_video << ",\n";
        std::cout << "flicker,baseline," << flicker_baseline << ",\n";
        return;
    }
    json report_array = json::array();
    for (const auto& r : reports)
        report_array.push_back(r.to_json());
    emit({
        {"split", a.split},
        {"reports", report_array},
        {"temporal_flicker",
         {{"metric", "raw_mad"}, {"video", flicker_video}, {"baseline", flicker_baseline}}},
    });
}

struct SimulateArgs {
    fl::DenoiseConfig cfg;
    std::string mode = "freelong", noise = "random", segments, outdir;
    std::uint64_t seed = 0;
};

void cmd_simulate(SimulateArgs& a) {
    a.cfg.mode = fl::denoise_mode_from_name(a.mode);
    a.cfg.noise_init = fl::noise_init_from_name(a.noise);
    a.cfg.segments = parse_segments(a.segments);
    a.cfg.rng = fl::RngSpec{a.seed};

    const fl::Trajectory traj = fl::run_toy_denoise(a.cfg);

    std::filesystem::create_directories(a.outdir);
    const std::filesystem::path outdir(a.outdir);

    json files = json::array();
    for (const auto& [step, latent] : traj.snapshots) {
        std::ostringstream name;
        name << "step_" << std::setw(4) << std::setfill('0') << step << ".vlt";
        fl::write_tensor(latent.tensor(), outdir / name.str());
        files.push_back({{"path", name.str()},
                         {"kind", "snapshot"},
                         {"step", step},
                         {"checksum", hex64(fl::tensor_checksum(latent.tensor()))}});
    }
    fl::write_tensor(traj.final_latent.tensor(), outdir / "final.vlt");
    files.push_back({{"path", "final.vlt"},
                     {"kind", "final"},
                     {"checksum", hex64(fl::tensor_checksum(traj.final_latent.tensor()))}});

    json conditioning_runs = json::array();
    for (std::size_t i = 0; i < a.cfg.segments.size(); ++i) {
        const std::size_t next = i + 1 < a.cfg.segments.size() ? a.cfg.segments[i + 1].start
                                                               : a.cfg.frames;
        conditioning_runs.push_back({{"id", a.cfg.segments[i].id},
                                     {"first_frame", a.cfg.segments[i].start},
                                     {"last_frame", next - 1}});
    }

    json manifest = traj.metadata;
    manifest["used_blend"] = traj.used_blend;
    manifest["files"] = files;
    manifest["conditioning_table"] = conditioning_runs;

    const std::filesystem::path manifest_path = outdir / "manifest.json";
    {
        std::ofstream out(manifest_path);
        if (!out)
            throw fl::IoError("cannot write " + manifest_path.string());
        out << manifest.dump(2) << "\n";
    }
    emit({
        {"outdir", a.outdir},
        {"manifest", manifest_path.string()},
        {"final_checksum", hex64(fl::tensor_checksum(traj.final_latent.tensor()))},
        {"steps", a.cfg.total_steps},
        {"rng_algorithm", fl::kRngAlgorithm},
    });
}

struct BenchArgs {
    std::size_t frames = 128, dim = 64, spatial = 256, window = 16, stride = 8, reps = 5;
    bool json_out = true;
};

void cmd_bench(const BenchArgs& a) {
    const fl::BenchReport report =
        fl::bench_attention(a.frames, a.dim, a.spatial, a.window, a.stride, a.reps);
    emit(report.to_json());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SpectralBlend temporal attention toolkit"};
    app.require_subcommand(1);
    std::function<void()> action;

    GenFilterArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-filter", "Write a Gaussian low-pass filter tensor");
    gen_cmd->add_option("--frames", gen.frames, "Frequency grid frames")->required();
    gen_cmd->add_option("--height", gen.height, "Frequency grid height")->required();
    gen_cmd->add_option("--width", gen.width, "Frequency grid width")->required();
    gen_cmd->add_option("--d0", gen.d0, "Normalized stop frequency");
    gen_cmd->add_option("--out", gen.out, "Output tensor path")->required();
    gen_cmd->callback([&] { action = [&] { cmd_gen_filter(gen); }; });

    BlendArgs blend;
    auto* blend_cmd = app.add_subcommand("blend", "Low-pass blend of two feature tensors");
    blend_cmd->add_option("--global", blend.global_path, "Global-path feature tensor")->required();
    blend_cmd->add_option("--local", blend.local_path, "Local-path feature tensor")->required();
    blend_cmd->add_option("--filter", blend.filter_path, "Filter tensor path");
    auto* blend_d0 = blend_cmd->add_option("--d0", blend.d0, "Build the filter on the fly");
    blend_cmd->add_option("--out", blend.out, "Output tensor path")->required();
    blend_cmd->add_flag("--verify", blend.verify, "Check the blend against the direct-sum DFT");
    blend_cmd->callback([&] {
        blend.d0_given = blend_d0->count() > 0;
        action = [&] { cmd_blend(blend); };
    });

    AttendArgs attend;
    auto* attend_cmd = app.add_subcommand("attend", "Run one temporal-attention kernel");
    attend_cmd->add_option("--input", attend.input, "Input feature tensor")->required();
    attend_cmd->add_option("--weights-seed", attend.weights_seed, "Projection weight seed");
    attend_cmd->add_option("--mode", attend.mode, "global|local|sliding|freelong")->required();
    attend_cmd->add_option("--alpha", attend.alpha, "Local window half-width");
    attend_cmd->add_option("--window", attend.window, "Sliding window length");
    attend_cmd->add_option("--stride", attend.stride, "Sliding window stride");
    attend_cmd->add_option("--step", attend.step, "Denoising step index");
    attend_cmd->add_option("--tau", attend.tau, "Blend cutoff step");
    attend_cmd->add_option("--d0", attend.d0, "Filter stop frequency (freelong)");
    attend_cmd->add_option("--out", attend.out, "Output tensor path")->required();
    attend_cmd->add_option("--dump-maps", attend.dump_maps, "Write attention maps [S,H,N,N]");
    attend_cmd->add_option("--stats-band", attend.stats_band,
                           "Report diagonality stats at this band half-width");
    attend_cmd->callback([&] { action = [&] { cmd_attend(attend); }; });

    AnalyzeArgs analyze;
    auto* analyze_cmd = app.add_subcommand("analyze", "Band-energy report against a baseline");
    analyze_cmd->add_option("--video", analyze.video, "Video tensor path")->required();
    analyze_cmd->add_option("--baseline", analyze.baseline, "Reference tensor path")->required();
    analyze_cmd->add_option("--split", analyze.split, "Normalized band split");
    analyze_cmd->add_option("--domains", analyze.domains, "Comma list of domains");
    analyze_cmd->add_flag("--json", analyze.json_out, "Emit JSON (default)");
    analyze_cmd->add_flag("--csv", analyze.csv, "Emit CSV rows instead of JSON");
    analyze_cmd->callback([&] { action = [&] { cmd_analyze(analyze); }; });

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Run the toy denoising loop");
    sim_cmd->add_option("--frames", sim.cfg.frames, "Latent frame count");
    sim_cmd->add_option("--steps", sim.cfg.total_steps, "Denoising steps");
    sim_cmd->add_option("--tau", sim.cfg.tau, "Blend cutoff step");
    sim_cmd->add_option("--alpha", sim.cfg.alpha, "Local window half-width");
    sim_cmd->add_option("--d0", sim.cfg.d0, "Filter stop frequency");
    sim_cmd->add_option("--mode", sim.mode, "direct|sliding_window|freelong");
    sim_cmd->add_option("--noise", sim.noise, "random|rescheduled");
    sim_cmd->add_option("--segments", sim.segments, "Per-segment conditioning, e.g. 0:A,64:B");
    sim_cmd->add_option("--seed", sim.seed, "Run seed");
    sim_cmd->add_option("--outdir", sim.outdir, "Run directory")->required();
    sim_cmd->add_option("--channels", sim.cfg.channels, "Latent channels");
    sim_cmd->add_option("--height", sim.cfg.height, "Latent height");
    sim_cmd->add_option("--width", sim.cfg.width, "Latent width");
    sim_cmd->add_option("--window", sim.cfg.window, "Sliding window length");
    sim_cmd->add_option("--stride", sim.cfg.stride, "Sliding window stride");
    sim_cmd->add_option("--snapshot-stride", sim.cfg.snapshot_stride,
                        "Write a latent snapshot every k steps (0 disables)");
    sim_cmd->callback([&] { action = [&] { cmd_simulate(sim); }; });

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "Micro-benchmark the attention kernels");
    bench_cmd->add_option("--frames", bench.frames, "Sequence length");
    bench_cmd->add_option("--dim", bench.dim, "Feature dim");
    bench_cmd->add_option("--spatial", bench.spatial, "Spatial positions");
    bench_cmd->add_option("--window", bench.window, "Sliding window length");
    bench_cmd->add_option("--stride", bench.stride, "Sliding window stride");
    bench_cmd->add_option("--reps", bench.reps, "Timed repetitions (min is reported)");
    bench_cmd->add_flag("--json", bench.json_out, "Emit JSON (default)");
    bench_cmd->callback([&] { action = [&] { cmd_bench(bench); }; });

    try {
        app.parse(argc, argv);
        if (action)
            action();
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const fl::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const fl::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const fl::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
