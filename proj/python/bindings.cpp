#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "freelong/analysis.hpp"
#include "freelong/attention.hpp"
#include "freelong/harness.hpp"
#include "freelong/io.hpp"
#include "freelong/spectral.hpp"

namespace py = pybind11;
namespace fl = freelong;

namespace {

std::vector<std::size_t> shape_of(const py::buffer_info& info) {
    std::vector<std::size_t> dims;
    for (py::ssize_t d : info.shape)
        dims.push_back(static_cast<std::size_t>(d));
    return dims;
}

fl::Tensor tensor_from_array(const py::array& array) {
    if (py::isinstance<py::array_t<float>>(array)) {
        auto arr = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(array);
        fl::Tensor t = fl::Tensor::real32(shape_of(arr.request()));
        std::copy_n(static_cast<const float*>(arr.request().ptr), t.size(), t.r32().begin());
        return t;
    }
    if (py::isinstance<py::array_t<double>>(array)) {
        auto arr = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(array);
        fl::Tensor t = fl::Tensor::real64(shape_of(arr.request()));
        std::copy_n(static_cast<const double*>(arr.request().ptr), t.size(), t.r64().begin());
        return t;
    }
    if (py::isinstance<py::array_t<std::complex<float>>>(array)) {
        auto arr = py::array_t<std::complex<float>, py::array::c_style | py::array::forcecast>::
            ensure(array);
        fl::Tensor t = fl::Tensor::complex64(shape_of(arr.request()));
        std::copy_n(static_cast<const std::complex<float>*>(arr.request().ptr), t.size(),
                    t.c64().begin());
        return t;
    }
    throw fl::ValidationError("expected a float32, float64, or complex64 array");
}

py::array tensor_to_array(const fl::Tensor& t) {
    std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
    switch (t.dtype()) {
    case fl::DType::Real32: {
        py::array_t<float> out(shape);
        std::copy(t.r32().begin(), t.r32().end(), static_cast<float*>(out.request().ptr));
        return out;
    }
    case fl::DType::Real64: {
        py::array_t<double> out(shape);
        std::copy(t.r64().begin(), t.r64().end(), static_cast<double*>(out.request().ptr));
        return out;
    }
    case fl::DType::Complex64: {
        py::array_t<std::complex<float>> out(shape);
        std::copy(t.c64().begin(), t.c64().end(),
                  static_cast<std::complex<float>*>(out.request().ptr));
        return out;
    }
    }
    throw fl::ValidationError("invalid tensor dtype");
}

fl::VideoFeature video_from_array(const py::array& array) {
    auto arr = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(array);
    return fl::VideoFeature::from_tensor(tensor_from_array(arr));
}

py::array_t<float> video_to_array(const fl::VideoFeature& v) {
    return tensor_to_array(v.tensor());
}

fl::SequenceFeature sequence_from_array(const py::array& array) {
    auto arr = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(array);
    const auto info = arr.request();
    if (info.ndim != 3)
        throw fl::ValidationError("sequence feature must be a 3-D [S,N,d] array");
    fl::SequenceFeature seq(static_cast<std::size_t>(info.shape[0]),
                            static_cast<std::size_t>(info.shape[1]),
                            static_cast<std::size_t>(info.shape[2]));
    std::copy_n(static_cast<const float*>(info.ptr), seq.data.size(), seq.data.begin());
    return seq;
}

py::array_t<float> sequence_to_array(const fl::SequenceFeature& seq) {
    py::array_t<float> out({static_cast<py::ssize_t>(seq.seqs),
                            static_cast<py::ssize_t>(seq.frames),
                            static_cast<py::ssize_t>(seq.dim)});
    std::copy(seq.data.begin(), seq.data.end(), static_cast<float*>(out.request().ptr));
    return out;
}

py::array_t<float> maps_to_array(const fl::AttentionMaps& maps) {
    py::array_t<float> out(
        {static_cast<py::ssize_t>(maps.seqs), static_cast<py::ssize_t>(maps.heads),
         static_cast<py::ssize_t>(maps.frames), static_cast<py::ssize_t>(maps.frames)});
    std::copy(maps.data.begin(), maps.data.end(), static_cast<float*>(out.request().ptr));
    return out;
}

fl::LowPassFilter filter_from_array(const py::array& array, std::optional<double> d0) {
    auto arr = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(array);
    return fl::LowPassFilter(tensor_from_array(arr), d0);
}

py::dict report_to_dict(const fl::BandReport& r) {
    py::dict d;
    d["domain"] = fl::freq_domain_name(r.domain);
    d["split"] = r.split;
    d["low_fraction"] = r.low_fraction;
    d["high_fraction"] = r.high_fraction;
    d["ratio_low"] = r.ratio_low ? py::object(py::float_(*r.ratio_low)) : py::none();
    d["ratio_high"] = r.ratio_high ? py::object(py::float_(*r.ratio_high)) : py::none();
    return d;
}

} // namespace

PYBIND11_MODULE(_freelong, m) {
    m.doc() = "Frequency-blended local/global temporal attention kernels";
    m.attr("RNG_ALGORITHM") = fl::kRngAlgorithm;

    py::register_exception<fl::ValidationError>(m, "FreelongValidationError", PyExc_ValueError);
    py::register_exception<fl::IoError>(m, "FreelongIoError", PyExc_IOError);
    py::register_exception<fl::NumericalError>(m, "FreelongNumericalError", PyExc_ArithmeticError);

    // tensor I/O
    m.def(
        "read_tensor",
        [](const std::filesystem::path& path) { return tensor_to_array(fl::read_tensor(path)); },
        py::arg("path"), "Read a VLT1 tensor file as a numpy array.");
    m.def(
        "write_tensor",
        [](const py::array& array, const std::filesystem::path& path) {
            fl::write_tensor(tensor_from_array(array), path);
        },
        py::arg("array"), py::arg("path"), "Write a numpy array as a VLT1 tensor file.");
    m.def(
        "tensor_checksum",
        [](const py::array& array) { return fl::tensor_checksum(tensor_from_array(array)); },
        py::arg("array"));
    m.def(
        "sample_gaussian",
        [](const std::vector<std::size_t>& dims, std::uint64_t seed) {
            return tensor_to_array(fl::sample_gaussian(dims, fl::RngSpec{seed}));
        },
        py::arg("dims"), py::arg("seed") = 0,
        "Seeded i.i.d. standard-normal float32 tensor.");

    // spectral
    m.def(
        "fft3", [](const py::array& z) { return tensor_to_array(fl::fft3(video_from_array(z)).tensor()); },
        py::arg("video"), "Per-channel 3-D DFT over (frames, height, width).");
    m.def(
        "ifft3",
        [](const py::array& s) {
            return video_to_array(fl::ifft3(fl::Spectrum(tensor_from_array(s))));
        },
        py::arg("spectrum"), "Inverse of fft3 with 1/(N*h*w) scaling.");
    m.def(
        "gaussian_lpf",
        [](std::size_t frames, std::size_t height, std::size_t width, double d0) {
            return tensor_to_array(fl::gaussian_lpf(frames, height, width, d0).tensor());
        },
        py::arg("frames"), py::arg("height"), py::arg("width"), py::arg("d0") = 0.25);
    m.def(
        "band_masks",
        [](const std::string& domain, const std::vector<std::size_t>& dims, double split) {
            const auto pair = fl::band_masks(fl::freq_domain_from_name(domain), dims, split);
            return py::make_tuple(tensor_to_array(pair.low.to_tensor()),
                                  tensor_to_array(pair.high.to_tensor()));
        },
        py::arg("domain"), py::arg("dims"), py::arg("split") = 0.25,
        "Complementary (low, high) masks as 0/1 float arrays.");
    m.def(
        "spectral_blend",
        [](const py::array& z_global, const py::array& z_local, const py::array& filter) {
            return video_to_array(fl::spectral_blend(video_from_array(z_global),
                                                     video_from_array(z_local),
                                                     filter_from_array(filter, std::nullopt)));
        },
        py::arg("z_global"), py::arg("z_local"), py::arg("filter"),
        "Low frequencies from the global path, high from the local path.");
    m.def(
        "band_energy_fraction",
        [](const py::array& video, const std::string& domain, double split,
           const std::string& band) {
            const fl::VideoFeature v = video_from_array(video);
            const auto dom = fl::freq_domain_from_name(domain);
            std::vector<std::size_t> dims;
            switch (dom) {
            case fl::FreqDomain::Temporal: dims = {v.frames()}; break;
            case fl::FreqDomain::Spatial: dims = {v.height(), v.width()}; break;
            default: dims = {v.frames(), v.height(), v.width()};
            }
            const auto masks = fl::band_masks(dom, dims, split);
            if (band == "low")
                return fl::band_energy_fraction(v, masks.low);
            if (band == "high")
                return fl::band_energy_fraction(v, masks.high);
            throw fl::ValidationError("band must be \"low\" or \"high\"");
        },
        py::arg("video"), py::arg("domain"), py::arg("split") = 0.25, py::arg("band") = "low");
    m.def(
        "relative_band_ratio",
        [](const py::array& long_video, const py::array& short_video, const std::string& domain,
           double split) {
            const auto r = fl::relative_band_ratio(video_from_array(long_video),
                                                   video_from_array(short_video),
                                                   fl::freq_domain_from_name(domain), split);
            return py::make_tuple(r.low, r.high);
        },
        py::arg("long_video"), py::arg("short_video"), py::arg("domain"),
        py::arg("split") = 0.25, "Returns (ratio_low, ratio_high) against the reference.");

    // attention
    py::class_<fl::AttentionWeights>(m, "AttentionWeights")
        .def_static(
            "random",
            [](std::size_t dim, std::size_t heads, std::uint64_t seed) {
                return fl::AttentionWeights::random(dim, heads, fl::RngSpec{seed});
            },
            py::arg("dim"), py::arg("heads") = 1, py::arg("seed") = 0)
        .def_readonly("dim", &fl::AttentionWeights::dim)
        .def_readonly("heads", &fl::AttentionWeights::heads);

    m.def(
        "project_qkv",
        [](const py::array& z, const fl::AttentionWeights& w) {
            const auto qkv = fl::project_qkv(sequence_from_array(z), w);
            return py::make_tuple(sequence_to_array(qkv.q), sequence_to_array(qkv.k),
                                  sequence_to_array(qkv.v));
        },
        py::arg("z"), py::arg("weights"));
    m.def(
        "global_attention",
        [](const py::array& q, const py::array& k, const py::array& v, std::size_t heads,
           bool return_maps) {
            fl::AttentionMaps maps;
            const auto out =
                fl::global_attention(sequence_from_array(q), sequence_from_array(k),
                                     sequence_from_array(v), heads, return_maps ? &maps : nullptr);
            if (return_maps)
                return py::make_tuple(sequence_to_array(out), maps_to_array(maps));
            return py::make_tuple(sequence_to_array(out), py::none());
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("heads") = 1,
        py::arg("return_maps") = false);
    m.def(
        "local_attention",
        [](const py::array& q, const py::array& k, const py::array& v, std::size_t alpha,
           std::size_t heads, bool return_maps, const std::string& mask_mode) {
            fl::LocalMaskMode mode;
            if (mask_mode == "renormalized")
                mode = fl::LocalMaskMode::RenormalizedSoftmax;
            else if (mask_mode == "post_softmax_zero")
                mode = fl::LocalMaskMode::PostSoftmaxZero;
            else
                throw fl::ValidationError("mask_mode must be renormalized or post_softmax_zero");
            fl::AttentionMaps maps;
            const auto out = fl::local_attention(sequence_from_array(q), sequence_from_array(k),
                                                 sequence_from_array(v), alpha, heads,
                                                 return_maps ? &maps : nullptr, mode);
            if (return_maps)
                return py::make_tuple(sequence_to_array(out), maps_to_array(maps));
            return py::make_tuple(sequence_to_array(out), py::none());
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("alpha"), py::arg("heads") = 1,
        py::arg("return_maps") = false, py::arg("mask_mode") = "renormalized");
    m.def(
        "sliding_window_attention",
        [](const py::array& q, const py::array& k, const py::array& v, std::size_t window,
           std::size_t stride, std::size_t heads) {
            return sequence_to_array(fl::sliding_window_attention(
                sequence_from_array(q), sequence_from_array(k), sequence_from_array(v), window,
                stride, heads));
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("window"), py::arg("stride"),
        py::arg("heads") = 1);
    m.def("sliding_window_offsets", &fl::sliding_window_offsets, py::arg("frames"),
          py::arg("window"), py::arg("stride"));
    m.def(
        "spectralblend_ta",
        [](const py::array& z_in, const fl::AttentionWeights& w, std::size_t alpha,
           const py::array& filter, std::size_t step, std::size_t tau) {
            return video_to_array(fl::spectralblend_ta(video_from_array(z_in), w, alpha,
                                                       filter_from_array(filter, std::nullopt),
                                                       step, tau));
        },
        py::arg("z_in"), py::arg("weights"), py::arg("alpha"), py::arg("filter"), py::arg("step"),
        py::arg("tau"),
        "Blended local/global attention for step <= tau, local-only after.");
    m.def(
        "attention_diagonality",
        [](const py::array& map, std::size_t band) {
            auto arr = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(map);
            const auto info = arr.request();
            if (info.ndim != 2 || info.shape[0] != info.shape[1])
                throw fl::ValidationError("attention map must be a square 2-D array");
            const auto frames = static_cast<std::size_t>(info.shape[0]);
            const auto stats = fl::attention_diagonality(
                {static_cast<const float*>(info.ptr), frames * frames}, frames, band);
            py::dict d;
            d["band_mass"] = stats.band_mass;
            d["row_entropy_mean"] = stats.row_entropy_mean;
            d["N"] = frames;
            d["k"] = band;
            return d;
        },
        py::arg("map"), py::arg("band"));

    // analysis
    m.def(
        "frequency_report",
        [](const py::array& video, const py::array& baseline, double split,
           const std::vector<std::string>& domains) {
            std::vector<fl::FreqDomain> doms;
            for (const auto& d : domains)
                doms.push_back(fl::freq_domain_from_name(d));
            const auto reports = fl::frequency_report(video_from_array(video),
                                                      video_from_array(baseline), split, doms);
            py::list out;
            for (const auto& r : reports)
                out.append(report_to_dict(r));
            return out;
        },
        py::arg("video"), py::arg("baseline"), py::arg("split") = 0.25,
        py::arg("domains") =
            std::vector<std::string>{"spatial", "temporal", "spatiotemporal"});
    m.def(
        "temporal_flicker",
        [](const py::array& video) { return fl::temporal_flicker(video_from_array(video)); },
        py::arg("video"), "Mean absolute difference between consecutive frames.");

    // harness
    m.def(
        "reschedule_noise",
        [](const py::array& base, std::size_t total_frames, std::uint64_t seed) {
            return video_to_array(
                fl::reschedule_noise(video_from_array(base), total_frames, fl::RngSpec{seed}));
        },
        py::arg("base"), py::arg("total_frames"), py::arg("seed") = 0,
        "Repeat the base block with per-block frame permutations.");
    m.def(
        "segment_conditioning",
        [](const std::vector<std::pair<std::size_t, std::string>>& segments,
           std::size_t total_frames,
           const std::map<std::string, std::vector<float>>& embeddings) {
            std::vector<fl::Segment> segs;
            for (const auto& [start, id] : segments)
                segs.push_back({start, id});
            return fl::segment_conditioning(segs, total_frames, embeddings);
        },
        py::arg("segments"), py::arg("total_frames"), py::arg("embeddings"));
    m.def("embedding_for_id", &fl::embedding_for_id, py::arg("id"), py::arg("dim"));
    m.def(
        "run_toy_denoise",
        [](std::size_t channels, std::size_t frames, std::size_t height, std::size_t width,
           std::size_t steps, std::size_t tau, std::size_t alpha, double d0, std::uint64_t seed,
           const std::string& mode, const std::string& noise_init,
           const std::vector<std::pair<std::size_t, std::string>>& segments, std::size_t window,
           std::size_t stride, std::size_t snapshot_stride) {
            fl::DenoiseConfig cfg;
            cfg.channels = channels;
            cfg.frames = frames;
            cfg.height = height;
            cfg.width = width;
            cfg.total_steps = steps;
            cfg.tau = tau;
            cfg.alpha = alpha;
            cfg.d0 = d0;
            cfg.rng = fl::RngSpec{seed};
            cfg.mode = fl::denoise_mode_from_name(mode);
            cfg.noise_init = fl::noise_init_from_name(noise_init);
            for (const auto& [start, id] : segments)
                cfg.segments.push_back({start, id});
            cfg.window = window;
            cfg.stride = stride;
            cfg.snapshot_stride = snapshot_stride;

            const fl::Trajectory traj = fl::run_toy_denoise(cfg);
            py::dict out;
            out["final_latent"] = video_to_array(traj.final_latent);
            out["used_blend"] = traj.used_blend;
            out["metadata"] = py::module_::import("json").attr("loads")(traj.metadata.dump());
            py::list snaps;
            for (const auto& [step, latent] : traj.snapshots)
                snaps.append(py::make_tuple(step, video_to_array(latent)));
            out["snapshots"] = snaps;
            return out;
        },
        py::arg("channels") = 4, py::arg("frames") = 128, py::arg("height") = 16,
        py::arg("width") = 16, py::arg("steps") = 50, py::arg("tau") = 25, py::arg("alpha") = 8,
        py::arg("d0") = 0.25, py::arg("seed") = 0, py::arg("mode") = "freelong",
        py::arg("noise_init") = "random",
        py::arg("segments") = std::vector<std::pair<std::size_t, std::string>>{},
        py::arg("window") = 16, py::arg("stride") = 8, py::arg("snapshot_stride") = 0);
    m.def(
        "bench_attention",
        [](std::size_t frames, std::size_t dim, std::size_t spatial, std::size_t window,
           std::size_t stride, std::size_t reps) {
            const auto report = fl::bench_attention(frames, dim, spatial, window, stride, reps);
            return py::module_::import("json").attr("loads")(report.to_json().dump());
        },
        py::arg("frames") = 128, py::arg("dim") = 64, py::arg("spatial") = 256,
        py::arg("window") = 16, py::arg("stride") = 8, py::arg("reps") = 5);
}
