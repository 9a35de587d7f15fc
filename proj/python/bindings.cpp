#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ddsr/checkpoint.hpp"
#include "ddsr/train.hpp"
#include "ddsr/version.hpp"

namespace py = pybind11;
using namespace ddsr;

namespace {

using Arr = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const Arr& a) {
    Shape shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
    std::vector<float> data(a.data(), a.data() + a.size());
    return Tensor<float>::from(std::move(shape), std::move(data));
}

Arr to_array(const Tensor<float>& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Arr out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Arr require_chw(const Arr& a, const char* what) {
    if (a.ndim() != 3) throw py::value_error(std::string(what) + " expects a [C,H,W] array");
    return a;
}

DegradationSpec make_spec(const std::string& profile, int scale, double blur_lo, double blur_hi,
                          double noise_sigma, uint64_t seed) {
    DegradationSpec spec;
    spec.profile = profile_from_name(profile);
    spec.scale = scale;
    spec.blur_lo = blur_lo;
    spec.blur_hi = blur_hi;
    spec.noise_sigma = noise_sigma;
    spec.seed = seed;
    spec.validate();
    return spec;
}

ModelConfig config_from_dict(const py::dict& d) {
    ModelConfig c = ModelConfig::desk();
    auto geti = [&](const char* k, int& slot) {
        if (d.contains(k)) slot = d[k].cast<int>();
    };
    geti("n", c.n_groups);
    geti("m", c.units_per_group);
    geti("d", c.channels);
    geti("window", c.window);
    geti("scale", c.scale);
    geti("msta", c.m_sta);
    geti("rank", c.lora_rank);
    geti("alpha", c.lora_alpha);
    geti("df", c.fda_channels);
    geti("nf", c.fda_stages);
    geti("dup", c.up_channels);
    c.validate();
    return c;
}

py::dict config_to_dict(const ModelConfig& c) {
    py::dict d;
    d["n"] = c.n_groups;
    d["m"] = c.units_per_group;
    d["d"] = c.channels;
    d["window"] = c.window;
    d["scale"] = c.scale;
    d["msta"] = c.m_sta;
    d["rank"] = c.lora_rank;
    d["alpha"] = c.lora_alpha;
    d["df"] = c.fda_channels;
    d["nf"] = c.fda_stages;
    d["dup"] = c.up_channels;
    return d;
}

// checkpoint-backed (or randomly initialized) dual-domain model
class SuperResolver {
public:
    static SuperResolver load(const std::string& path) {
        SuperResolver r;
        r.model_ = load_checkpoint(path);
        return r;
    }
    static SuperResolver random(const py::dict& cfg, uint64_t seed, bool with_fda) {
        SuperResolver r;
        r.model_ = build_model<float>(config_from_dict(cfg), seed, with_fda);
        return r;
    }
    py::dict config() const { return config_to_dict(model_.cfg); }
    int scale() const { return model_.cfg.scale; }
    bool has_fda() const { return model_.has_fda; }
    py::dict ledger() const {
        ParamLedger l = count_trainable(model_);
        py::dict d;
        d["total"] = l.total;
        d["trainable"] = l.trainable;
        d["frozen"] = l.frozen;
        d["lora"] = l.lora;
        d["fraction_vs_ft"] = l.fraction_vs_ft;
        return d;
    }
    py::tuple upscale(const Arr& img) {
        Arr chw = require_chw(img, "upscale");
        Tensor<float> t = to_tensor(chw);
        Tensor<float> x = Tensor<float>::from({1, t.dim(0), t.dim(1), t.dim(2)}, t.data());
        NoGradGuard ng;
        ForwardResult fw = model_forward(model_, x);
        Tensor<float> out = Tensor<float>::from(
            {fw.scored.dim(1), fw.scored.dim(2), fw.scored.dim(3)}, fw.scored.data());
        clip01(out);
        double residue = model_.has_fda ? fw.fda.imag_residue : 0.0;
        return py::make_tuple(to_array(out), residue);
    }

private:
    Model<float> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Dual-domain adaptation super-resolution core";
    m.attr("__version__") = kVersionString;

    py::register_exception<Error>(m, "DdsrError");

    m.def("fft2", [](const Arr& a) {
        if (a.ndim() < 2) throw py::value_error("fft2 expects at least 2 dims");
        Spectrum<float> s = fft2(to_tensor(a));
        return py::make_tuple(to_array(s.real), to_array(s.imag));
    }, py::arg("x"), "Orthonormal 2-D DFT over the trailing two axes; returns (re, im)");

    m.def("ifft2", [](const Arr& re, const Arr& im) {
        auto r = ifft2(Spectrum<float>{to_tensor(re), to_tensor(im)});
        return py::make_tuple(to_array(r.out), r.imag_residue);
    }, py::arg("re"), py::arg("im"),
       "Inverse orthonormal DFT; returns (real_part, max_imag_residue)");

    m.def("amplitude_map", [](const Arr& re, const Arr& im, bool log_scale, bool center_shift) {
        return to_array(amplitude_map(Spectrum<float>{to_tensor(re), to_tensor(im)}, log_scale,
                                      center_shift));
    }, py::arg("re"), py::arg("im"), py::arg("log_scale") = true, py::arg("center_shift") = true);

    m.def("conv2d", [](const Arr& x, const Arr& w, py::object b, int pad) {
        NoGradGuard ng;
        Tensor<float> xt = to_tensor(x), wt = to_tensor(w);
        if (b.is_none()) return to_array(conv2d(xt, wt, pad));
        Tensor<float> bt = to_tensor(b.cast<Arr>());
        return to_array(conv2d(xt, wt, &bt, pad));
    }, py::arg("x"), py::arg("w"), py::arg("b") = py::none(), py::arg("pad") = 1);

    m.def("linear", [](const Arr& x, const Arr& w, py::object b) {
        NoGradGuard ng;
        Tensor<float> xt = to_tensor(x), wt = to_tensor(w);
        if (b.is_none()) return to_array(linear(xt, wt));
        Tensor<float> bt = to_tensor(b.cast<Arr>());
        return to_array(linear(xt, wt, &bt));
    }, py::arg("x"), py::arg("w"), py::arg("b") = py::none());

    m.def("pixel_shuffle", [](const Arr& x, int s) {
        NoGradGuard ng;
        return to_array(pixel_shuffle(to_tensor(x), s));
    }, py::arg("x"), py::arg("scale"));

    m.def("psnr", [](const Arr& a, const Arr& b, double peak) {
        return psnr(to_tensor(require_chw(a, "psnr")), to_tensor(require_chw(b, "psnr")), peak);
    }, py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);

    m.def("ssim", [](const Arr& a, const Arr& b) {
        return ssim(to_tensor(require_chw(a, "ssim")), to_tensor(require_chw(b, "ssim")));
    }, py::arg("a"), py::arg("b"));

    m.def("high_band_amplitude_error", [](const Arr& pred, const Arr& gt, double cutoff) {
        return high_band_amplitude_error(to_tensor(require_chw(pred, "high_band")),
                                         to_tensor(require_chw(gt, "high_band")), cutoff);
    }, py::arg("pred"), py::arg("gt"), py::arg("cutoff") = 0.25);

    m.def("resize_bicubic", [](const Arr& img, int h, int w) {
        return to_array(resize_bicubic(to_tensor(require_chw(img, "resize")), h, w));
    }, py::arg("img"), py::arg("out_h"), py::arg("out_w"));

    m.def("gaussian_blur", [](const Arr& img, double sigma) {
        return to_array(gaussian_blur(to_tensor(require_chw(img, "blur")), sigma));
    }, py::arg("img"), py::arg("sigma"));

    m.def("degrade", [](const Arr& hr, const std::string& profile, int scale, double blur_lo,
                        double blur_hi, double noise_sigma, uint64_t seed, uint64_t index) {
        DegradationSpec spec = make_spec(profile, scale, blur_lo, blur_hi, noise_sigma, seed);
        return to_array(degrade(to_tensor(require_chw(hr, "degrade")), spec, index));
    }, py::arg("hr"), py::arg("profile") = "realistic", py::arg("scale") = 2,
       py::arg("blur_lo") = 1.2, py::arg("blur_hi") = 2.2, py::arg("noise_sigma") = 0.01,
       py::arg("seed") = 7, py::arg("index") = 0);

    m.def("make_hr_corpus", [](int n, int size, uint64_t seed) {
        py::list out;
        for (auto& img : make_hr_corpus(n, size, seed)) out.append(to_array(img));
        return out;
    }, py::arg("n"), py::arg("size") = 96, py::arg("seed") = 7);

    m.def("merge_lora", [](const Arr& w, const Arr& down, const Arr& up, float scale) {
        LoraAdapter<float> a{to_tensor(down), to_tensor(up), scale};
        return to_array(merge_lora(to_tensor(w), a));
    }, py::arg("w"), py::arg("down"), py::arg("up"), py::arg("scale") = 1.0f,
       "W + scale * down @ up");

    m.def("lr_schedule", [](int iter, double lr0, int halve_every) {
        TrainConfig cfg;
        cfg.lr0 = lr0;
        cfg.halve_every = halve_every;
        return lr_schedule(iter, cfg);
    }, py::arg("iter"), py::arg("lr0") = 2e-4, py::arg("halve_every") = 2000);

    py::class_<SuperResolver>(m, "SuperResolver")
        .def_static("load", &SuperResolver::load, py::arg("path"))
        .def_static("random", &SuperResolver::random, py::arg("config") = py::dict(),
                    py::arg("seed") = 7, py::arg("with_fda") = true)
        .def("upscale", &SuperResolver::upscale, py::arg("img"),
             "[C,H,W] in [0,1] -> ([C,sH,sW], imag_residue)")
        .def_property_readonly("config", &SuperResolver::config)
        .def_property_readonly("scale", &SuperResolver::scale)
        .def_property_readonly("has_fda", &SuperResolver::has_fda)
        .def_property_readonly("ledger", &SuperResolver::ledger);
}
