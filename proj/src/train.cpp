#include "ddsr/train.hpp"

#include <cmath>

namespace ddsr {

const char* regime_name(Regime r) {
    switch (r) {
        case Regime::Pretrain: return "pretrain";
        case Regime::ReT: return "ret";
        case Regime::FT: return "ft";
        case Regime::DanP: return "dan-p";
        case Regime::DanF: return "dan-f";
    }
    return "?";
}

Regime regime_from_name(const std::string& s) {
    if (s == "pretrain") return Regime::Pretrain;
    if (s == "ret") return Regime::ReT;
    if (s == "ft") return Regime::FT;
    if (s == "dan-p" || s == "danp") return Regime::DanP;
    if (s == "dan-f" || s == "danf") return Regime::DanF;
    DDSR_CHECK(false, "unknown regime '" << s << "'");
    return Regime::Pretrain;
}

void TrainConfig::validate() const {
    DDSR_CHECK(lr0 > 0, "train config: lr0 must be positive");
    DDSR_CHECK(halve_every > 0, "train config: halve_every must be positive");
    DDSR_CHECK(patch > 0 && batch > 0, "train config: patch/batch must be positive");
    DDSR_CHECK(iters >= 0, "train config: negative iteration count");
    DDSR_CHECK(lambda_freq >= 0, "train config: negative lambda");
    DDSR_CHECK(eval_every > 0, "train config: eval_every must be positive");
    DDSR_CHECK(n_train_images > 0 && n_eval_images > 0, "train config: empty data split");
    DDSR_CHECK(hr_size > 0, "train config: hr_size must be positive");
}

double lr_schedule(int iter, const TrainConfig& cfg) {
    DDSR_CHECK(iter >= 0, "lr_schedule: negative iteration");
    return cfg.lr0 * std::pow(0.5, static_cast<double>(iter / cfg.halve_every));
}

template <typename T>
Tensor<T> dual_loss(const Tensor<T>& out_s, const Spectrum<T>* o_f, const Tensor<T>& y,
                    T lambda) {
    DDSR_CHECK(out_s.shape() == y.shape(), "dual_loss: O^s " << shape_str(out_s.shape())
                                               << " vs Y " << shape_str(y.shape()));
    Tensor<T> loss = l1_mean(out_s, y);
    if (o_f) {
        DDSR_CHECK(o_f->real.shape() == y.shape(), "dual_loss: O^f shape mismatch");
        Spectrum<T> fy = fft2(y);
        Tensor<T> lf = mul_scalar(add(l1_mean(o_f->real, fy.real), l1_mean(o_f->imag, fy.imag)),
                                  static_cast<T>(0.5));
        loss = add(loss, mul_scalar(lf, lambda));
    }
    return loss;
}

ForwardResult model_forward(Model<float>& model, const Tensor<float>& x) {
    ForwardResult r;
    r.acts = backbone_forward(x, model);
    if (model.has_fda) {
        r.fda = fda_forward(x, r.acts, model);
        r.scored = r.fda.o;
    } else {
        r.scored = r.acts.out_s;
    }
    return r;
}

namespace {

Tensor<float> as_batch1(const Tensor<float>& img) {
    return Tensor<float>::from({1, img.dim(0), img.dim(1), img.dim(2)}, img.data());
}

Tensor<float> from_batch1(const Tensor<float>& t) {
    return Tensor<float>::from({t.dim(1), t.dim(2), t.dim(3)}, t.data());
}

Model<float> clone_model(const Model<float>& src, uint64_t seed, bool with_fda) {
    Model<float> dst = build_model<float>(src.cfg, seed, with_fda);
    for (const auto& name : dst.params.names()) {
        if (!src.params.has(name)) continue;  // fresh FDA parameters stay at init
        const Tensor<float>& s = src.params.at(name);
        Tensor<float>& d = dst.params.at(name);
        DDSR_CHECK(s.shape() == d.shape(), "clone: shape mismatch for " << name);
        d.data() = s.data();
    }
    return dst;
}

}  // namespace

RegimeSetup prepare_regime(Regime regime, const ModelConfig& cfg, const Model<float>* pretrained,
                           uint64_t seed, FreezePolicy policy, int budget) {
    cfg.validate();
    if (regime == Regime::FT || regime == Regime::DanP || regime == Regime::DanF) {
        DDSR_CHECK(pretrained != nullptr,
                   "regime " << regime_name(regime) << " needs a pretrained checkpoint");
        DDSR_CHECK(pretrained->cfg.arch_equal(cfg),
                   "pretrained checkpoint architecture does not match the requested config");
    }
    RegimeSetup setup;
    switch (regime) {
        case Regime::Pretrain:
        case Regime::ReT:
            setup.model = build_model<float>(cfg, seed, false);
            setup.plan = make_freeze_plan(cfg, policy, 0);
            break;
        case Regime::FT:
            setup.model = clone_model(*pretrained, seed, false);
            setup.plan = make_freeze_plan(cfg, policy, 0);
            break;
        case Regime::DanF:
            setup.model = clone_model(*pretrained, seed, true);
            setup.plan = make_freeze_plan(cfg, policy, 0);
            break;
        case Regime::DanP: {
            setup.model = clone_model(*pretrained, seed, true);
            int b = budget >= 0 ? budget : cfg.m_sta;
            setup.plan = make_freeze_plan(cfg, policy, b);
            apply_freeze_plan(setup.model, setup.plan);
            if (cfg.lora_rank > 0) {
                Rng rng = Rng(seed).fork(0x10ca);
                attach_lora(setup.model, setup.plan.lora_targets, rng);
            }
            break;
        }
    }
    setup.ledger = count_trainable(setup.model);
    return setup;
}

EvalResult evaluate(Model<float>& model, const DataSet& data) {
    DDSR_CHECK(!data.hr.empty() && data.hr.size() == data.lr.size(), "evaluate: empty dataset");
    NoGradGuard ng;
    EvalResult r;
    for (size_t i = 0; i < data.hr.size(); ++i) {
        const Tensor<float>& hr = data.hr[i];
        ForwardResult fw = model_forward(model, as_batch1(data.lr[i]));
        Tensor<float> scored = from_batch1(fw.scored);
        clip01(scored);
        Tensor<float> spatial = from_batch1(fw.acts.out_s);
        clip01(spatial);
        Tensor<float> bicubic = resize_bicubic(data.lr[i], hr.dim(1), hr.dim(2));
        clip01(bicubic);
        r.psnr += psnr(scored, hr);
        r.ssim += ssim(scored, hr);
        r.psnr_spatial += psnr(spatial, hr);
        r.psnr_bicubic += psnr(bicubic, hr);
        r.ssim_bicubic += ssim(bicubic, hr);
        r.high_band_err += high_band_amplitude_error(scored, hr);
        if (model.has_fda) r.imag_residue = std::max(r.imag_residue, fw.fda.imag_residue);
    }
    double n = static_cast<double>(data.hr.size());
    r.psnr /= n;
    r.ssim /= n;
    r.psnr_spatial /= n;
    r.psnr_bicubic /= n;
    r.ssim_bicubic /= n;
    r.high_band_err /= n;
    r.n_images = static_cast<int>(data.hr.size());
    return r;
}

TrainResult train_model(Model<float>& model, const TrainConfig& cfg, const DataSet& train_data,
                        const DataSet& eval_data) {
    cfg.validate();
    DDSR_CHECK(!train_data.hr.empty() && train_data.hr.size() == train_data.lr.size(),
               "train_model: empty training set");
    int scale = model.cfg.scale;
    for (size_t i = 0; i < train_data.hr.size(); ++i) {
        DDSR_CHECK(train_data.hr[i].dim(1) == train_data.lr[i].dim(1) * scale &&
                       train_data.hr[i].dim(2) == train_data.lr[i].dim(2) * scale,
                   "train_model: LR/HR pair " << i << " does not match scale " << scale);
        DDSR_CHECK(train_data.lr[i].dim(1) >= cfg.patch && train_data.lr[i].dim(2) >= cfg.patch,
                   "train_model: image " << i << " smaller than the " << cfg.patch << " patch");
    }

    TrainResult result;
    Rng rng = Rng(cfg.seed).fork(0x7e41);
    AdamState<float> opt;
    int c = model.cfg.img_channels;
    int lp = cfg.patch, hp = cfg.patch * scale;
    std::vector<float> xbuf(static_cast<size_t>(cfg.batch) * c * lp * lp);
    std::vector<float> ybuf(static_cast<size_t>(cfg.batch) * c * hp * hp);

    auto record = [&](int iter, double loss) {
        EvalResult ev = evaluate(model, eval_data);
        result.log.push_back(TrainRecord{iter, lr_schedule(iter, cfg), loss, ev.psnr, ev.ssim,
                                         ev.imag_residue, ev.psnr_spatial});
    };

    for (int it = 0; it < cfg.iters; ++it) {
        for (int b = 0; b < cfg.batch; ++b) {
            int idx = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(train_data.hr.size()) - 1));
            const Tensor<float>& lr = train_data.lr[static_cast<size_t>(idx)];
            const Tensor<float>& hr = train_data.hr[static_cast<size_t>(idx)];
            int lh = lr.dim(1), lw = lr.dim(2);
            int y0 = static_cast<int>(rng.uniform_int(0, lh - lp));
            int x0 = static_cast<int>(rng.uniform_int(0, lw - lp));
            const float* plr = lr.ptr();
            const float* phr = hr.ptr();
            for (int ch = 0; ch < c; ++ch) {
                for (int y = 0; y < lp; ++y)
                    std::copy(plr + (static_cast<size_t>(ch) * lh + y0 + y) * lw + x0,
                              plr + (static_cast<size_t>(ch) * lh + y0 + y) * lw + x0 + lp,
                              xbuf.data() + ((static_cast<size_t>(b) * c + ch) * lp + y) * lp);
                for (int y = 0; y < hp; ++y)
                    std::copy(phr + (static_cast<size_t>(ch) * lh * scale + y0 * scale + y) *
                                        lw * scale + x0 * scale,
                              phr + (static_cast<size_t>(ch) * lh * scale + y0 * scale + y) *
                                        lw * scale + x0 * scale + hp,
                              ybuf.data() + ((static_cast<size_t>(b) * c + ch) * hp + y) * hp);
            }
        }
        Tensor<float> x = Tensor<float>::from({cfg.batch, c, lp, lp}, xbuf);
        Tensor<float> y = Tensor<float>::from({cfg.batch, c, hp, hp}, ybuf);

        ForwardResult fw = model_forward(model, x);
        Tensor<float> loss = dual_loss(fw.acts.out_s, model.has_fda ? &fw.fda.o_f : nullptr, y,
                                       static_cast<float>(cfg.lambda_freq));
        double loss_v = static_cast<double>(loss.item());
        DDSR_CHECK_NUM(std::isfinite(loss_v), "NaN loss at iteration " << it);
        result.losses.push_back(loss_v);

        if (it % cfg.eval_every == 0) record(it, loss_v);

        loss.backward();
        adam_step(model.params, opt, static_cast<float>(lr_schedule(it, cfg)));
    }
    result.final_eval = evaluate(model, eval_data);
    if (cfg.iters > 0)
        result.log.push_back(TrainRecord{cfg.iters, lr_schedule(cfg.iters - 1, cfg),
                                         result.losses.back(), result.final_eval.psnr,
                                         result.final_eval.ssim, result.final_eval.imag_residue,
                                         result.final_eval.psnr_spatial});
    return result;
}

std::vector<ProbeCurve> overfit_probe(const Model<float>& pretrained, const TrainConfig& base,
                                      const DegradationSpec& dspec, const std::vector<int>& ns) {
    std::vector<ProbeCurve> curves;
    // one shared held-out set, disjoint from every training subset
    DataSet eval_data = make_synthetic_dataset(base.n_eval_images, base.hr_size, dspec,
                                               base.seed, 100000);
    for (int n : ns) {
        DataSet train_data = make_synthetic_dataset(n, base.hr_size, dspec, base.seed, 0);
        for (Regime regime : {Regime::FT, Regime::DanP}) {
            TrainConfig cfg = base;
            cfg.regime = regime;
            cfg.n_train_images = n;
            RegimeSetup setup = prepare_regime(regime, pretrained.cfg, &pretrained, cfg.seed);
            TrainResult res = train_model(setup.model, cfg, train_data, eval_data);
            ProbeCurve curve;
            curve.n_images = n;
            curve.regime = regime;
            curve.log = res.log;
            curve.final_psnr = res.final_eval.psnr;
            curve.peak_psnr = 0;
            for (const auto& rec : res.log) curve.peak_psnr = std::max(curve.peak_psnr, rec.psnr);
            curves.push_back(std::move(curve));
        }
    }
    return curves;
}

template Tensor<float> dual_loss<float>(const Tensor<float>&, const Spectrum<float>*,
                                        const Tensor<float>&, float);
template Tensor<double> dual_loss<double>(const Tensor<double>&, const Spectrum<double>*,
                                          const Tensor<double>&, double);

}  // namespace ddsr
