#pragma once

#include "ddsr/data.hpp"
#include "ddsr/fda.hpp"
#include "ddsr/lora.hpp"
#include "ddsr/metrics.hpp"
#include "ddsr/optim.hpp"

namespace ddsr {

enum class Regime { Pretrain, ReT, FT, DanP, DanF };

const char* regime_name(Regime r);
Regime regime_from_name(const std::string& s);

struct TrainConfig {
    double lr0 = 2e-4;
    int halve_every = 2000;
    int patch = 24;  // LR patch side
    int batch = 4;
    int iters = 1000;
    double lambda_freq = 10.0;
    Regime regime = Regime::Pretrain;
    uint64_t seed = 7;
    int eval_every = 100;
    int n_train_images = 64;
    int n_eval_images = 8;
    int hr_size = 96;
    FreezePolicy policy = FreezePolicy::ShallowUnitsPerGroup;
    int budget = -1;  // freeze budget; -1 uses ModelConfig::m_sta

    void validate() const;
};

// lr0 * 0.5^floor(iter / halve_every)
double lr_schedule(int iter, const TrainConfig& cfg);

// Eq.-3 objective: per-element mean L1 in the spatial domain plus
// lambda * per-element mean L1 between O^f and fft2(Y) over the real and
// imaginary planes jointly. o_f == nullptr drops the frequency term.
template <typename T>
Tensor<T> dual_loss(const Tensor<T>& out_s, const Spectrum<T>* o_f, const Tensor<T>& y,
                    T lambda);

struct ForwardResult {
    BackboneActs<float> acts;
    FdaState<float> fda;   // populated when the model carries the FDA branch
    Tensor<float> scored;  // O for FDA models, O^s otherwise
};

ForwardResult model_forward(Model<float>& model, const Tensor<float>& x);

struct EvalResult {
    double psnr = 0;
    double ssim = 0;
    double psnr_spatial = 0;  // O^s head
    double psnr_bicubic = 0;
    double ssim_bicubic = 0;
    double high_band_err = 0;
    double imag_residue = 0;
    int n_images = 0;
};

EvalResult evaluate(Model<float>& model, const DataSet& data);

struct TrainRecord {
    int iter = 0;
    double lr = 0;
    double loss = 0;
    double psnr = 0;
    double ssim = 0;
    double imag_residue = 0;
    double psnr_spatial = 0;
};

struct TrainResult {
    std::vector<TrainRecord> log;
    std::vector<double> losses;  // one entry per iteration
    EvalResult final_eval;
};

struct RegimeSetup {
    Model<float> model;
    FreezePlan plan;  // budget 0 when nothing is frozen
    ParamLedger ledger;
};

// Builds the model/plan/adapters for a regime. pretrained is required for
// FT/DAN-P/DAN-F and must be architecture-compatible; ReT/pretrain start from
// random weights. policy/budget configure SPFT for DAN-P (budget < 0 uses
// cfg.m_sta).
RegimeSetup prepare_regime(Regime regime, const ModelConfig& cfg, const Model<float>* pretrained,
                           uint64_t seed,
                           FreezePolicy policy = FreezePolicy::ShallowUnitsPerGroup,
                           int budget = -1);

// Runs the training loop. Deterministic given (model state, cfg, data).
// Throws on a non-finite loss, naming the iteration.
TrainResult train_model(Model<float>& model, const TrainConfig& cfg, const DataSet& train_data,
                        const DataSet& eval_data);

struct ProbeCurve {
    int n_images = 0;
    Regime regime = Regime::FT;
    std::vector<TrainRecord> log;
    double peak_psnr = 0;
    double final_psnr = 0;
};

// Fig.-9-style probe: trains FT and DAN-P on shrinking subsets, one curve per
// (n, regime), on a shared held-out set.
std::vector<ProbeCurve> overfit_probe(const Model<float>& pretrained, const TrainConfig& base,
                                      const DegradationSpec& dspec, const std::vector<int>& ns);

}  // namespace ddsr
