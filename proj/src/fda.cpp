#include "ddsr/fda.hpp"

namespace ddsr {

namespace {

template <typename T>
Tensor<T> spectrum_channels(const Tensor<T>& x) {
    Spectrum<T> s = fft2(x);
    return concat_channels(s.real, s.imag);
}

// conv -> GeLU -> conv
template <typename T>
Tensor<T> residual_path(const Tensor<T>& x, Model<T>& model, const std::string& prefix) {
    ParamStore<T>& ps = model.params;
    Tensor<T> h = gelu(conv2d(x, ps.at(prefix + ".c1.weight"), &ps.at(prefix + ".c1.bias"), 1));
    return conv2d(h, ps.at(prefix + ".c2.weight"), &ps.at(prefix + ".c2.bias"), 1);
}

}  // namespace

template <typename T>
Tensor<T> init_freq_feature(const Tensor<T>& x, Model<T>& model) {
    DDSR_CHECK(model.has_fda, "model has no FDA branch");
    return conv2d(spectrum_channels(x), model.params.at("fda.init.weight"),
                  &model.params.at("fda.init.bias"), 1);
}

template <typename T>
Tensor<T> fusion_block(const Tensor<T>& prev, const Tensor<T>& group_feat, Model<T>& model,
                       int stage) {
    DDSR_CHECK(stage >= 0 && stage < model.cfg.fda_stages,
               "fusion_block: stage " << stage << " out of range [0," << model.cfg.fda_stages
                                      << ")");
    ParamStore<T>& ps = model.params;
    std::string sp = "fda.stage" + std::to_string(stage);
    Tensor<T> e = conv2d(spectrum_channels(group_feat), ps.at(sp + ".eproj.weight"),
                         &ps.at(sp + ".eproj.bias"), 0);
    Tensor<T> refined = add(prev, residual_path(prev, model, sp + ".res1"));
    Tensor<T> merged = residual_path(concat_channels(refined, e), model, sp + ".res2");
    return add(refined, merged);
}

template <typename T>
Spectrum<T> freq_upsample(const Tensor<T>& feat, const Tensor<T>& penultimate_hr,
                          Model<T>& model) {
    const ModelConfig& cfg = model.cfg;
    ParamStore<T>& ps = model.params;
    Tensor<T> up = pixel_shuffle(
        conv2d(feat, ps.at("fda.up.weight"), &ps.at("fda.up.bias"), 1), cfg.scale);
    DDSR_CHECK(up.dim(2) == penultimate_hr.dim(2) && up.dim(3) == penultimate_hr.dim(3),
               "freq_upsample: FDA path " << up.dim(2) << "x" << up.dim(3)
                                          << " vs penultimate " << penultimate_hr.dim(2) << "x"
                                          << penultimate_hr.dim(3));
    Tensor<T> bridge = conv2d(spectrum_channels(penultimate_hr), ps.at("fda.fuse.weight"),
                              &ps.at("fda.fuse.bias"), 0);
    Tensor<T> fused = add(up, bridge);
    Tensor<T> of = conv2d(fused, ps.at("fda.out.weight"), &ps.at("fda.out.bias"), 1);
    int c = cfg.img_channels;
    return Spectrum<T>{slice_channels(of, 0, c), slice_channels(of, c, 2 * c)};
}

template <typename T>
FdaState<T> fda_forward(const Tensor<T>& x, const BackboneActs<T>& acts, Model<T>& model) {
    const ModelConfig& cfg = model.cfg;
    DDSR_CHECK(static_cast<int>(acts.group_feats.size()) == cfg.n_groups,
               "fda_forward: expected " << cfg.n_groups << " group features");
    FdaState<T> state;
    state.f0f = init_freq_feature(x, model);
    Tensor<T> cur = state.f0f;
    int first = cfg.n_groups - cfg.fda_stages;
    for (int k = 0; k < cfg.fda_stages; ++k) {
        cur = fusion_block(cur, acts.group_feats[static_cast<size_t>(first + k)], model, k);
        state.stage_feats.push_back(cur);
    }
    state.o_f = freq_upsample(cur, acts.penultimate_hr, model);
    auto inv = ifft2(state.o_f);
    state.o = inv.out;
    state.imag_residue = inv.imag_residue;
    return state;
}

#define DDSR_INSTANTIATE(T)                                                                     \
    template Tensor<T> init_freq_feature<T>(const Tensor<T>&, Model<T>&);                       \
    template Tensor<T> fusion_block<T>(const Tensor<T>&, const Tensor<T>&, Model<T>&, int);     \
    template Spectrum<T> freq_upsample<T>(const Tensor<T>&, const Tensor<T>&, Model<T>&);       \
    template FdaState<T> fda_forward<T>(const Tensor<T>&, const BackboneActs<T>&, Model<T>&);

DDSR_INSTANTIATE(float)
DDSR_INSTANTIATE(double)
#undef DDSR_INSTANTIATE

}  // namespace ddsr
