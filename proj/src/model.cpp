#include "ddsr/model.hpp"

namespace ddsr {

std::vector<int> ModelConfig::shuffle_stages() const {
    switch (scale) {
        case 2: return {2};
        case 3: return {3};
        case 4: return {2, 2};
        case 8: return {2, 2, 2};
        default: DDSR_CHECK(false, "unsupported upsampling ratio " << scale);
    }
    return {};
}

void ModelConfig::validate() const {
    DDSR_CHECK(n_groups >= 1 && units_per_group >= 1, "config: need at least one group/unit");
    DDSR_CHECK(channels >= 1 && img_channels >= 1 && up_channels >= 1 && fda_channels >= 1,
               "config: channel counts must be positive");
    DDSR_CHECK(window >= 1, "config: window must be positive");
    DDSR_CHECK(scale == 2 || scale == 3 || scale == 4 || scale == 8,
               "config: scale must be one of {2,3,4,8}, got " << scale);
    DDSR_CHECK(m_sta >= 0 && m_sta <= units_per_group,
               "config: m_sta " << m_sta << " outside [0," << units_per_group << "]");
    DDSR_CHECK(lora_rank >= 0, "config: negative LoRA rank");
    DDSR_CHECK(lora_rank < channels, "config: LoRA rank " << lora_rank
                                         << " must be smaller than d=" << channels);
    DDSR_CHECK(lora_rank == 0 || lora_alpha > 0, "config: LoRA alpha must be positive");
    DDSR_CHECK(fda_stages >= 1 && fda_stages <= n_groups,
               "config: fda_stages " << fda_stages << " outside [1," << n_groups << "]");
}

bool ModelConfig::arch_equal(const ModelConfig& o) const {
    return n_groups == o.n_groups && units_per_group == o.units_per_group &&
           channels == o.channels && window == o.window && scale == o.scale &&
           img_channels == o.img_channels && up_channels == o.up_channels;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
    ModelConfig c;
    c.n_groups = 6;
    c.units_per_group = 6;
    c.channels = 180;
    c.window = 8;
    c.scale = 4;
    c.m_sta = 5;
    c.lora_rank = 4;
    c.lora_alpha = 4;
    c.fda_channels = 64;
    c.fda_stages = 6;
    c.up_channels = 64;
    return c;
}

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.n_groups = 2;
    c.units_per_group = 2;
    c.channels = 8;
    c.window = 4;
    c.scale = 2;
    c.m_sta = 1;
    c.lora_rank = 2;
    c.lora_alpha = 2;
    c.fda_channels = 4;
    c.fda_stages = 2;
    c.up_channels = 8;
    return c;
}

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;

template <typename T>
Tensor<T> init_weight(Shape shape, Rng& rng, double stddev) {
    std::vector<T> v(static_cast<size_t>(numel(shape)));
    for (auto& x : v) x = static_cast<T>(rng.truncated_normal(stddev));
    return Tensor<T>::from(std::move(shape), std::move(v));
}

// He-style fan-in scaling for convs; zero for layers that close a residual
// branch, so units, groups, and fusion blocks all start as the identity.
template <typename T>
void add_conv(ParamStore<T>& ps, const std::string& name, int co, int ci, int k, Rng& rng,
              bool zero_init = false) {
    if (zero_init) {
        ps.add(name + ".weight", Tensor<T>::zeros({co, ci, k, k}));
    } else {
        double stddev = std::sqrt(2.0 / (static_cast<double>(ci) * k * k));
        ps.add(name + ".weight", init_weight<T>({co, ci, k, k}, rng, stddev));
    }
    ps.add(name + ".bias", Tensor<T>::zeros({co}));
}

template <typename T>
void add_linear(ParamStore<T>& ps, const std::string& name, int din, int dout, Rng& rng,
                bool zero_init = false) {
    if (zero_init)
        ps.add(name + ".weight", Tensor<T>::zeros({din, dout}));
    else
        ps.add(name + ".weight", init_weight<T>({din, dout}, rng, kInitStd));
    ps.add(name + ".bias", Tensor<T>::zeros({dout}));
}

template <typename T>
void add_ln(ParamStore<T>& ps, const std::string& name, int d) {
    ps.add(name + ".gamma", Tensor<T>::filled({d}, T(1)));
    ps.add(name + ".beta", Tensor<T>::zeros({d}));
}

}  // namespace

template <typename T>
Model<T> build_model(const ModelConfig& cfg, uint64_t seed, bool with_fda) {
    cfg.validate();
    Model<T> model;
    model.cfg = cfg;
    model.has_fda = with_fda;
    Rng rng = Rng(seed).fork(0x6d6f64);  // model stream
    ParamStore<T>& ps = model.params;
    int d = cfg.channels, c = cfg.img_channels, u = cfg.up_channels, df = cfg.fda_channels;

    add_conv(ps, "head", d, c, 3, rng);
    for (int g = 0; g < cfg.n_groups; ++g) {
        std::string gp = "g" + std::to_string(g);
        for (int m = 0; m < cfg.units_per_group; ++m) {
            std::string up = gp + ".u" + std::to_string(m);
            add_ln(ps, up + ".ln1", d);
            add_linear(ps, up + ".wq", d, d, rng);
            add_linear(ps, up + ".wk", d, d, rng);
            add_linear(ps, up + ".wv", d, d, rng);
            add_linear(ps, up + ".wo", d, d, rng, /*zero_init=*/true);
            add_ln(ps, up + ".ln2", d);
            add_linear(ps, up + ".ffn1", d, cfg.ffn_hidden(), rng);
            add_linear(ps, up + ".ffn2", cfg.ffn_hidden(), d, rng, /*zero_init=*/true);
        }
        add_conv(ps, gp + ".conv", d, d, 3, rng, /*zero_init=*/true);
    }
    add_conv(ps, "up.pre", u, d, 3, rng);
    auto stages = cfg.shuffle_stages();
    for (size_t k = 0; k < stages.size(); ++k)
        add_conv(ps, "up.stage" + std::to_string(k), u * stages[k] * stages[k], u, 3, rng);
    add_conv(ps, "up.penult", u, u, 3, rng);
    add_conv(ps, "up.out", c, u, 3, rng);

    if (with_fda) {
        add_conv(ps, "fda.init", df, 2 * c, 3, rng);
        for (int k = 0; k < cfg.fda_stages; ++k) {
            std::string sp = "fda.stage" + std::to_string(k);
            add_conv(ps, sp + ".eproj", df, 2 * d, 1, rng);
            add_conv(ps, sp + ".res1.c1", df, df, 3, rng);
            add_conv(ps, sp + ".res1.c2", df, df, 3, rng, /*zero_init=*/true);
            add_conv(ps, sp + ".res2.c1", df, 2 * df, 3, rng);
            add_conv(ps, sp + ".res2.c2", df, df, 3, rng, /*zero_init=*/true);
        }
        add_conv(ps, "fda.up", df * cfg.scale * cfg.scale, df, 3, rng);
        add_conv(ps, "fda.fuse", df, 2 * u, 1, rng);
        add_conv(ps, "fda.out", 2 * c, df, 3, rng);
    }
    return model;
}

template <typename T>
void attach_lora(Model<T>& model, const std::vector<std::string>& targets, Rng& rng) {
    int r = model.cfg.lora_rank;
    if (r == 0) return;
    T scale = static_cast<T>(model.cfg.lora_scale());
    for (const auto& target : targets) {
        const Tensor<T>& base = model.params.at(target + ".weight");
        DDSR_CHECK(base.ndim() == 2, "lora target " << target << " is not a linear");
        int din = base.dim(0), dout = base.dim(1);
        DDSR_CHECK(r < din, "lora rank " << r << " not smaller than Din=" << din << " for "
                                          << target);
        std::vector<T> dv(static_cast<size_t>(din) * r);
        for (auto& x : dv) x = static_cast<T>(rng.normal(0.0, kInitStd));
        Tensor<T>& down = model.params.add(target + ".lora.down",
                                           Tensor<T>::from({din, r}, std::move(dv)));
        Tensor<T>& up = model.params.add(target + ".lora.up", Tensor<T>::zeros({r, dout}));
        model.adapters[target] = LoraAdapter<T>{down, up, scale};
    }
}

namespace {

template <typename T>
Tensor<T> linear_maybe_lora(const Tensor<T>& x, Model<T>& model, const std::string& name) {
    const Tensor<T>& w = model.params.at(name + ".weight");
    const Tensor<T>& b = model.params.at(name + ".bias");
    Tensor<T> y = linear(x, w, &b);
    auto it = model.adapters.find(name);
    if (it != model.adapters.end()) {
        const LoraAdapter<T>& a = it->second;
        Tensor<T> lo = linear(linear(x, a.down), a.up);
        y = add(y, mul_scalar(lo, a.scale));
    }
    return y;
}

}  // namespace

template <typename T>
Tensor<T> attention_unit(const Tensor<T>& feat, Model<T>& model, const std::string& prefix) {
    const ModelConfig& cfg = model.cfg;
    ParamStore<T>& ps = model.params;
    int n = feat.dim(0), d = feat.dim(1), h = feat.dim(2), w = feat.dim(3);
    DDSR_CHECK(d == cfg.channels, "attention_unit: feature has " << d << " channels, config says "
                                                                 << cfg.channels);
    int win = cfg.window;
    int pb = (win - h % win) % win, pr = (win - w % win) % win;
    Tensor<T> xp = (pb || pr) ? reflect_pad2d(feat, pb, pr) : feat;
    int hp = h + pb, wp = w + pr;

    Tensor<T> blocks = window_partition(xp, win);
    Tensor<T> h1 = layer_norm(blocks, ps.at(prefix + ".ln1.gamma"), ps.at(prefix + ".ln1.beta"),
                              static_cast<T>(kLnEps));
    Tensor<T> q = linear_maybe_lora(h1, model, prefix + ".wq");
    Tensor<T> k = linear(h1, ps.at(prefix + ".wk.weight"), &ps.at(prefix + ".wk.bias"));
    Tensor<T> v = linear_maybe_lora(h1, model, prefix + ".wv");
    Tensor<T> scores = mul_scalar(bmm_nt(q, k), static_cast<T>(1.0 / std::sqrt(double(d))));
    Tensor<T> ctx = bmm(softmax_lastdim(scores), v);
    Tensor<T> attn_out = linear(ctx, ps.at(prefix + ".wo.weight"), &ps.at(prefix + ".wo.bias"));
    Tensor<T> mid = add(blocks, attn_out);

    Tensor<T> h2 = layer_norm(mid, ps.at(prefix + ".ln2.gamma"), ps.at(prefix + ".ln2.beta"),
                              static_cast<T>(kLnEps));
    Tensor<T> f = linear(gelu(linear(h2, ps.at(prefix + ".ffn1.weight"),
                                     &ps.at(prefix + ".ffn1.bias"))),
                         ps.at(prefix + ".ffn2.weight"), &ps.at(prefix + ".ffn2.bias"));
    Tensor<T> out_blocks = add(mid, f);

    Tensor<T> merged = window_merge(out_blocks, win, n, d, hp, wp);
    if (pb || pr) merged = crop2d(merged, h, w);
    return merged;
}

template <typename T>
Tensor<T> group_forward(const Tensor<T>& feat, Model<T>& model, int group) {
    std::string gp = "g" + std::to_string(group);
    Tensor<T> cur = feat;
    for (int m = 0; m < model.cfg.units_per_group; ++m)
        cur = attention_unit(cur, model, gp + ".u" + std::to_string(m));
    Tensor<T> conv = conv2d(cur, model.params.at(gp + ".conv.weight"),
                            &model.params.at(gp + ".conv.bias"), 1);
    return add(feat, conv);
}

template <typename T>
BackboneActs<T> backbone_forward(const Tensor<T>& x, Model<T>& model) {
    const ModelConfig& cfg = model.cfg;
    ParamStore<T>& ps = model.params;
    DDSR_CHECK(x.ndim() == 4 && x.dim(1) == cfg.img_channels,
               "backbone_forward: input " << shape_str(x.shape()) << " must be [N,"
                                          << cfg.img_channels << ",h,w]");
    BackboneActs<T> acts;
    acts.f0 = conv2d(x, ps.at("head.weight"), &ps.at("head.bias"), 1);
    Tensor<T> cur = acts.f0;
    for (int g = 0; g < cfg.n_groups; ++g) {
        cur = group_forward(cur, model, g);
        acts.group_feats.push_back(cur);
    }
    acts.f_final = add(acts.f0, cur);
    Tensor<T> y = gelu(conv2d(acts.f_final, ps.at("up.pre.weight"), &ps.at("up.pre.bias"), 1));
    auto stages = cfg.shuffle_stages();
    for (size_t k = 0; k < stages.size(); ++k) {
        std::string sp = "up.stage" + std::to_string(k);
        y = pixel_shuffle(conv2d(y, ps.at(sp + ".weight"), &ps.at(sp + ".bias"), 1), stages[k]);
    }
    acts.penultimate_hr = conv2d(y, ps.at("up.penult.weight"), &ps.at("up.penult.bias"), 1);
    acts.out_s = conv2d(acts.penultimate_hr, ps.at("up.out.weight"), &ps.at("up.out.bias"), 1);
    return acts;
}

int64_t backbone_param_count(const ModelConfig& cfg) {
    int64_t d = cfg.channels, c = cfg.img_channels, u = cfg.up_channels, hid = cfg.ffn_hidden();
    int64_t unit = 2 * d + 4 * (d * d + d) + 2 * d + (d * hid + hid) + (hid * d + d);
    int64_t head = c * d * 9 + d;
    int64_t gconv = d * d * 9 + d;
    int64_t total = head + cfg.n_groups * (cfg.units_per_group * unit + gconv);
    total += d * u * 9 + u;  // up.pre
    for (int s : cfg.shuffle_stages()) total += u * (u * s * s) * 9 + u * s * s;
    total += u * u * 9 + u;  // up.penult
    total += u * c * 9 + c;  // up.out
    return total;
}

template Model<float> build_model<float>(const ModelConfig&, uint64_t, bool);
template Model<double> build_model<double>(const ModelConfig&, uint64_t, bool);
template void attach_lora<float>(Model<float>&, const std::vector<std::string>&, Rng&);
template void attach_lora<double>(Model<double>&, const std::vector<std::string>&, Rng&);
template Tensor<float> attention_unit<float>(const Tensor<float>&, Model<float>&,
                                             const std::string&);
template Tensor<double> attention_unit<double>(const Tensor<double>&, Model<double>&,
                                               const std::string&);
template Tensor<float> group_forward<float>(const Tensor<float>&, Model<float>&, int);
template Tensor<double> group_forward<double>(const Tensor<double>&, Model<double>&, int);
template BackboneActs<float> backbone_forward<float>(const Tensor<float>&, Model<float>&);
template BackboneActs<double> backbone_forward<double>(const Tensor<double>&, Model<double>&);
template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace ddsr
