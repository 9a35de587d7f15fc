#pragma once

#include <algorithm>
#include <map>

#include "ddsr/fft.hpp"
#include "ddsr/ops.hpp"

namespace ddsr {

// Architecture hyper-parameters. All integer-valued; serialized verbatim into
// the checkpoint header.
struct ModelConfig {
    int n_groups = 2;         // N feature-enhancement groups
    int units_per_group = 6;  // M attention units per group
    int channels = 48;        // d
    int window = 4;           // attention window side
    int scale = 2;            // upsampling ratio, one of {2,3,4,8}
    int img_channels = 3;     // c
    int m_sta = 5;            // frozen units per group under the default policy
    int lora_rank = 4;        // r; 0 disables adapters
    int lora_alpha = 4;       // adapter scale = alpha / r
    int fda_channels = 16;    // d^f
    int fda_stages = 2;       // n^f, consumes the last n^f group features
    int up_channels = 16;     // upsampler inner width

    int ffn_hidden() const { return 2 * channels; }
    double lora_scale() const { return lora_rank > 0 ? static_cast<double>(lora_alpha) / lora_rank : 0.0; }
    std::vector<int> shuffle_stages() const;
    void validate() const;
    bool arch_equal(const ModelConfig& o) const;

    static ModelConfig desk();
    static ModelConfig paper();
    static ModelConfig toy();
};

// Named parameter tensors in insertion order, with per-tensor freeze flags.
template <typename T>
class ParamStore {
public:
    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        DDSR_CHECK(!has(name), "duplicate parameter " << name);
        t.set_name(name);
        t.set_requires_grad(true);
        order_.push_back(name);
        auto [it, ok] = map_.emplace(name, std::move(t));
        (void)ok;
        return it->second;
    }
    bool has(const std::string& name) const { return map_.count(name) != 0; }
    Tensor<T>& at(const std::string& name) {
        auto it = map_.find(name);
        DDSR_CHECK(it != map_.end(), "unknown parameter " << name);
        return it->second;
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = map_.find(name);
        DDSR_CHECK(it != map_.end(), "unknown parameter " << name);
        return it->second;
    }
    const std::vector<std::string>& names() const { return order_; }
    void remove(const std::string& name) {
        DDSR_CHECK(has(name), "remove: unknown parameter " << name);
        map_.erase(name);
        order_.erase(std::find(order_.begin(), order_.end(), name));
    }
    void set_frozen(const std::string& name, bool frozen) {
        at(name).set_requires_grad(!frozen);
    }
    bool frozen(const std::string& name) const { return !at(name).requires_grad(); }
    void zero_grads() {
        for (const auto& n : order_) at(n).zero_grad();
    }

private:
    std::vector<std::string> order_;
    std::map<std::string, Tensor<T>> map_;
};

template <typename T>
struct LoraAdapter {
    Tensor<T> down;  // [Din, r]
    Tensor<T> up;    // [r, Dout]
    T scale;         // alpha / r
};

template <typename T>
struct Model {
    ModelConfig cfg;
    ParamStore<T> params;
    // keyed by the base weight name the adapter attaches to
    std::map<std::string, LoraAdapter<T>> adapters;
    bool has_fda = false;
};

// Backbone + (optionally) FDA parameters, freshly initialized: weights from a
// truncated normal (std 0.02, clipped at 2 sigma), biases zero, LN affine at
// identity.
template <typename T>
Model<T> build_model(const ModelConfig& cfg, uint64_t seed, bool with_fda);

// Adds zero-initialized (up = 0) adapters for the given base weight names.
template <typename T>
void attach_lora(Model<T>& model, const std::vector<std::string>& targets, Rng& rng);

template <typename T>
struct BackboneActs {
    Tensor<T> f0;
    std::vector<Tensor<T>> group_feats;  // F_n for n = 1..N
    Tensor<T> f_final;                   // F_0 + F_N
    Tensor<T> penultimate_hr;            // input of the output conv, HR resolution
    Tensor<T> out_s;                     // O^s
};

template <typename T>
Tensor<T> attention_unit(const Tensor<T>& feat, Model<T>& model, const std::string& prefix);

template <typename T>
Tensor<T> group_forward(const Tensor<T>& feat, Model<T>& model, int group);

template <typename T>
BackboneActs<T> backbone_forward(const Tensor<T>& x, Model<T>& model);

// number of parameters a freshly built backbone (no FDA, no adapters) carries
int64_t backbone_param_count(const ModelConfig& cfg);

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace ddsr
