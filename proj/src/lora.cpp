#include "ddsr/lora.hpp"

#include <algorithm>
#include <cctype>

namespace ddsr {

const char* freeze_policy_name(FreezePolicy p) {
    switch (p) {
        case FreezePolicy::ShallowGroups: return "shallow_groups";
        case FreezePolicy::DeepUnitsPerGroup: return "deep_units_per_group";
        case FreezePolicy::ShallowUnitsPerGroup: return "shallow_units_per_group";
    }
    return "?";
}

FreezePolicy freeze_policy_from_name(const std::string& s) {
    if (s == "shallow_groups" || s == "shallow-groups") return FreezePolicy::ShallowGroups;
    if (s == "deep_units_per_group" || s == "deep-units")
        return FreezePolicy::DeepUnitsPerGroup;
    if (s == "shallow_units_per_group" || s == "shallow-units")
        return FreezePolicy::ShallowUnitsPerGroup;
    DDSR_CHECK(false, "unknown freeze policy '" << s << "'");
    return FreezePolicy::ShallowUnitsPerGroup;
}

FreezePlan make_freeze_plan(const ModelConfig& cfg, FreezePolicy policy, int budget) {
    int limit = policy == FreezePolicy::ShallowGroups ? cfg.n_groups : cfg.units_per_group;
    DDSR_CHECK(budget >= 0 && budget <= limit,
               "freeze budget " << budget << " outside [0," << limit << "] for policy "
                                << freeze_policy_name(policy));
    FreezePlan plan;
    plan.policy = policy;
    plan.budget = budget;
    if (budget == 0) return plan;  // full fine-tuning

    plan.frozen.push_back("head");
    for (int g = 0; g < cfg.n_groups; ++g) {
        std::string gp = "g" + std::to_string(g);
        plan.frozen.push_back(gp + ".conv");
        for (int m = 0; m < cfg.units_per_group; ++m) {
            bool freeze = false;
            switch (policy) {
                case FreezePolicy::ShallowGroups: freeze = g < budget; break;
                case FreezePolicy::DeepUnitsPerGroup: freeze = m >= cfg.units_per_group - budget; break;
                case FreezePolicy::ShallowUnitsPerGroup: freeze = m < budget; break;
            }
            if (!freeze) continue;
            std::string up = gp + ".u" + std::to_string(m);
            plan.frozen.push_back(up);
            plan.lora_targets.push_back(up + ".wq");
            plan.lora_targets.push_back(up + ".wv");
        }
    }
    return plan;
}

namespace {

bool name_has_prefix(const std::string& name, const std::string& prefix) {
    return name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0 &&
           name[prefix.size()] == '.';
}

}  // namespace

template <typename T>
void apply_freeze_plan(Model<T>& model, const FreezePlan& plan) {
    for (const auto& prefix : plan.frozen) {
        bool found = false;
        for (const auto& name : model.params.names()) {
            if (!name_has_prefix(name, prefix)) continue;
            if (name.find(".lora.") != std::string::npos) continue;  // adapters stay trainable
            model.params.set_frozen(name, true);
            found = true;
        }
        DDSR_CHECK(found, "freeze plan names missing parameter group '" << prefix << "'");
    }
}

template <typename T>
ParamLedger count_trainable(const Model<T>& model) {
    ParamLedger ledger;
    int64_t backbone = 0;
    // independent classification pass; every parameter must land in a class
    int64_t by_class[4] = {0, 0, 0, 0};  // backbone, lora, fda, (unused)
    for (const auto& name : model.params.names()) {
        const Tensor<T>& t = model.params.at(name);
        int64_t n = t.numel();
        ledger.total += n;
        if (t.requires_grad())
            ledger.trainable += n;
        else
            ledger.frozen += n;
        bool is_lora = name.find(".lora.") != std::string::npos;
        bool is_fda = name.rfind("fda.", 0) == 0;
        bool is_group = name.size() > 1 && name[0] == 'g' && std::isdigit(name[1]);
        bool is_backbone = !is_lora && !is_fda &&
                           (name.rfind("head.", 0) == 0 || is_group ||
                            name.rfind("up.", 0) == 0);
        DDSR_CHECK(is_lora || is_fda || is_backbone,
                   "count_trainable: unclassified parameter '" << name << "'");
        if (is_lora) {
            ledger.lora += n;
            by_class[1] += n;
        } else if (is_fda) {
            by_class[2] += n;
        } else {
            backbone += n;
            by_class[0] += n;
        }
    }
    DDSR_CHECK(by_class[0] + by_class[1] + by_class[2] == ledger.total,
               "count_trainable: classification does not cover the table");
    DDSR_CHECK(ledger.trainable + ledger.frozen == ledger.total,
               "count_trainable: trainable + frozen != total");
    int64_t expected_backbone = backbone_param_count(model.cfg);
    DDSR_CHECK(backbone == expected_backbone,
               "count_trainable: enumerated backbone " << backbone << " != analytic "
                                                        << expected_backbone);
    ledger.fraction_vs_ft = static_cast<double>(ledger.trainable) / static_cast<double>(backbone);
    return ledger;
}

template <typename T>
Tensor<T> lora_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b,
                       const LoraAdapter<T>& adapter) {
    DDSR_CHECK(adapter.down.dim(0) == w.dim(0) && adapter.up.dim(1) == w.dim(1) &&
                   adapter.down.dim(1) == adapter.up.dim(0),
               "lora_forward: adapter rank/shape mismatch");
    Tensor<T> y = linear(x, w, b);
    return add(y, mul_scalar(linear(linear(x, adapter.down), adapter.up), adapter.scale));
}

template <typename T>
Tensor<T> merge_lora(const Tensor<T>& w, const LoraAdapter<T>& adapter) {
    int din = w.dim(0), dout = w.dim(1), r = adapter.down.dim(1);
    std::vector<T> merged(w.data());
    const T* pd = adapter.down.ptr();
    const T* pu = adapter.up.ptr();
    for (int i = 0; i < din; ++i)
        for (int k = 0; k < r; ++k) {
            T dik = pd[i * r + k] * adapter.scale;
            for (int j = 0; j < dout; ++j)
                merged[static_cast<size_t>(i) * dout + j] += dik * pu[k * dout + j];
        }
    return Tensor<T>::from(w.shape(), std::move(merged));
}

template <typename T>
void merge_all_lora(Model<T>& model) {
    for (auto& [target, adapter] : model.adapters) {
        Tensor<T>& w = model.params.at(target + ".weight");
        Tensor<T> merged = merge_lora(w, adapter);
        w.data() = merged.data();
        model.params.remove(target + ".lora.down");
        model.params.remove(target + ".lora.up");
    }
    model.adapters.clear();
}

template void apply_freeze_plan<float>(Model<float>&, const FreezePlan&);
template void apply_freeze_plan<double>(Model<double>&, const FreezePlan&);
template ParamLedger count_trainable<float>(const Model<float>&);
template ParamLedger count_trainable<double>(const Model<double>&);
template Tensor<float> lora_forward<float>(const Tensor<float>&, const Tensor<float>&,
                                           const Tensor<float>*, const LoraAdapter<float>&);
template Tensor<double> lora_forward<double>(const Tensor<double>&, const Tensor<double>&,
                                             const Tensor<double>*, const LoraAdapter<double>&);
template Tensor<float> merge_lora<float>(const Tensor<float>&, const LoraAdapter<float>&);
template Tensor<double> merge_lora<double>(const Tensor<double>&, const LoraAdapter<double>&);
template void merge_all_lora<float>(Model<float>&);
template void merge_all_lora<double>(Model<double>&);

}  // namespace ddsr
