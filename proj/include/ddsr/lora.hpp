#pragma once

#include "ddsr/model.hpp"

namespace ddsr {

enum class FreezePolicy { ShallowGroups, DeepUnitsPerGroup, ShallowUnitsPerGroup };

const char* freeze_policy_name(FreezePolicy p);
FreezePolicy freeze_policy_from_name(const std::string& s);

// A full classification of the backbone's parameters. budget counts frozen
// groups (ShallowGroups) or frozen units per group (the other two policies).
// budget 0 is full fine-tuning: nothing frozen at all. For budget > 0 the conv
// head and the group-level convs are frozen under every policy; the upsampler
// is always trainable.
struct FreezePlan {
    FreezePolicy policy = FreezePolicy::ShallowUnitsPerGroup;
    int budget = 0;
    std::vector<std::string> frozen;        // unit prefixes plus head/group convs
    std::vector<std::string> lora_targets;  // q/v linear prefixes inside frozen units
};

FreezePlan make_freeze_plan(const ModelConfig& cfg, FreezePolicy policy, int budget);

// Marks the plan's parameters frozen in the store (every name must exist).
template <typename T>
void apply_freeze_plan(Model<T>& model, const FreezePlan& plan);

struct ParamLedger {
    int64_t total = 0;
    int64_t trainable = 0;
    int64_t frozen = 0;
    int64_t lora = 0;
    double fraction_vs_ft = 0.0;  // trainable / full-fine-tuning backbone count
};

// Counts from the live requires_grad flags, cross-checked against an
// independent enumeration of the parameter table; throws on any parameter the
// classifier cannot place.
template <typename T>
ParamLedger count_trainable(const Model<T>& model);

// y = x W + b + scale * (x down) up; base excluded from the optimizer,
// adapter included. (The model forward consults adapters automatically; this
// free function exists for direct use and tests.)
template <typename T>
Tensor<T> lora_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b,
                       const LoraAdapter<T>& adapter);

// W' = W + scale * down * up
template <typename T>
Tensor<T> merge_lora(const Tensor<T>& w, const LoraAdapter<T>& adapter);

// Folds every adapter into its base weight and drops the adapter entries.
template <typename T>
void merge_all_lora(Model<T>& model);

}  // namespace ddsr
