#pragma once

#include "ddsr/model.hpp"

namespace ddsr {

// Bias-corrected Adam over a parameter store. Moments are kept per parameter
// name; frozen parameters are never touched. Parameters that received no
// gradient in an iteration are skipped entirely.
template <typename T>
struct AdamState {
    int64_t step = 0;
    T beta1 = static_cast<T>(0.9);
    T beta2 = static_cast<T>(0.99);
    T eps = static_cast<T>(1e-8);
    std::map<std::string, std::vector<T>> m;
    std::map<std::string, std::vector<T>> v;
};

// One update step at learning rate lr; clears the consumed gradients.
// Throws (naming the parameter) on a non-finite gradient.
template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, T lr);

}  // namespace ddsr
