#pragma once

#include "ddsr/ops.hpp"

namespace ddsr {

// Compares reverse-mode gradients against central finite differences, with
// the loss taken as a fixed random projection of f's output. Perturbation per
// element is 1e-4 * max(1, |x|). Returns the max relative error
// |ad - fd| / max(|ad| + |fd|, 1) over all checked coordinates.
//
// Meant to run at double precision. When an input has more elements than
// max_coords, a deterministic random subset of its coordinates is checked.
struct GradCheckResult {
    double max_rel_error = 0.0;
    int64_t coords_checked = 0;
};

GradCheckResult grad_check(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
    std::vector<Tensor<double>> inputs, int64_t max_coords = -1, uint64_t seed = 17);

}  // namespace ddsr
