#include "ddsr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ddsr {

GradCheckResult grad_check(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
    std::vector<Tensor<double>> inputs, int64_t max_coords, uint64_t seed) {
    for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.zero_grad();
    }

    Tensor<double> out = f(inputs);
    Rng wrng = Rng(seed).fork(0xabc);
    std::vector<double> w(static_cast<size_t>(out.numel()));
    for (auto& v : w) v = wrng.uniform(-1.0, 1.0);
    Tensor<double> weights = Tensor<double>::from(out.shape(), w);

    auto project = [&](const Tensor<double>& t) {
        double acc = 0;
        const auto& d = t.data();
        for (size_t i = 0; i < d.size(); ++i) acc += d[i] * w[i];
        return acc;
    };

    Tensor<double> loss = sum_all(mul(out, weights));
    loss.backward();

    // snapshot every AD gradient up front; re-running f below may clear them
    std::vector<std::vector<double>> ad_grads(inputs.size());
    for (size_t which = 0; which < inputs.size(); ++which) {
        DDSR_CHECK(inputs[which].has_grad(),
                   "grad_check: input " << which << " received no gradient");
        ad_grads[which] = inputs[which].grad();
    }

    GradCheckResult result;
    Rng pick = Rng(seed).fork(0xdef);
    for (size_t which = 0; which < inputs.size(); ++which) {
        Tensor<double>& x = inputs[which];
        const std::vector<double>& ad = ad_grads[which];
        int64_t n = x.numel();
        std::vector<int64_t> coords;
        if (max_coords < 0 || n <= max_coords) {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (int64_t k = 0; k < max_coords; ++k)
                coords.push_back(pick.uniform_int(0, n - 1));
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        }
        NoGradGuard ng;
        for (int64_t i : coords) {
            double orig = x.data()[static_cast<size_t>(i)];
            double h = 1e-4 * std::max(1.0, std::abs(orig));
            x.data()[static_cast<size_t>(i)] = orig + h;
            double lp = project(f(inputs));
            x.data()[static_cast<size_t>(i)] = orig - h;
            double lm = project(f(inputs));
            x.data()[static_cast<size_t>(i)] = orig;
            double fd = (lp - lm) / (2 * h);
            double g = ad[static_cast<size_t>(i)];
            double rel = std::abs(fd - g) / std::max(std::abs(fd) + std::abs(g), 1.0);
            result.max_rel_error = std::max(result.max_rel_error, rel);
            ++result.coords_checked;
        }
    }
    return result;
}

}  // namespace ddsr
