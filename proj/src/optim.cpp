#include "ddsr/optim.hpp"

#include <cmath>

namespace ddsr {

template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, T lr) {
    DDSR_CHECK(lr > T(0), "adam_step: learning rate must be positive");
    state.step += 1;
    double t = static_cast<double>(state.step);
    double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), t);
    double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), t);
    for (const auto& name : params.names()) {
        Tensor<T>& p = params.at(name);
        if (!p.requires_grad() || !p.has_grad()) continue;
        const std::vector<T>& g = p.grad();
        for (size_t i = 0; i < g.size(); ++i)
            DDSR_CHECK_NUM(std::isfinite(static_cast<double>(g[i])),
                       "non-finite gradient in parameter '" << name << "' (element " << i
                                                            << ") at step " << state.step);
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) {
            m.assign(g.size(), T(0));
            v.assign(g.size(), T(0));
        }
        T b1 = state.beta1, b2 = state.beta2;
        T* pd = p.ptr();
        for (size_t i = 0; i < g.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            double mhat = static_cast<double>(m[i]) / bc1;
            double vhat = static_cast<double>(v[i]) / bc2;
            pd[i] -= static_cast<T>(static_cast<double>(lr) * mhat /
                                    (std::sqrt(vhat) + static_cast<double>(state.eps)));
        }
        p.zero_grad();
    }
}

template void adam_step<float>(ParamStore<float>&, AdamState<float>&, float);
template void adam_step<double>(ParamStore<double>&, AdamState<double>&, double);

}  // namespace ddsr
