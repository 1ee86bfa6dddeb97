#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "pf/tensor.hpp"

namespace pf {

struct AdamState {
    std::vector<std::vector<double>> m, v;  // one entry per parameter tensor
    std::uint64_t t = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(std::span<Tensor* const> params, double lr) {
        AdamState s;
        s.lr = lr;
        for (const Tensor* p : params) {
            s.m.emplace_back(p->size(), 0.0);
            s.v.emplace_back(p->size(), 0.0);
        }
        return s;
    }
};

// Bias-corrected Adam update from each parameter's accumulated grad. A tensor
// with no grad is treated as having a zero gradient.
inline void adam_step(AdamState& s, std::span<Tensor* const> params) {
    if (params.size() != s.m.size()) throw DimensionError("adam_step: parameter count does not match state");
    ++s.t;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        auto& m = s.m[i];
        auto& v = s.v[i];
        if (m.size() != p.size()) throw DimensionError("adam_step: moment shape does not mirror parameter");
        if (!p.grad.empty() && p.grad.size() != p.size()) throw DimensionError("adam_step: grad shape mismatch");
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double g = p.grad.empty() ? 0.0 : p.grad[k];
            m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g;
            v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g * g;
            const double mh = m[k] / c1;
            const double vh = v[k] / c2;
            p.data[k] -= s.lr * mh / (std::sqrt(vh) + s.eps);
        }
    }
}

inline void zero_grads(std::span<Tensor* const> params) {
    for (Tensor* p : params) p->zero_grad();
}

}  // namespace pf
