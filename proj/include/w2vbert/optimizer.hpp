#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "w2vbert/tensor.hpp"

namespace w2v {

// Inverse-sqrt schedule with linear warmup:
//   lr(step) = peak_lr * min(step / warmup, sqrt(warmup / step))
struct LrSchedule {
    double peak_lr = 1e-3;
    int warmup_steps = 200;
};

inline double lr_at(const LrSchedule& s, int64_t step) {
    if (step < 1) throw TensorError("lr_at: step must be >= 1, got " + std::to_string(step));
    double warm = (double)step / (double)s.warmup_steps;
    double decay = std::sqrt((double)s.warmup_steps / (double)step);
    return s.peak_lr * std::min(warm, decay);
}

template <typename T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    int64_t step = 0;
    std::map<std::string, std::vector<T>> m;
    std::map<std::string, std::vector<T>> v;
};

// One bias-corrected Adam step over a named parameter set. Gradients are read
// from the tensors' accumulated grads; parameters are updated in place.
template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params, AdamState<T>& state, double lr) {
    if (lr <= 0) throw TensorError("adam_step: lr must be positive");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, (double)state.step);
    const double bc2 = 1.0 - std::pow(state.beta2, (double)state.step);
    for (auto& [name, p] : params) {
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m.assign((size_t)p.size(), T(0));
        if (v.empty()) v.assign((size_t)p.size(), T(0));
        if (!p.has_grad()) continue; // parameter unused this step
        const std::vector<T>& g = p.grad();
        std::vector<T>& w = p.values_mut();
        for (size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite((double)g[i]))
                throw TensorError("adam_step: NaN/Inf gradient in parameter '" + name + "'");
            m[i] = (T)(state.beta1 * m[i] + (1.0 - state.beta1) * g[i]);
            v[i] = (T)(state.beta2 * v[i] + (1.0 - state.beta2) * (double)g[i] * g[i]);
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            w[i] -= (T)(lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

} // namespace w2v
