#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "w2vbert/tensor.hpp"

namespace w2v {

// Central-difference verification of reverse-mode gradients.
// `f` rebuilds the scalar loss from the current values of `points` on every
// call; it must be deterministic (checked by double evaluation).
inline double finite_diff_check(const std::function<Tensor<double>()>& f,
                                std::vector<Tensor<double>> points, double epsilon = 1e-5) {
    for (auto& p : points) p.set_requires_grad(true);

    Tensor<double> loss = f();
    {
        Tensor<double> loss2 = f();
        if (loss.item() != loss2.item())
            throw TensorError("finite_diff_check: function is not deterministic under re-evaluation");
    }
    backward(loss);

    std::vector<std::vector<double>> analytic;
    for (auto& p : points)
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>((size_t)p.size(), 0.0));

    double max_rel = 0.0;
    for (size_t pi = 0; pi < points.size(); ++pi) {
        auto& vals = points[pi].values_mut();
        for (size_t i = 0; i < vals.size(); ++i) {
            double orig = vals[i];
            vals[i] = orig + epsilon;
            double fp = f().item();
            vals[i] = orig - epsilon;
            double fm = f().item();
            vals[i] = orig;
            double cd = (fp - fm) / (2.0 * epsilon);
            double a = analytic[pi][i];
            // the floor keeps central-difference cancellation noise
            // (~|f| * eps_machine / epsilon) from dominating near-zero grads
            double rel = std::fabs(a - cd) / std::max({std::fabs(a), std::fabs(cd), 1e-3});
            max_rel = std::max(max_rel, rel);
        }
        points[pi].clear_grad();
    }
    return max_rel;
}

} // namespace w2v
