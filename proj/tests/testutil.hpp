#pragma once

#include <functional>
#include <vector>

#include "pointtrack/ops.hpp"
#include "pointtrack/rng.hpp"

namespace ptkt {

using pointtrack::Rng;
using pointtrack::Tensor;
using pointtrack::Var;

template <typename T>
Tensor<T> random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
Tensor<T> random_normal_tensor(std::vector<int64_t> shape, Rng& rng, double stddev = 1.0) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, stddev));
    return t;
}

/// Central-difference check of d(scalar f)/d(inputs) against the tape.
/// `f` rebuilds the graph from the current input values on every call.
/// Returns the max relative error over `samples` coordinates per input.
inline double fd_check(const std::function<pointtrack::Var<double>(void)>& f,
                       std::vector<pointtrack::Var<double>> inputs, Rng& rng, int samples = 12,
                       double h = 1e-6) {
    Var<double> out = f();
    if (out.numel() != 1) throw std::runtime_error("fd_check expects a scalar output");
    for (auto& in : inputs) in.zero_grad();
    out.backward();

    double worst = 0.0;
    for (auto& in : inputs) {
        const Tensor<double>& g = in.grad_or_empty();
        Tensor<double>& v = in.mutable_val();
        const int64_t n = v.numel();
        const int k = static_cast<int>(std::min<int64_t>(samples, n));
        auto picks = rng.sample_without_replacement(n, k);
        for (int64_t j : picks) {
            const double orig = v[j];
            const double step = h * std::max(1.0, std::abs(orig));
            v[j] = orig + step;
            const double fp = f().val()[0];
            v[j] = orig - step;
            const double fm = f().val()[0];
            v[j] = orig;
            const double fd = (fp - fm) / (2.0 * step);
            const double an = g.defined() ? g[j] : 0.0;
            const double rel = std::abs(an - fd) / std::max(std::abs(an) + std::abs(fd), 1e-3);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace ptkt
