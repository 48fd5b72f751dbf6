#pragma once

#include <cmath>
#include <vector>

#include "pointtrack/nn.hpp"

namespace pointtrack {

/// Decoupled weight decay Adam.
template <typename T>
class AdamW {
  public:
    struct Options {
        T beta1 = T(0.9);
        T beta2 = T(0.999);
        T eps = T(1e-8);
        T weight_decay = T(1e-5);
    };

    AdamW() = default;
    explicit AdamW(std::vector<Var<T>> params, Options opt = {})
        : params_(std::move(params)), opt_(opt) {
        slots_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            slots_[i].m = Tensor<T>(params_[i].shape());
            slots_[i].v = Tensor<T>(params_[i].shape());
        }
    }

    size_t num_params() const { return params_.size(); }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    T grad_norm() const {
        double sq = 0.0;
        for (const auto& p : params_) {
            const Tensor<T>& g = p.grad_or_empty();
            if (!g.defined()) continue;
            for (int64_t i = 0; i < g.numel(); ++i)
                sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
        }
        return static_cast<T>(std::sqrt(sq));
    }

    /// Scales all gradients so the global norm is at most max_norm. Returns the pre-clip norm.
    T clip_grad_norm(T max_norm) {
        const T norm = grad_norm();
        if (norm > max_norm && norm > T(0)) {
            const T scale = max_norm / norm;
            for (auto& p : params_) {
                Tensor<T>& g = const_cast<Tensor<T>&>(p.grad_or_empty());
                if (!g.defined()) continue;
                for (int64_t i = 0; i < g.numel(); ++i) g[i] *= scale;
            }
        }
        return norm;
    }

    void step(T lr) {
        ++t_;
        const T bc1 = T(1) - std::pow(opt_.beta1, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(opt_.beta2, static_cast<T>(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Var<T>& p = params_[i];
            const Tensor<T>& g = p.grad_or_empty();
            if (!g.defined()) continue;
            Tensor<T>& val = p.mutable_val();
            Tensor<T>& m = slots_[i].m;
            Tensor<T>& v = slots_[i].v;
            for (int64_t j = 0; j < val.numel(); ++j) {
                m[j] = opt_.beta1 * m[j] + (T(1) - opt_.beta1) * g[j];
                v[j] = opt_.beta2 * v[j] + (T(1) - opt_.beta2) * g[j] * g[j];
                const T mhat = m[j] / bc1;
                const T vhat = v[j] / bc2;
                val[j] -= lr * (mhat / (std::sqrt(vhat) + opt_.eps) + opt_.weight_decay * val[j]);
            }
        }
    }

  private:
    struct Slot {
        Tensor<T> m, v;
    };

    std::vector<Var<T>> params_;
    std::vector<Slot> slots_;
    Options opt_;
    int64_t t_ = 0;
};

struct LrSchedule {
    double base_lr = 5e-4;
    int64_t warmup_steps = 1000;  // 0 disables warm-up
    int64_t total_steps = 10000;
    double min_factor = 0.01;

    double at(int64_t step) const {
        if (warmup_steps > 0 && step < warmup_steps)
            return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
        const double span = static_cast<double>(std::max<int64_t>(1, total_steps - warmup_steps));
        const double progress =
            std::min(1.0, static_cast<double>(step - warmup_steps) / span);
        const double cos_factor = 0.5 * (1.0 + std::cos(M_PI * progress));
        return base_lr * (min_factor + (1.0 - min_factor) * cos_factor);
    }
};

}  // namespace pointtrack
