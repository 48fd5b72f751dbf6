#pragma once

#include "pointtrack/transformer.hpp"

namespace pointtrack {

struct LossConfig {
    double gamma = 0.8;            // per-iteration discount
    double huber_delta = 6.0;      // px
    double occluded_weight = 0.2;  // occluded points count 1/5
    double conf_radius = 12.0;     // px; confidence target radius

    void validate() const {
        PTK_CHECK_PARAM(gamma > 0.0 && gamma <= 1.0, "discount must lie in (0,1]");
        PTK_CHECK_PARAM(huber_delta > 0.0 && conf_radius > 0.0 && occluded_weight >= 0.0,
                        "loss thresholds must be positive");
    }
};

/// Huber on the Euclidean residual between two 2-d points.
template <typename T>
T huber(T pred_x, T pred_y, T target_x, T target_y, T delta) {
    const T dx = pred_x - target_x, dy = pred_y - target_y;
    const T r = std::sqrt(dx * dx + dy * dy);
    return r <= delta ? T(0.5) * r * r : delta * (r - T(0.5) * delta);
}

/// Per-thread tallies of loss evaluations (lets callers assert which losses a
/// training loop actually touched).
struct LossCallCounters {
    int64_t track = 0, conf = 0, vis = 0;
};
inline LossCallCounters& loss_call_counters() {
    thread_local LossCallCounters c;
    return c;
}

namespace loss_detail {

template <typename T>
int64_t mask_count(const Tensor<T>& mask) {
    int64_t n = 0;
    for (int64_t i = 0; i < mask.numel(); ++i)
        if (mask[i] != T(0)) ++n;
    return n;
}

template <typename T>
Tensor<T> ones_mask(int64_t n, int64_t t) {
    return Tensor<T>::full({n, t}, T(1));
}

}  // namespace loss_detail

/// Discounted multi-iteration track loss: per iteration, the mean over
/// supervised cells of (1 if visible, occluded_weight if occluded) times the
/// Huber residual, weighted by gamma^(M-m). `mask` selects supervised cells.
template <typename T>
Var<T> track_loss(const std::vector<TrackState<T>>& states, const Tensor<T>& gt_tracks,
                  const Tensor<T>& gt_visibility, const LossConfig& cfg,
                  Tensor<T> mask = Tensor<T>()) {
    ++loss_call_counters().track;
    PTK_CHECK_PARAM(!states.empty(), "no refinement states");
    cfg.validate();
    const int64_t N = gt_tracks.dim(0), Tn = gt_tracks.dim(1);
    PTK_CHECK_SHAPE((gt_visibility.shape() == std::vector<int64_t>{N, Tn}), "visibility shape mismatch");
    if (!mask.defined()) mask = loss_detail::ones_mask<T>(N, Tn);
    PTK_CHECK_SHAPE(mask.shape() == gt_visibility.shape(), "mask shape mismatch");
    const int64_t count = loss_detail::mask_count(mask);

    Tensor<T> weights({N * Tn});
    for (int64_t i = 0; i < N * Tn; ++i)
        weights[i] =
            mask[i] == T(0) ? T(0) : (gt_visibility[i] != T(0) ? T(1) : T(cfg.occluded_weight));
    Var<T> wvar(weights, false);
    Tensor<T> target = gt_tracks.reshape({N * Tn, 2});

    const int M = static_cast<int>(states.size());
    Var<T> total(Tensor<T>::scalar(T(0)), false);
    for (int m = 1; m <= M; ++m) {
        const auto& st = states[static_cast<size_t>(m - 1)];
        PTK_CHECK_SHAPE((st.P.shape() == std::vector<int64_t>{N, Tn, 2}), "state shape mismatch");
        Var<T> residual = huber2(reshape(st.P, {N * Tn, 2}), target, T(cfg.huber_delta));
        Var<T> term = sum_all(vmul(residual, wvar));
        if (count > 0) term = mul_scalar(term, T(1) / static_cast<T>(count));
        total = vadd(total, mul_scalar(term, static_cast<T>(std::pow(cfg.gamma, M - m))));
    }
    return total;
}

/// Discounted BCE on the confidence logits. The target is recomputed from each
/// iteration's own track estimate: 1 when within conf_radius of ground truth.
template <typename T>
Var<T> conf_loss(const std::vector<TrackState<T>>& states, const Tensor<T>& gt_tracks,
                 const LossConfig& cfg, Tensor<T> mask = Tensor<T>()) {
    ++loss_call_counters().conf;
    PTK_CHECK_PARAM(!states.empty(), "no refinement states");
    cfg.validate();
    const int64_t N = gt_tracks.dim(0), Tn = gt_tracks.dim(1);
    if (!mask.defined()) mask = loss_detail::ones_mask<T>(N, Tn);
    const int64_t count = loss_detail::mask_count(mask);
    Var<T> mvar(mask, false);

    const int M = static_cast<int>(states.size());
    Var<T> total(Tensor<T>::scalar(T(0)), false);
    for (int m = 1; m <= M; ++m) {
        const auto& st = states[static_cast<size_t>(m - 1)];
        Tensor<T> target({N, Tn});
        for (int64_t i = 0; i < N; ++i)
            for (int64_t t = 0; t < Tn; ++t) {
                const T dx = st.P.val().at(i, t, 0) - gt_tracks.at(i, t, 0);
                const T dy = st.P.val().at(i, t, 1) - gt_tracks.at(i, t, 1);
                target.at(i, t) =
                    std::sqrt(dx * dx + dy * dy) < T(cfg.conf_radius) ? T(1) : T(0);
            }
        Var<T> term = sum_all(vmul(bce_with_logits(st.C, target), mvar));
        if (count > 0) term = mul_scalar(term, T(1) / static_cast<T>(count));
        total = vadd(total, mul_scalar(term, static_cast<T>(std::pow(cfg.gamma, M - m))));
    }
    return total;
}

/// Discounted BCE on the visibility logits against ground-truth visibility.
template <typename T>
Var<T> vis_loss(const std::vector<TrackState<T>>& states, const Tensor<T>& gt_visibility,
                const LossConfig& cfg, Tensor<T> mask = Tensor<T>()) {
    ++loss_call_counters().vis;
    PTK_CHECK_PARAM(!states.empty(), "no refinement states");
    cfg.validate();
    const int64_t N = gt_visibility.dim(0), Tn = gt_visibility.dim(1);
    if (!mask.defined()) mask = loss_detail::ones_mask<T>(N, Tn);
    const int64_t count = loss_detail::mask_count(mask);
    Var<T> mvar(mask, false);

    const int M = static_cast<int>(states.size());
    Var<T> total(Tensor<T>::scalar(T(0)), false);
    for (int m = 1; m <= M; ++m) {
        const auto& st = states[static_cast<size_t>(m - 1)];
        PTK_CHECK_SHAPE(st.V.shape() == gt_visibility.shape(), "visibility state shape mismatch");
        Var<T> term = sum_all(vmul(bce_with_logits(st.V, gt_visibility), mvar));
        if (count > 0) term = mul_scalar(term, T(1) / static_cast<T>(count));
        total = vadd(total, mul_scalar(term, static_cast<T>(std::pow(cfg.gamma, M - m))));
    }
    return total;
}

}  // namespace pointtrack
