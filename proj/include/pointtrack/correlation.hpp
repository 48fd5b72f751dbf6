#pragma once

#include "pointtrack/config.hpp"
#include "pointtrack/nn.hpp"
#include "pointtrack/ops_sample.hpp"

namespace pointtrack {

/// Square grid of bilinearly sampled feature vectors around one point at one
/// pyramid scale. Offsets delta with ||delta||_inf <= radius, row-major
/// (dy outer, dx inner), so index a = (dy+radius)*(2*radius+1) + (dx+radius).
template <typename T>
struct Neighborhood {
    Tensor<T> features;  // [(2*radius+1)^2, d]
    int radius = 0;
    int scale = 1;

    int64_t count() const { return features.dim(0); }
    int64_t channels() const { return features.dim(1); }
};

/// Samples one neighborhood from an NHWC map [h,w,d]. `center` is in pixel
/// coordinates of the original frame; `divisor` converts to this scale's grid.
/// Out-of-bounds samples clamp to the border texel.
template <typename T>
Neighborhood<T> sample_neighborhood(const Tensor<T>& map, T center_x, T center_y, T divisor,
                                    int radius, int scale = 1) {
    PTK_CHECK_SHAPE(map.ndim() == 3, "sample_neighborhood expects an [h,w,d] map");
    PTK_CHECK_PARAM(radius >= 0, "negative neighborhood radius");
    PTK_CHECK_PARAM(std::isfinite(static_cast<double>(center_x)) &&
                        std::isfinite(static_cast<double>(center_y)),
                    "non-finite center");
    const int64_t h = map.dim(0), w = map.dim(1), d = map.dim(2);
    const int64_t side = 2 * static_cast<int64_t>(radius) + 1;
    Neighborhood<T> nb;
    nb.radius = radius;
    nb.scale = scale;
    nb.features = Tensor<T>({side * side, d});
    const T xs = center_x / divisor, ys = center_y / divisor;
    T* dst = nb.features.data();
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            sample_detail::bilinear_at(map.data(), h, w, d, xs + static_cast<T>(dx),
                                       ys + static_cast<T>(dy), dst);
            dst += d;
        }
    return nb;
}

/// All pairwise inner products between two neighborhoods of the same shape.
/// out[a*K2 + b] = <query[a], track[b]> over the d channels.
template <typename T>
Tensor<T> corr4d(const Neighborhood<T>& query, const Neighborhood<T>& track) {
    PTK_CHECK_SHAPE(query.radius == track.radius && query.channels() == track.channels() &&
                        query.scale == track.scale,
                    "corr4d neighborhoods disagree in radius, channels, or scale");
    const int64_t k2 = query.count(), d = query.channels();
    Tensor<T> out({k2 * k2});
    gemm(query.features.data(), track.features.data(), out.data(), k2, d, k2, false, true);
    return out;
}

/// Shared-weight MLP that projects each scale's flattened 4D correlation to p
/// values; outputs are concatenated in scale order.
template <typename T>
class CorrProjector {
  public:
    CorrProjector() = default;
    CorrProjector(const ModelConfig& cfg, Rng& rng) {
        mlp_ = Mlp<T>({cfg.corr_len(), cfg.corr_hidden, cfg.corr_hidden, cfg.p}, rng);
    }

    /// per_scale: S tensors shaped [..., corr_len]; returns [..., p*S].
    Var<T> project(const std::vector<Var<T>>& per_scale) const {
        PTK_CHECK_SHAPE(!per_scale.empty(), "project_corr needs at least one scale");
        std::vector<Var<T>> outs;
        outs.reserve(per_scale.size());
        for (const auto& c : per_scale) {
            PTK_CHECK_SHAPE(c.dim(-1) == mlp_.layers.front().in_dim(),
                            "correlation length mismatch: got ", c.dim(-1), ", expected ",
                            mlp_.layers.front().in_dim());
            outs.push_back(mlp_.forward(c));
        }
        return concat(outs, -1);
    }

    const Mlp<T>& mlp() const { return mlp_; }

    void collect(const std::string& prefix, ParamList<T>& out) { mlp_.collect(prefix, out); }

  private:
    Mlp<T> mlp_;
};

}  // namespace pointtrack
