#pragma once

#include "pointtrack/config.hpp"
#include "pointtrack/nn.hpp"

namespace pointtrack {

/// Per-frame feature maps at `scales` halving resolutions, NHWC.
/// maps[s]: [T, H/(k*2^s'), W/(k*2^s'), d] with s' = 0..scales-1.
template <typename T>
struct FeaturePyramid {
    std::vector<Var<T>> maps;
    int k = 4;
    int64_t d = 0;

    int scales() const { return static_cast<int>(maps.size()); }
    int64_t frames() const { return maps.empty() ? 0 : maps[0].dim(0); }
};

/// Converts a scene video tensor [T,3,H,W] to the NHWC layout the net consumes.
template <typename T>
Tensor<T> video_to_nhwc(const Tensor<float>& video) {
    const int64_t Tn = video.dim(0), C = video.dim(1), H = video.dim(2), W = video.dim(3);
    Tensor<T> out({Tn, H, W, C});
    for (int64_t t = 0; t < Tn; ++t)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x)
                    out.at(t, y, x, c) = static_cast<T>(video.at(t, c, y, x));
    return out;
}

/// Convolutional trunk: log2(k) stride-2 blocks down to the base resolution,
/// then residual blocks; coarser scales are average-pooled from the base map.
/// Every frame is processed independently.
template <typename T>
class FeatureNet {
  public:
    FeatureNet() = default;

    FeatureNet(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
        int64_t ch_in = 3;
        int64_t ch_out = cfg.d / 2;
        for (int s = 1; s < cfg.k; s *= 2) {
            if (s * 2 >= cfg.k) ch_out = cfg.d;
            stem_.push_back({Conv2dLayer<T>(3, 3, ch_in, ch_out, 2, 1, rng), InstanceNorm2d<T>(ch_out)});
            ch_in = ch_out;
            ch_out = cfg.d;
        }
        for (int b = 0; b < cfg.trunk_blocks; ++b)
            blocks_.push_back({Conv2dLayer<T>(3, 3, cfg.d, cfg.d, 1, 1, rng),
                               InstanceNorm2d<T>(cfg.d),
                               Conv2dLayer<T>(3, 3, cfg.d, cfg.d, 1, 1, rng),
                               InstanceNorm2d<T>(cfg.d)});
    }

    /// video: [T,H,W,3] with values in [0,1]. H and W must divide k*2^(scales-1).
    FeaturePyramid<T> forward(const Var<T>& video) const {
        PTK_CHECK_SHAPE(video.val().ndim() == 4 && video.dim(3) == 3,
                        "feature net expects [T,H,W,3] video");
        const int64_t H = video.dim(1), W = video.dim(2);
        const int64_t div = static_cast<int64_t>(cfg_.k) << (cfg_.scales - 1);
        PTK_CHECK_SHAPE(H % div == 0 && W % div == 0, "video dims ", H, "x", W,
                        " not divisible by ", div, "; pad or resize first");

        Var<T> x = add_scalar(mul_scalar(video, T(2)), T(-1));  // [0,1] -> [-1,1]
        for (const auto& s : stem_) x = relu(s.norm.forward(s.conv.forward(x)));
        for (const auto& b : blocks_) {
            Var<T> h = relu(b.n1.forward(b.c1.forward(x)));
            h = b.n2.forward(b.c2.forward(h));
            x = relu(vadd(x, h));
        }

        FeaturePyramid<T> pyr;
        pyr.k = cfg_.k;
        pyr.d = cfg_.d;
        pyr.maps.push_back(x);
        for (int s = 1; s < cfg_.scales; ++s) pyr.maps.push_back(avg_pool2d(pyr.maps.back(), 2));
        return pyr;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (size_t i = 0; i < stem_.size(); ++i) {
            stem_[i].conv.collect(prefix + ".stem" + std::to_string(i), out);
            stem_[i].norm.collect(prefix + ".stem" + std::to_string(i) + ".norm", out);
        }
        for (size_t i = 0; i < blocks_.size(); ++i) {
            const std::string bp = prefix + ".block" + std::to_string(i);
            blocks_[i].c1.collect(bp + ".c1", out);
            blocks_[i].n1.collect(bp + ".n1", out);
            blocks_[i].c2.collect(bp + ".c2", out);
            blocks_[i].n2.collect(bp + ".n2", out);
        }
    }

  private:
    struct StemStage {
        Conv2dLayer<T> conv;
        InstanceNorm2d<T> norm;
    };
    struct ResBlock {
        Conv2dLayer<T> c1;
        InstanceNorm2d<T> n1;
        Conv2dLayer<T> c2;
        InstanceNorm2d<T> n2;
    };

    ModelConfig cfg_;
    std::vector<StemStage> stem_;
    std::vector<ResBlock> blocks_;
};

}  // namespace pointtrack
