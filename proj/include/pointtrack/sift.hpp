#pragma once

#include <optional>

#include "pointtrack/rng.hpp"
#include "pointtrack/tensor.hpp"
#include "pointtrack/tracker.hpp"

namespace pointtrack {

// Scale-space difference-of-Gaussians keypoint detector (detector only; query
// sampling needs locations, not descriptors).

struct SiftConfig {
    int intervals = 3;               // scales per octave
    double sigma0 = 1.6;             // base blur
    double contrast_threshold = 0.02;  // on DoG magnitude, images in [0,1]
    double edge_ratio = 10.0;        // principal-curvature ratio cutoff
    int border = 4;                  // skip extrema this close to the edge
    int max_octaves = 4;
};

struct Keypoint {
    double x = 0, y = 0;   // original-image pixel coordinates
    double response = 0;   // |DoG| at the extremum
    int octave = 0;
    double sigma = 0;
};

namespace sift_detail {

inline std::vector<float> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<size_t>(i + radius)] = static_cast<float>(v);
        sum += v;
    }
    for (auto& v : k) v = static_cast<float>(v / sum);
    return k;
}

/// Separable Gaussian blur with border clamping, [H,W] single channel.
inline Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma) {
    const int64_t h = img.dim(0), w = img.dim(1);
    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    Tensor<float> tmp({h, w}), out({h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            float acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                const int64_t xx = std::clamp<int64_t>(x + i, 0, w - 1);
                acc += k[static_cast<size_t>(i + radius)] * img.at(y, xx);
            }
            tmp.at(y, x) = acc;
        }
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            float acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                const int64_t yy = std::clamp<int64_t>(y + i, 0, h - 1);
                acc += k[static_cast<size_t>(i + radius)] * tmp.at(yy, x);
            }
            out.at(y, x) = acc;
        }
    return out;
}

inline Tensor<float> downsample2(const Tensor<float>& img) {
    const int64_t h = img.dim(0) / 2, w = img.dim(1) / 2;
    Tensor<float> out({h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) out.at(y, x) = img.at(2 * y, 2 * x);
    return out;
}

}  // namespace sift_detail

/// Luma conversion of one [3,H,W] frame.
inline Tensor<float> frame_to_gray(const Tensor<float>& video_chw, int64_t t) {
    const int64_t h = video_chw.dim(2), w = video_chw.dim(3);
    Tensor<float> g({h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            g.at(y, x) = 0.299f * video_chw.at(t, 0, y, x) + 0.587f * video_chw.at(t, 1, y, x) +
                         0.114f * video_chw.at(t, 2, y, x);
    return g;
}

/// DoG extrema with contrast and edge rejection, strongest response first.
inline std::vector<Keypoint> detect_keypoints(const Tensor<float>& gray, const SiftConfig& cfg = {}) {
    PTK_CHECK_SHAPE(gray.ndim() == 2, "detector expects a [H,W] grayscale image");
    std::vector<Keypoint> keypoints;
    Tensor<float> base = gray.clone();
    const int s = cfg.intervals;
    const double k = std::pow(2.0, 1.0 / s);

    int octaves = 0;
    for (int64_t m = std::min(gray.dim(0), gray.dim(1)); m >= 16 && octaves < cfg.max_octaves; m /= 2)
        ++octaves;

    for (int o = 0; o < octaves; ++o) {
        const int64_t h = base.dim(0), w = base.dim(1);
        std::vector<Tensor<float>> gauss;
        gauss.reserve(static_cast<size_t>(s + 3));
        gauss.push_back(sift_detail::gaussian_blur(base, cfg.sigma0));
        for (int i = 1; i < s + 3; ++i) {
            const double sig_prev = cfg.sigma0 * std::pow(k, i - 1);
            const double sig_inc = sig_prev * std::sqrt(k * k - 1.0);
            gauss.push_back(sift_detail::gaussian_blur(gauss.back(), sig_inc));
        }
        std::vector<Tensor<float>> dog;
        dog.reserve(static_cast<size_t>(s + 2));
        for (int i = 0; i < s + 2; ++i) {
            Tensor<float> d({h, w});
            for (int64_t j = 0; j < d.numel(); ++j) d[j] = gauss[static_cast<size_t>(i + 1)][j] - gauss[static_cast<size_t>(i)][j];
            dog.push_back(std::move(d));
        }

        const double edge_limit =
            (cfg.edge_ratio + 1.0) * (cfg.edge_ratio + 1.0) / cfg.edge_ratio;
        for (int i = 1; i <= s; ++i) {
            const Tensor<float>& d0 = dog[static_cast<size_t>(i - 1)];
            const Tensor<float>& d1 = dog[static_cast<size_t>(i)];
            const Tensor<float>& d2 = dog[static_cast<size_t>(i + 1)];
            for (int64_t y = cfg.border; y < h - cfg.border; ++y)
                for (int64_t x = cfg.border; x < w - cfg.border; ++x) {
                    const float v = d1.at(y, x);
                    if (std::abs(v) < cfg.contrast_threshold) continue;
                    bool is_max = true, is_min = true;
                    for (int dy = -1; dy <= 1 && (is_max || is_min); ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            for (const Tensor<float>* layer : {&d0, &d1, &d2}) {
                                if (layer == &d1 && dx == 0 && dy == 0) continue;
                                const float n = layer->at(y + dy, x + dx);
                                if (n >= v) is_max = false;
                                if (n <= v) is_min = false;
                            }
                            if (!is_max && !is_min) break;
                        }
                    if (!is_max && !is_min) continue;

                    // 2x2 spatial Hessian: reject edge-like extrema
                    const double dxx = d1.at(y, x + 1) + d1.at(y, x - 1) - 2.0 * v;
                    const double dyy = d1.at(y + 1, x) + d1.at(y - 1, x) - 2.0 * v;
                    const double dxy = 0.25 * (d1.at(y + 1, x + 1) - d1.at(y + 1, x - 1) -
                                               d1.at(y - 1, x + 1) + d1.at(y - 1, x - 1));
                    const double tr = dxx + dyy;
                    const double det = dxx * dyy - dxy * dxy;
                    if (det <= 0.0 || tr * tr / det >= edge_limit) continue;

                    Keypoint kp;
                    const double scale = static_cast<double>(1 << o);
                    kp.x = static_cast<double>(x) * scale;
                    kp.y = static_cast<double>(y) * scale;
                    kp.response = std::abs(v);
                    kp.octave = o;
                    kp.sigma = cfg.sigma0 * std::pow(k, i) * scale;
                    keypoints.push_back(kp);
                }
        }
        if (o + 1 < octaves) base = sift_detail::downsample2(gauss[static_cast<size_t>(s)]);
    }
    std::stable_sort(keypoints.begin(), keypoints.end(),
                     [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
    return keypoints;
}

// ---------------------------------------------------------------------------
// query sampling for unlabeled videos
// ---------------------------------------------------------------------------

struct QuerySampleConfig {
    int64_t n_queries = 384;
    int64_t keyframes = 8;
    int64_t min_points_per_frame = 48;  // below this on any keyframe: skip the video
    bool bias_early = false;            // online students see early queries more often
    SiftConfig sift;
};

/// Detector-driven query sampling. Returns nullopt (skip signal) when any
/// keyframe cannot supply min_points_per_frame keypoints.
inline std::optional<std::vector<Query>> sift_queries(const Tensor<float>& video_chw,
                                                      const QuerySampleConfig& cfg, uint64_t seed) {
    PTK_CHECK_SHAPE(video_chw.ndim() == 4 && video_chw.dim(1) == 3, "video must be [T,3,H,W]");
    const int64_t Tv = video_chw.dim(0);
    Rng rng(hash_combine(splitmix64(seed), hash_str("sift_queries")));

    // pick distinct keyframes, optionally biased toward the start
    const int64_t want = std::min<int64_t>(cfg.keyframes, Tv);
    std::vector<int64_t> frames;
    if (want == Tv) {
        for (int64_t t = 0; t < Tv; ++t) frames.push_back(t);
    } else {
        std::vector<bool> used(static_cast<size_t>(Tv), false);
        while (static_cast<int64_t>(frames.size()) < want) {
            int64_t t;
            if (cfg.bias_early) {
                const double u = rng.uniform();
                t = static_cast<int64_t>(u * u * static_cast<double>(Tv));
                t = std::min(t, Tv - 1);
            } else {
                t = rng.uniform_int(Tv);
            }
            if (!used[static_cast<size_t>(t)]) {
                used[static_cast<size_t>(t)] = true;
                frames.push_back(t);
            }
        }
        std::sort(frames.begin(), frames.end());
    }

    std::vector<std::vector<Keypoint>> per_frame;
    for (int64_t t : frames) {
        per_frame.push_back(detect_keypoints(frame_to_gray(video_chw, t), cfg.sift));
        if (static_cast<int64_t>(per_frame.back().size()) < cfg.min_points_per_frame)
            return std::nullopt;
    }

    // equal quota per keyframe; leftover budget is filled from richer frames
    const int64_t F = static_cast<int64_t>(frames.size());
    const int64_t quota = cfg.n_queries / F;
    std::vector<int64_t> take(static_cast<size_t>(F));
    int64_t total = 0;
    for (int64_t f = 0; f < F; ++f) {
        take[static_cast<size_t>(f)] =
            std::min<int64_t>(quota, static_cast<int64_t>(per_frame[static_cast<size_t>(f)].size()));
        total += take[static_cast<size_t>(f)];
    }
    bool progress = true;
    while (total < cfg.n_queries && progress) {
        progress = false;
        for (int64_t f = 0; f < F && total < cfg.n_queries; ++f) {
            if (take[static_cast<size_t>(f)] <
                static_cast<int64_t>(per_frame[static_cast<size_t>(f)].size())) {
                ++take[static_cast<size_t>(f)];
                ++total;
                progress = true;
            }
        }
    }

    std::vector<Query> queries;
    queries.reserve(static_cast<size_t>(total));
    for (int64_t f = 0; f < F; ++f)
        for (int64_t j = 0; j < take[static_cast<size_t>(f)]; ++j) {
            const Keypoint& kp = per_frame[static_cast<size_t>(f)][static_cast<size_t>(j)];
            queries.push_back({frames[static_cast<size_t>(f)], kp.x, kp.y});
        }
    if (static_cast<int64_t>(queries.size()) > cfg.n_queries) queries.resize(static_cast<size_t>(cfg.n_queries));
    return queries;
}

}  // namespace pointtrack
