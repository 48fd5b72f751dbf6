#pragma once

#include <array>
#include <optional>

#include "pointtrack/engines.hpp"
#include "pointtrack/train.hpp"

namespace pointtrack {

inline constexpr std::array<int, 5> kDeltaThresholds = {1, 2, 4, 8, 16};

/// Aggregated tracking metrics. Metrics over an empty evaluation mask are
/// undefined and stay unset rather than reading as zero.
struct MetricsReport {
    std::optional<double> aj;
    std::optional<double> delta_avg_vis;
    std::optional<double> delta_avg_occ;
    std::optional<double> oa;
    std::array<std::optional<double>, 5> per_threshold_vis;
    std::optional<double> epe_vis_native;  // mean Euclidean error, native pixels
    int64_t n_points = 0;
    int64_t n_frames = 0;
    int64_t n_scenes = 0;
    int64_t n_never_visible = 0;  // tracks excluded: no visible frame

    nlohmann::json to_json() const {
        auto opt = [](const std::optional<double>& v) {
            return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
        };
        nlohmann::json per;
        for (size_t i = 0; i < kDeltaThresholds.size(); ++i)
            per[std::to_string(kDeltaThresholds[i])] = opt(per_threshold_vis[i]);
        return {{"aj", opt(aj)},
                {"delta_avg_vis", opt(delta_avg_vis)},
                {"delta_avg_occ", opt(delta_avg_occ)},
                {"oa", opt(oa)},
                {"per_threshold_vis", per},
                {"epe_vis_native", opt(epe_vis_native)},
                {"n_points", n_points},
                {"n_frames", n_frames},
                {"n_scenes", n_scenes},
                {"n_never_visible", n_never_visible}};
    }

    static MetricsReport from_json(const nlohmann::json& j) {
        MetricsReport r;
        auto opt = [](const nlohmann::json& v) -> std::optional<double> {
            if (v.is_null()) return std::nullopt;
            return v.get<double>();
        };
        r.aj = opt(j.at("aj"));
        r.delta_avg_vis = opt(j.at("delta_avg_vis"));
        r.delta_avg_occ = opt(j.at("delta_avg_occ"));
        r.oa = opt(j.at("oa"));
        for (size_t i = 0; i < kDeltaThresholds.size(); ++i)
            r.per_threshold_vis[i] = opt(j.at("per_threshold_vis").at(std::to_string(kDeltaThresholds[i])));
        r.epe_vis_native = opt(j.at("epe_vis_native"));
        r.n_points = j.at("n_points");
        r.n_frames = j.at("n_frames");
        r.n_scenes = j.at("n_scenes");
        r.n_never_visible = j.at("n_never_visible");
        return r;
    }
};

struct DeltaResult {
    std::array<std::optional<double>, 5> per_threshold;
    std::optional<double> mean;
};

/// Fraction of masked cells with Euclidean error strictly under each threshold
/// (1, 2, 4, 8, 16 px), plus the mean over thresholds. Empty mask: undefined.
template <typename T>
DeltaResult delta_avg(const Tensor<T>& pred_tracks, const Tensor<T>& gt_tracks,
                      const Tensor<uint8_t>& eval_mask) {
    PTK_CHECK_SHAPE(pred_tracks.shape() == gt_tracks.shape(), "track shape mismatch");
    const int64_t cells = eval_mask.numel();
    PTK_CHECK_SHAPE(pred_tracks.numel() == 2 * cells, "mask shape mismatch");
    DeltaResult out;
    int64_t n = 0;
    std::array<int64_t, 5> hits = {0, 0, 0, 0, 0};
    for (int64_t j = 0; j < cells; ++j) {
        if (!eval_mask[j]) continue;
        ++n;
        const double dx = static_cast<double>(pred_tracks[2 * j]) - gt_tracks[2 * j];
        const double dy = static_cast<double>(pred_tracks[2 * j + 1]) - gt_tracks[2 * j + 1];
        const double err = std::sqrt(dx * dx + dy * dy);
        for (size_t k = 0; k < kDeltaThresholds.size(); ++k)
            if (err < static_cast<double>(kDeltaThresholds[k])) ++hits[k];
    }
    if (n == 0) return out;
    double mean = 0;
    for (size_t k = 0; k < hits.size(); ++k) {
        out.per_threshold[k] = static_cast<double>(hits[k]) / static_cast<double>(n);
        mean += *out.per_threshold[k];
    }
    out.mean = mean / static_cast<double>(hits.size());
    return out;
}

/// Fraction of cells where the binary flags agree.
inline double occlusion_accuracy(const Tensor<uint8_t>& pred_visible,
                                 const Tensor<uint8_t>& gt_visible) {
    PTK_CHECK_SHAPE(pred_visible.shape() == gt_visible.shape(), "visibility shape mismatch");
    int64_t agree = 0;
    for (int64_t j = 0; j < gt_visible.numel(); ++j)
        if ((pred_visible[j] != 0) == (gt_visible[j] != 0)) ++agree;
    return static_cast<double>(agree) / static_cast<double>(gt_visible.numel());
}

inline std::optional<double> occlusion_accuracy_masked(const Tensor<uint8_t>& pred_visible,
                                                       const Tensor<uint8_t>& gt_visible,
                                                       const Tensor<uint8_t>& eval_mask) {
    PTK_CHECK_SHAPE(pred_visible.shape() == gt_visible.shape(), "visibility shape mismatch");
    int64_t agree = 0, n = 0;
    for (int64_t j = 0; j < gt_visible.numel(); ++j) {
        if (!eval_mask[j]) continue;
        ++n;
        if ((pred_visible[j] != 0) == (gt_visible[j] != 0)) ++agree;
    }
    if (n == 0) return std::nullopt;
    return static_cast<double>(agree) / static_cast<double>(n);
}

/// Average Jaccard over the five thresholds. Per threshold:
///   TP = gt-visible & pred-visible & err < thr
///   FN = gt-visible cells that are not TP
///   FP = pred-visible cells that are gt-occluded or have err >= thr
/// Undefined when no gt-visible cell is in the mask.
template <typename T>
std::optional<double> average_jaccard(const Tensor<T>& pred_tracks,
                                      const Tensor<uint8_t>& pred_visible,
                                      const Tensor<T>& gt_tracks, const Tensor<uint8_t>& gt_visible,
                                      const Tensor<uint8_t>& eval_mask) {
    PTK_CHECK_SHAPE(pred_tracks.shape() == gt_tracks.shape() &&
                        pred_visible.shape() == gt_visible.shape(),
                    "shape mismatch");
    int64_t gt_pos = 0;
    std::array<int64_t, 5> tp = {0, 0, 0, 0, 0}, fp = {0, 0, 0, 0, 0};
    for (int64_t j = 0; j < gt_visible.numel(); ++j) {
        if (!eval_mask[j]) continue;
        const bool gv = gt_visible[j] != 0;
        const bool pv = pred_visible[j] != 0;
        if (gv) ++gt_pos;
        const double dx = static_cast<double>(pred_tracks[2 * j]) - gt_tracks[2 * j];
        const double dy = static_cast<double>(pred_tracks[2 * j + 1]) - gt_tracks[2 * j + 1];
        const double err = std::sqrt(dx * dx + dy * dy);
        for (size_t k = 0; k < kDeltaThresholds.size(); ++k) {
            const bool within = err < static_cast<double>(kDeltaThresholds[k]);
            if (gv && pv && within) ++tp[k];
            if (pv && (!gv || !within)) ++fp[k];
        }
    }
    if (gt_pos == 0) return std::nullopt;
    double sum = 0;
    for (size_t k = 0; k < tp.size(); ++k) {
        const int64_t denom = gt_pos + fp[k];  // gt_pos = TP + FN
        sum += denom > 0 ? static_cast<double>(tp[k]) / static_cast<double>(denom) : 0.0;
    }
    return sum / static_cast<double>(tp.size());
}

// ---------------------------------------------------------------------------
// first-query protocol
// ---------------------------------------------------------------------------

struct EvalProtocol {
    std::string mode = "offline";  // engine used for predictions
    double vis_threshold = 0.6;
    bool support_points = true;
    int iterations = -1;     // model default when <= 0
    double metric_frame = 256.0;
    int64_t limit_scenes = -1;
    bool strictly_after_query = true;  // evaluate cells with t > t^q only
    int workers = 1;

    nlohmann::json to_json() const {
        return {{"mode", mode},
                {"vis_threshold", vis_threshold},
                {"support_points", support_points},
                {"iterations", iterations},
                {"metric_frame", metric_frame},
                {"limit_scenes", limit_scenes},
                {"strictly_after_query", strictly_after_query}};
    }
};

namespace metrics_detail {

/// Per-scene metrics from assembled predictions; coordinates are rescaled to
/// the metric frame before thresholding.
inline MetricsReport score_scene(const Tensor<double>& pred, const Tensor<uint8_t>& pred_vis,
                                 const SyntheticScene& scene, const std::vector<int64_t>& query_frame,
                                 const EvalProtocol& proto) {
    const int64_t N = pred.dim(0), Tv = pred.dim(1);
    const double sx = proto.metric_frame / static_cast<double>(scene.width());
    const double sy = proto.metric_frame / static_cast<double>(scene.height());

    Tensor<double> pred_m({N, Tv, 2}), gt_m({N, Tv, 2});
    Tensor<uint8_t> gt_vis({N, Tv}), mask_eval({N, Tv}), mask_vis({N, Tv}), mask_occ({N, Tv});
    double epe_sum = 0;
    int64_t epe_n = 0;
    for (int64_t i = 0; i < N; ++i)
        for (int64_t t = 0; t < Tv; ++t) {
            pred_m.at(i, t, 0) = pred.at(i, t, 0) * sx;
            pred_m.at(i, t, 1) = pred.at(i, t, 1) * sy;
            gt_m.at(i, t, 0) = scene.gt_tracks.at(i, t, 0) * sx;
            gt_m.at(i, t, 1) = scene.gt_tracks.at(i, t, 1) * sy;
            const bool gv = scene.gt_visibility.at(i, t) != 0.f;
            gt_vis.at(i, t) = gv ? 1 : 0;
            const bool in_eval = proto.strictly_after_query
                                     ? t > query_frame[static_cast<size_t>(i)]
                                     : t != query_frame[static_cast<size_t>(i)];
            mask_eval.at(i, t) = in_eval ? 1 : 0;
            mask_vis.at(i, t) = (in_eval && gv) ? 1 : 0;
            mask_occ.at(i, t) = (in_eval && !gv) ? 1 : 0;
            if (in_eval && gv) {
                const double dx = pred.at(i, t, 0) - scene.gt_tracks.at(i, t, 0);
                const double dy = pred.at(i, t, 1) - scene.gt_tracks.at(i, t, 1);
                epe_sum += std::sqrt(dx * dx + dy * dy);
                ++epe_n;
            }
        }

    MetricsReport r;
    DeltaResult dv = delta_avg(pred_m, gt_m, mask_vis);
    r.delta_avg_vis = dv.mean;
    r.per_threshold_vis = dv.per_threshold;
    r.delta_avg_occ = delta_avg(pred_m, gt_m, mask_occ).mean;
    r.oa = occlusion_accuracy_masked(pred_vis, gt_vis, mask_eval);
    r.aj = average_jaccard(pred_m, pred_vis, gt_m, gt_vis, mask_eval);
    if (epe_n > 0) r.epe_vis_native = epe_sum / static_cast<double>(epe_n);
    r.n_points = N;
    r.n_frames = Tv;
    r.n_scenes = 1;
    return r;
}

inline void merge_mean(std::optional<double>& acc, int64_t& n, const std::optional<double>& v) {
    if (!v) return;
    if (!acc) acc = 0.0;
    *acc += *v;
    ++n;
}

}  // namespace metrics_detail

/// First-query evaluation of a model over a scene dataset: each ground-truth
/// track is queried at its first visible frame, one benchmark query per engine
/// run with support-point context; support points are stripped before scoring.
/// Per-scene metrics are averaged over scenes with defined values.
inline MetricsReport eval_first_query(const TrackerModel<float>& model, const SceneDataset& data,
                                      const EvalProtocol& proto,
                                      std::vector<MetricsReport>* per_scene_out = nullptr) {
    const int64_t n_scenes = proto.limit_scenes > 0
                                 ? std::min<int64_t>(proto.limit_scenes, static_cast<int64_t>(data.size()))
                                 : static_cast<int64_t>(data.size());
    std::vector<MetricsReport> per_scene(static_cast<size_t>(n_scenes));
    std::vector<int64_t> never_counts(static_cast<size_t>(n_scenes), 0);

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, proto.workers)) \
    if (proto.workers > 1)
    for (int64_t si = 0; si < n_scenes; ++si) {
        const SyntheticScene scene = data.get(static_cast<size_t>(si));
        const int64_t N = scene.num_tracks(), Tv = scene.num_frames();

        // first visible frame per track
        std::vector<int64_t> first_vis;
        std::vector<int64_t> track_ids;
        int64_t never = 0;
        for (int64_t i = 0; i < N; ++i) {
            int64_t t0 = -1;
            for (int64_t t = 0; t < Tv && t0 < 0; ++t)
                if (scene.gt_visibility.at(i, t) != 0.f) t0 = t;
            if (t0 < 0) {
                ++never;
                continue;
            }
            first_vis.push_back(t0);
            track_ids.push_back(i);
        }
        never_counts[static_cast<size_t>(si)] = never;
        if (track_ids.empty()) continue;

        const int64_t Ne = static_cast<int64_t>(track_ids.size());
        Tensor<double> pred({Ne, Tv, 2});
        Tensor<uint8_t> pred_vis({Ne, Tv});

        std::optional<FeaturePyramid<float>> pyr;
        if (proto.mode == "offline") {
            NoGradGuard ng;
            pyr = model.extract_pyramid(Var<float>(video_to_nhwc<float>(scene.video), false));
        }

        for (int64_t j = 0; j < Ne; ++j) {
            const int64_t i = track_ids[static_cast<size_t>(j)];
            const int64_t t0 = first_vis[static_cast<size_t>(j)];
            Query q{t0, scene.gt_tracks.at(i, t0, 0), scene.gt_tracks.at(i, t0, 1)};
            std::vector<Query> queries = {q};
            if (proto.support_points) {
                auto [extended, mask] = add_support_points(queries, scene.width(), scene.height());
                queries = std::move(extended);
            }
            TrackResult<float> res =
                proto.mode == "offline"
                    ? track_offline_with_pyramid(model, *pyr, queries, proto.iterations)
                    : track_online(model, scene.video, queries, proto.iterations);
            Tensor<uint8_t> gated = gate_visibility(res, proto.vis_threshold);
            // the benchmark query is row 0; supports are appended after it
            for (int64_t t = 0; t < Tv; ++t) {
                pred.at(j, t, 0) = res.tracks.at(0, t, 0);
                pred.at(j, t, 1) = res.tracks.at(0, t, 1);
                pred_vis.at(j, t) = gated.at(0, t);
            }
        }

        // score against the subset of tracks that were queried
        SyntheticScene sub = scene;
        sub.gt_tracks = Tensor<float>({Ne, Tv, 2});
        sub.gt_visibility = Tensor<float>({Ne, Tv});
        for (int64_t j = 0; j < Ne; ++j)
            for (int64_t t = 0; t < Tv; ++t) {
                sub.gt_tracks.at(j, t, 0) = scene.gt_tracks.at(track_ids[static_cast<size_t>(j)], t, 0);
                sub.gt_tracks.at(j, t, 1) = scene.gt_tracks.at(track_ids[static_cast<size_t>(j)], t, 1);
                sub.gt_visibility.at(j, t) = scene.gt_visibility.at(track_ids[static_cast<size_t>(j)], t);
            }
        per_scene[static_cast<size_t>(si)] =
            metrics_detail::score_scene(pred, pred_vis, sub, first_vis, proto);
    }

    // average per-scene metrics over scenes where they are defined
    MetricsReport total;
    for (int64_t c : never_counts) total.n_never_visible += c;
    int64_t n_aj = 0, n_dv = 0, n_do = 0, n_oa = 0, n_epe = 0;
    std::array<int64_t, 5> n_thr = {0, 0, 0, 0, 0};
    for (const auto& r : per_scene) {
        if (r.n_scenes == 0) continue;
        total.n_scenes += 1;
        total.n_points += r.n_points;
        total.n_frames += r.n_frames;
        metrics_detail::merge_mean(total.aj, n_aj, r.aj);
        metrics_detail::merge_mean(total.delta_avg_vis, n_dv, r.delta_avg_vis);
        metrics_detail::merge_mean(total.delta_avg_occ, n_do, r.delta_avg_occ);
        metrics_detail::merge_mean(total.oa, n_oa, r.oa);
        metrics_detail::merge_mean(total.epe_vis_native, n_epe, r.epe_vis_native);
        for (size_t k = 0; k < 5; ++k)
            metrics_detail::merge_mean(total.per_threshold_vis[k], n_thr[k], r.per_threshold_vis[k]);
    }
    if (total.aj) *total.aj /= static_cast<double>(n_aj);
    if (total.delta_avg_vis) *total.delta_avg_vis /= static_cast<double>(n_dv);
    if (total.delta_avg_occ) *total.delta_avg_occ /= static_cast<double>(n_do);
    if (total.oa) *total.oa /= static_cast<double>(n_oa);
    if (total.epe_vis_native) *total.epe_vis_native /= static_cast<double>(n_epe);
    for (size_t k = 0; k < 5; ++k)
        if (total.per_threshold_vis[k]) *total.per_threshold_vis[k] /= static_cast<double>(n_thr[k]);
    if (per_scene_out) *per_scene_out = std::move(per_scene);
    return total;
}

/// Scores a stored prediction (e.g. a track file) against a scene's ground
/// truth, using each track's first visible frame as its query frame.
inline MetricsReport evaluate_result_against_scene(const TrackResult<float>& result,
                                                   const SyntheticScene& scene,
                                                   const EvalProtocol& proto) {
    const int64_t N = scene.num_tracks(), Tv = scene.num_frames();
    PTK_CHECK_SHAPE(result.tracks.dim(0) == N && result.tracks.dim(1) == Tv,
                    "prediction does not match the scene's tracks");
    std::vector<int64_t> first_vis(static_cast<size_t>(N), 0);
    for (int64_t i = 0; i < N; ++i)
        for (int64_t t = 0; t < Tv; ++t)
            if (scene.gt_visibility.at(i, t) != 0.f) {
                first_vis[static_cast<size_t>(i)] = t;
                break;
            }
    Tensor<double> pred({N, Tv, 2});
    for (int64_t j = 0; j < pred.numel(); ++j) pred[j] = static_cast<double>(result.tracks[j]);
    Tensor<uint8_t> pred_vis = gate_visibility(result, proto.vis_threshold);
    return metrics_detail::score_scene(pred, pred_vis, scene, first_vis, proto);
}

}  // namespace pointtrack
