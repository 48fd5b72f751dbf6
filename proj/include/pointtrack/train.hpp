#pragma once

#include <filesystem>
#include <fstream>

#include "pointtrack/engines.hpp"
#include "pointtrack/losses.hpp"
#include "pointtrack/optim.hpp"
#include "pointtrack/synth.hpp"

namespace pointtrack {

// ---------------------------------------------------------------------------
// dataset access
// ---------------------------------------------------------------------------

/// Scenes from a directory of containers (loaded per access) or held in memory.
class SceneDataset {
  public:
    static SceneDataset from_dir(const std::string& dir) {
        SceneDataset d;
        namespace fs = std::filesystem;
        if (!fs::is_directory(dir)) throw io_error("not a directory: " + dir);
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".ptc")
                d.paths_.push_back(e.path().string());
        std::sort(d.paths_.begin(), d.paths_.end());
        if (d.paths_.empty()) throw io_error("no .ptc scenes under " + dir);
        return d;
    }

    static SceneDataset from_memory(std::vector<SyntheticScene> scenes) {
        SceneDataset d;
        d.scenes_ = std::move(scenes);
        PTK_CHECK_PARAM(!d.scenes_.empty(), "empty scene list");
        return d;
    }

    size_t size() const { return scenes_.empty() ? paths_.size() : scenes_.size(); }

    SyntheticScene get(size_t i) const {
        PTK_CHECK_PARAM(i < size(), "dataset index out of range");
        if (!scenes_.empty()) return scenes_[i];
        return read_scene(paths_[i]);
    }

    const std::vector<std::string>& paths() const { return paths_; }

  private:
    std::vector<std::string> paths_;
    std::vector<SyntheticScene> scenes_;
};

// ---------------------------------------------------------------------------
// loss curve file
// ---------------------------------------------------------------------------

struct LossCurveRow {
    int64_t step = 0;
    double track_loss = 0, conf_loss = 0, vis_loss = 0, lr = 0;
};

inline void write_loss_curve(const std::string& path, const std::vector<LossCurveRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io_error("cannot write loss curve: " + path);
    f << "step,track_loss,conf_loss,vis_loss,lr\n";
    f.precision(17);
    for (const auto& r : rows)
        f << r.step << "," << r.track_loss << "," << r.conf_loss << "," << r.vis_loss << "," << r.lr
          << "\n";
}

inline std::vector<LossCurveRow> read_loss_curve(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot read loss curve: " + path);
    std::string line;
    std::getline(f, line);
    if (line != "step,track_loss,conf_loss,vis_loss,lr")
        throw corrupt_error("unexpected loss curve header in " + path);
    std::vector<LossCurveRow> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        LossCurveRow r;
        if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf", &r.step, &r.track_loss, &r.conf_loss,
                        &r.vis_loss, &r.lr) != 5)
            throw corrupt_error("bad loss curve row: " + line);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// query sampling and clip assembly
// ---------------------------------------------------------------------------

template <typename T>
struct ClipSample {
    Var<T> video;          // [L,H,W,3]
    Tensor<T> query_xy;    // [Q,2]
    std::vector<int64_t> query_t;  // clip-local
    Tensor<T> gt_tracks;   // [Q,L,2]
    Tensor<T> gt_vis;      // [Q,L]
};

/// Cuts [start, start+len) from a scene and samples queries at visible
/// ground-truth positions. Online mode biases query frames toward the clip
/// start (forward-only tracking sees more supervised frames that way).
template <typename T>
ClipSample<T> make_clip(const SyntheticScene& scene, int64_t start, int64_t len, int64_t n_queries,
                        bool bias_early, Rng& rng) {
    const int64_t N = scene.num_tracks(), Tv = scene.num_frames();
    PTK_CHECK_PARAM(start >= 0 && start + len <= Tv, "clip out of range");
    const int64_t H = scene.height(), W = scene.width();

    Tensor<T> video({len, H, W, 3});
    {
        Tensor<float> sub({len, 3, H, W});
        std::copy(scene.video.data() + start * 3 * H * W,
                  scene.video.data() + (start + len) * 3 * H * W, sub.data());
        video = video_to_nhwc<T>(sub);
    }

    ClipSample<T> clip;
    clip.video = Var<T>(video, false);
    clip.query_xy = Tensor<T>({n_queries, 2});
    clip.gt_tracks = Tensor<T>({n_queries, len, 2});
    clip.gt_vis = Tensor<T>({n_queries, len});

    for (int64_t qi = 0; qi < n_queries; ++qi) {
        int64_t track = -1, tq = -1;
        for (int tries = 0; tries < 64 && track < 0; ++tries) {
            const int64_t cand = rng.uniform_int(N);
            std::vector<int64_t> visible;
            for (int64_t t = 0; t < len; ++t)
                if (scene.gt_visibility.at(cand, start + t) != 0.f) visible.push_back(t);
            if (visible.empty()) continue;
            track = cand;
            if (bias_early) {
                const double u = rng.uniform();
                tq = visible[static_cast<size_t>(u * u * static_cast<double>(visible.size()))];
            } else {
                tq = visible[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(visible.size())))];
            }
        }
        PTK_CHECK_PARAM(track >= 0, "scene has no visible ground truth in the sampled clip");
        clip.query_t.push_back(tq);
        clip.query_xy.at(qi, 0) = static_cast<T>(scene.gt_tracks.at(track, start + tq, 0));
        clip.query_xy.at(qi, 1) = static_cast<T>(scene.gt_tracks.at(track, start + tq, 1));
        for (int64_t t = 0; t < len; ++t) {
            clip.gt_tracks.at(qi, t, 0) = static_cast<T>(scene.gt_tracks.at(track, start + t, 0));
            clip.gt_tracks.at(qi, t, 1) = static_cast<T>(scene.gt_tracks.at(track, start + t, 1));
            clip.gt_vis.at(qi, t) = static_cast<T>(scene.gt_visibility.at(track, start + t));
        }
    }
    return clip;
}

// ---------------------------------------------------------------------------
// unrolled online windows (shared by supervised training and distillation)
// ---------------------------------------------------------------------------

template <typename T>
struct UnrolledWindows {
    std::vector<int64_t> starts;
    std::vector<std::vector<TrackState<T>>> states;  // per window, M states
    std::vector<Tensor<T>> masks;                    // per window, [N,T'] supervised cells
};

/// Runs the sliding-window schedule over one clip with gradients intact.
/// The overlapping half of the previous window's final state initializes the
/// next window; points whose query frame is still ahead stay at their query
/// coordinates. Supervision masks select cells at or after the query frame.
template <typename T>
UnrolledWindows<T> unroll_online_windows(const TrackerModel<T>& model, const Var<T>& video_nhwc,
                                         const Tensor<T>& query_xy,
                                         const std::vector<int64_t>& query_t, int M) {
    const ModelConfig& cfg = model.config();
    const int64_t Tw = cfg.window_len, stride = Tw / 2;
    const int64_t L = video_nhwc.dim(0);
    const int64_t N = query_xy.dim(0);
    PTK_CHECK_PARAM(L >= Tw, "clip shorter than one window");
    PTK_CHECK_PARAM((L - Tw) % stride == 0, "clip length ", L,
                    " does not fit the window schedule (need T' + k*T'/2)");

    FeaturePyramid<T> pyr = model.extract_pyramid(video_nhwc);
    auto qfeats = model.query_features(pyr, query_t, query_xy);

    UnrolledWindows<T> out;
    TrackState<T> prev;
    for (int64_t start = 0; start + Tw <= L; start += stride) {
        FeaturePyramid<T> wpyr;
        wpyr.k = pyr.k;
        wpyr.d = pyr.d;
        for (const auto& m : pyr.maps) wpyr.maps.push_back(slice(m, 0, start, Tw));

        TrackState<T> init = init_track_state(query_xy, Tw);
        if (start > 0) {
            // carry: overlap half from the previous window, last frame repeated
            Var<T> keepP = slice(prev.P, 1, stride, stride);
            Var<T> lastP = slice(prev.P, 1, Tw - 1, 1);
            std::vector<Var<T>> repP = {keepP};
            for (int64_t i = 0; i < stride; ++i) repP.push_back(lastP);
            Var<T> carryP = concat(repP, 1);
            Var<T> keepC = slice(prev.C, 1, stride, stride);
            Var<T> lastC = slice(prev.C, 1, Tw - 1, 1);
            std::vector<Var<T>> repC = {keepC};
            for (int64_t i = 0; i < stride; ++i) repC.push_back(lastC);
            Var<T> carryC = concat(repC, 1);
            Var<T> keepV = slice(prev.V, 1, stride, stride);
            Var<T> lastV = slice(prev.V, 1, Tw - 1, 1);
            std::vector<Var<T>> repV = {keepV};
            for (int64_t i = 0; i < stride; ++i) repV.push_back(lastV);
            Var<T> carryV = concat(repV, 1);

            // points already activated keep the carried state
            Tensor<T> act({N, 1, 1});
            for (int64_t i = 0; i < N; ++i)
                act.at(i, 0, 0) = query_t[static_cast<size_t>(i)] < start ? T(1) : T(0);
            Var<T> act3(act, false);
            Var<T> act2(act.reshape({N, 1}), false);
            Var<T> inv3 = add_scalar(mul_scalar(act3, T(-1)), T(1));
            Var<T> inv2 = add_scalar(mul_scalar(act2, T(-1)), T(1));
            init.P = vadd(vmul(carryP, act3), vmul(init.P, inv3));
            init.C = vadd(vmul(carryC, act2), vmul(init.C, inv2));
            init.V = vadd(vmul(carryV, act2), vmul(init.V, inv2));
        }

        std::vector<int64_t> pin(static_cast<size_t>(N), -1);
        for (int64_t i = 0; i < N; ++i) {
            const int64_t tq = query_t[static_cast<size_t>(i)];
            if (tq >= start && tq < start + Tw) pin[static_cast<size_t>(i)] = tq - start;
        }
        // points whose query frame is still ahead carry zero query features,
        // matching the streaming engine
        std::vector<Var<T>> wfeats = qfeats;
        {
            Tensor<T> seen({N, 1, 1});
            bool all_seen = true;
            for (int64_t i = 0; i < N; ++i) {
                const bool s = query_t[static_cast<size_t>(i)] < start + Tw;
                seen.at(i, 0, 0) = s ? T(1) : T(0);
                all_seen = all_seen && s;
            }
            if (!all_seen) {
                Var<T> seen_c(seen, false);
                for (auto& f : wfeats) f = vmul(f, seen_c);
            }
        }
        auto states = model.iterate(wpyr, wfeats, query_xy, pin, init, M);
        prev = states.back();

        Tensor<T> mask({N, Tw});
        for (int64_t i = 0; i < N; ++i)
            for (int64_t t = 0; t < Tw; ++t)
                mask.at(i, t) = (start + t >= query_t[static_cast<size_t>(i)]) ? T(1) : T(0);

        out.starts.push_back(start);
        out.states.push_back(std::move(states));
        out.masks.push_back(std::move(mask));
    }
    return out;
}

// ---------------------------------------------------------------------------
// supervised training
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::string mode = "offline";  // offline | online
    int64_t steps = 2000;
    int64_t batch = 4;
    int64_t queries_per_clip = 32;
    int64_t clip_len = 24;  // online fixed clip length
    double lr = 5e-4;
    int64_t warmup_steps = 1000;
    double weight_decay = 1e-5;
    double clip_norm = 1.0;
    double w_track = 1.0, w_conf = 1.0, w_vis = 1.0;
    uint64_t seed = 0;
    int64_t checkpoint_every = 1000;
    int64_t log_every = 10;
    LossConfig loss;

    void validate() const {
        PTK_CHECK_PARAM(mode == "offline" || mode == "online", "mode must be offline or online");
        PTK_CHECK_PARAM(steps >= 1 && batch >= 1 && queries_per_clip >= 1, "bad training config");
        loss.validate();
    }
};

struct StepLosses {
    double track = 0, conf = 0, vis = 0;
    double total() const { return track + conf + vis; }
};

/// One clip's weighted loss graph plus logging values.
template <typename T>
std::pair<Var<T>, StepLosses> clip_loss(TrackerModel<T>& model, const SyntheticScene& scene,
                                        const TrainConfig& cfg, Rng& rng) {
    const int64_t Tv = scene.num_frames();
    StepLosses log;
    Var<T> total(Tensor<T>::scalar(T(0)), false);

    if (cfg.mode == "offline") {
        // variable-length training: trim to a random span of [T/2, T] frames
        const int64_t lmin = (Tv + 1) / 2;
        const int64_t len = rng.uniform_int(lmin, Tv);
        const int64_t start = rng.uniform_int(0, Tv - len);
        ClipSample<T> clip = make_clip<T>(scene, start, len, cfg.queries_per_clip, false, rng);

        FeaturePyramid<T> pyr = model.extract_pyramid(clip.video);
        auto qfeats = model.query_features(pyr, clip.query_t, clip.query_xy);
        auto states = model.iterate(pyr, qfeats, clip.query_xy, clip.query_t,
                                    init_track_state(clip.query_xy, len), model.config().m_train);

        Var<T> lt = track_loss(states, clip.gt_tracks, clip.gt_vis, cfg.loss);
        Var<T> lc = conf_loss(states, clip.gt_tracks, cfg.loss);
        Var<T> lv = vis_loss(states, clip.gt_vis, cfg.loss);
        log.track = static_cast<double>(lt.val()[0]);
        log.conf = static_cast<double>(lc.val()[0]);
        log.vis = static_cast<double>(lv.val()[0]);
        total = vadd(vadd(mul_scalar(lt, T(cfg.w_track)), mul_scalar(lc, T(cfg.w_conf))),
                     mul_scalar(lv, T(cfg.w_vis)));
        return {total, log};
    }

    // online: fixed-length clips, per-window losses averaged over windows
    const int64_t Tw = model.config().window_len, stride = Tw / 2;
    int64_t len = std::min<int64_t>(cfg.clip_len, Tv);
    len = Tw + ((len - Tw) / stride) * stride;
    PTK_CHECK_PARAM(len >= Tw, "scene too short for one online window");
    const int64_t start = rng.uniform_int(0, Tv - len);
    ClipSample<T> clip = make_clip<T>(scene, start, len, cfg.queries_per_clip, true, rng);

    auto unrolled =
        unroll_online_windows(model, clip.video, clip.query_xy, clip.query_t, model.config().m_train);

    int64_t used = 0;
    Var<T> lt_sum(Tensor<T>::scalar(T(0)), false), lc_sum = lt_sum, lv_sum = lt_sum;
    for (size_t w = 0; w < unrolled.states.size(); ++w) {
        const int64_t s = unrolled.starts[w];
        bool any = false;
        for (int64_t i = 0; i < unrolled.masks[w].numel(); ++i)
            if (unrolled.masks[w][i] != T(0)) {
                any = true;
                break;
            }
        if (!any) continue;  // window precedes every query frame
        // window-local ground truth
        const int64_t N = clip.query_xy.dim(0);
        Tensor<T> gt_p({N, Tw, 2}), gt_v({N, Tw});
        for (int64_t i = 0; i < N; ++i)
            for (int64_t t = 0; t < Tw; ++t) {
                gt_p.at(i, t, 0) = clip.gt_tracks.at(i, s + t, 0);
                gt_p.at(i, t, 1) = clip.gt_tracks.at(i, s + t, 1);
                gt_v.at(i, t) = clip.gt_vis.at(i, s + t);
            }
        lt_sum = vadd(lt_sum, track_loss(unrolled.states[w], gt_p, gt_v, cfg.loss, unrolled.masks[w]));
        lc_sum = vadd(lc_sum, conf_loss(unrolled.states[w], gt_p, cfg.loss, unrolled.masks[w]));
        lv_sum = vadd(lv_sum, vis_loss(unrolled.states[w], gt_v, cfg.loss, unrolled.masks[w]));
        ++used;
    }
    PTK_CHECK_PARAM(used > 0, "no supervised windows in clip");
    const T inv = T(1) / static_cast<T>(used);
    Var<T> lt = mul_scalar(lt_sum, inv);
    Var<T> lc = mul_scalar(lc_sum, inv);
    Var<T> lv = mul_scalar(lv_sum, inv);
    log.track = static_cast<double>(lt.val()[0]);
    log.conf = static_cast<double>(lc.val()[0]);
    log.vis = static_cast<double>(lv.val()[0]);
    total = vadd(vadd(mul_scalar(lt, T(cfg.w_track)), mul_scalar(lc, T(cfg.w_conf))),
                 mul_scalar(lv, T(cfg.w_vis)));
    return {total, log};
}

/// Full supervised loop. Writes checkpoints and the loss curve under out_dir;
/// returns the curve rows.
template <typename T>
std::vector<LossCurveRow> train_supervised(TrackerModel<T>& model, const SceneDataset& data,
                                           const TrainConfig& cfg, const std::string& out_dir,
                                           bool verbose = true) {
    cfg.validate();
    PTK_CHECK_PARAM(data.size() > 0, "empty dataset");
    std::filesystem::create_directories(out_dir);

    AdamW<T> opt(
        [&] {
            std::vector<Var<T>> vars;
            for (auto& [name, v] : model.params()) vars.push_back(v);
            return vars;
        }(),
        {.beta1 = T(0.9), .beta2 = T(0.999), .eps = T(1e-8), .weight_decay = T(cfg.weight_decay)});
    LrSchedule sched{.base_lr = cfg.lr, .warmup_steps = cfg.warmup_steps, .total_steps = cfg.steps};

    Rng rng(hash_combine(splitmix64(cfg.seed), hash_str("train:" + cfg.mode)));
    std::vector<LossCurveRow> curve;

    for (int64_t step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        StepLosses acc;
        Var<T> batch_total(Tensor<T>::scalar(T(0)), false);
        for (int64_t b = 0; b < cfg.batch; ++b) {
            const SyntheticScene scene = data.get(static_cast<size_t>(rng.uniform_int(
                static_cast<int64_t>(data.size()))));
            auto [loss, log] = clip_loss(model, scene, cfg, rng);
            batch_total = vadd(batch_total, loss);
            acc.track += log.track;
            acc.conf += log.conf;
            acc.vis += log.vis;
        }
        batch_total = mul_scalar(batch_total, T(1) / static_cast<T>(cfg.batch));
        acc.track /= static_cast<double>(cfg.batch);
        acc.conf /= static_cast<double>(cfg.batch);
        acc.vis /= static_cast<double>(cfg.batch);

        const double loss_val = static_cast<double>(batch_total.val()[0]);
        if (!std::isfinite(loss_val))
            throw std::runtime_error(format_msg("non-finite loss at step ", step, " (track=",
                                                acc.track, ", conf=", acc.conf, ", vis=", acc.vis,
                                                "); aborting"));
        batch_total.backward();
        opt.clip_grad_norm(T(cfg.clip_norm));
        const double lr = sched.at(step);
        opt.step(static_cast<T>(lr));

        if (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
            curve.push_back({step, acc.track, acc.conf, acc.vis, lr});
            if (verbose)
                std::fprintf(stderr, "step %6ld  track %.5f  conf %.5f  vis %.5f  lr %.2e\n",
                             static_cast<long>(step), acc.track, acc.conf, acc.vis, lr);
        }
        if (cfg.checkpoint_every > 0 && step > 0 && step % cfg.checkpoint_every == 0)
            model.save_checkpoint(out_dir + "/model_step" + std::to_string(step) + ".ptc",
                                  {{"step", step}, {"mode", cfg.mode}});
    }
    model.save_checkpoint(out_dir + "/model.ptc", {{"step", cfg.steps}, {"mode", cfg.mode}});
    write_loss_curve(out_dir + "/loss_curve.csv", curve);
    return curve;
}

}  // namespace pointtrack
