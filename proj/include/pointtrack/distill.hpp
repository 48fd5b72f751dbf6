#pragma once

#include "pointtrack/sift.hpp"
#include "pointtrack/track_io.hpp"
#include "pointtrack/train.hpp"

namespace pointtrack {

// Multi-teacher pseudo-label fine-tuning: frozen teachers annotate unlabeled
// videos, the student trains on those annotations with the track loss only,
// and its confidence/visibility head stays frozen.

inline uint64_t hash_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot hash, missing file: " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i)
            h = (h ^ static_cast<unsigned char>(buf[i])) * 0x100000001b3ULL;
        if (!f) break;
    }
    return h;
}

struct TeacherEntry {
    std::string name;
    std::string checkpoint_path;
    std::string mode;  // "online" | "offline"
};

/// Frozen teacher pool. Models load lazily and never receive gradients.
template <typename T>
class TeacherRegistry {
  public:
    TeacherRegistry(std::vector<TeacherEntry> entries, uint64_t rng_seed)
        : entries_(std::move(entries)), seed_(rng_seed) {
        PTK_CHECK_PARAM(!entries_.empty(), "teacher registry needs at least one teacher");
        models_.resize(entries_.size());
        for (const auto& e : entries_)
            PTK_CHECK_PARAM(e.mode == "online" || e.mode == "offline", "teacher mode must be ",
                            "online or offline, got '", e.mode, "'");
    }

    size_t size() const { return entries_.size(); }
    uint64_t seed() const { return seed_; }
    const TeacherEntry& entry(size_t i) const { return entries_.at(i); }

    const TrackerModel<T>& model(size_t i) const {
        if (!models_.at(i)) {
            models_[i] = std::make_unique<TrackerModel<T>>(
                TrackerModel<T>::load_checkpoint(entries_[i].checkpoint_path));
        }
        return *models_[i];
    }

    std::vector<uint64_t> checkpoint_hashes() const {
        std::vector<uint64_t> hs;
        for (const auto& e : entries_) hs.push_back(hash_file_bytes(e.checkpoint_path));
        return hs;
    }

  private:
    std::vector<TeacherEntry> entries_;
    mutable std::vector<std::unique_ptr<TrackerModel<T>>> models_;
    uint64_t seed_;
};

/// Uniform draw over teachers, reproducible per (registry seed, batch index).
template <typename T>
size_t sample_teacher(const TeacherRegistry<T>& registry, int64_t batch_index) {
    Rng rng(hash_combine(splitmix64(registry.seed()), static_cast<uint64_t>(batch_index) ^
                                                          0x7465616368ULL));
    return static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(registry.size())));
}

/// Runs a frozen teacher over the video; the result is a training target, so
/// no gradients are recorded.
template <typename T>
TrackResult<T> pseudo_label(const TrackerModel<T>& teacher, const std::string& mode,
                            const Tensor<float>& video_chw, const std::vector<Query>& queries) {
    NoGradGuard ng;
    if (mode == "online") return track_online(teacher, video_chw, queries);
    return track_offline(teacher, video_chw, queries);
}

struct DistillConfig {
    int64_t steps = 2000;
    int64_t batch = 4;
    double lr = 5e-5;  // cosine, no warm-up
    double clip_norm = 1.0;
    uint64_t seed = 0;
    std::string student_mode = "offline";  // training protocol for the student
    int64_t clip_len = 24;                 // online protocol clip length
    std::string teacher_agg = "random";    // random | mean | median
    bool teacher_vis_as_occlusion = true;  // teacher visibility (at 0.5) gates the 1/5 weight
    QuerySampleConfig queries;
    LossConfig loss;
    std::string cache_dir;  // pseudo-label cache; empty disables
    int64_t log_every = 10;
    int64_t checkpoint_every = 0;

    void validate() const {
        PTK_CHECK_PARAM(steps >= 1 && batch >= 1, "bad distill config");
        PTK_CHECK_PARAM(student_mode == "online" || student_mode == "offline",
                        "student mode must be online or offline");
        PTK_CHECK_PARAM(teacher_agg == "random" || teacher_agg == "mean" || teacher_agg == "median",
                        "teacher_agg must be random, mean, or median");
        loss.validate();
    }
};

namespace distill_detail {

/// Elementwise mean/median aggregation across all teachers' labels.
template <typename T>
TrackResult<T> aggregate_labels(const std::vector<TrackResult<T>>& all, const std::string& how) {
    TrackResult<T> out;
    out.tracks = Tensor<T>(all[0].tracks.shape());
    out.visibility_prob = Tensor<T>(all[0].visibility_prob.shape());
    out.confidence_prob = Tensor<T>(all[0].confidence_prob.shape());
    const size_t K = all.size();
    std::vector<T> vals(K);
    auto combine = [&](auto get, Tensor<T>& dst) {
        for (int64_t j = 0; j < dst.numel(); ++j) {
            for (size_t k = 0; k < K; ++k) vals[k] = get(all[k], j);
            if (how == "mean") {
                T s = T(0);
                for (T v : vals) s += v;
                dst[j] = s / static_cast<T>(K);
            } else {
                std::nth_element(vals.begin(), vals.begin() + K / 2, vals.end());
                T med = vals[K / 2];
                if (K % 2 == 0) {
                    T lo = *std::max_element(vals.begin(), vals.begin() + K / 2);
                    med = (med + lo) / T(2);
                }
                dst[j] = med;
            }
        }
    };
    combine([](const TrackResult<T>& r, int64_t j) { return r.tracks[j]; }, out.tracks);
    combine([](const TrackResult<T>& r, int64_t j) { return r.visibility_prob[j]; },
            out.visibility_prob);
    combine([](const TrackResult<T>& r, int64_t j) { return r.confidence_prob[j]; },
            out.confidence_prob);
    return out;
}

}  // namespace distill_detail

/// Pseudo-labels for one video, optionally served from the on-disk cache.
/// Cache entries are keyed by (video path, teacher name, seed).
template <typename T>
TrackResult<T> cached_pseudo_label(const TeacherRegistry<T>& registry, size_t teacher_ix,
                                   const Tensor<float>& video_chw, const std::string& video_key,
                                   const std::vector<Query>& queries, const std::string& cache_dir,
                                   uint64_t seed) {
    if (cache_dir.empty()) {
        const auto& e = registry.entry(teacher_ix);
        return pseudo_label(registry.model(teacher_ix), e.mode, video_chw, queries);
    }
    std::filesystem::create_directories(cache_dir);
    const auto& e = registry.entry(teacher_ix);
    const uint64_t key = hash_combine(hash_combine(hash_str(video_key), hash_str(e.name)),
                                      splitmix64(seed));
    char name[64];
    std::snprintf(name, sizeof(name), "labels_%016llx.ptc", static_cast<unsigned long long>(key));
    const std::string path = cache_dir + "/" + name;
    if (std::filesystem::exists(path)) {
        TrackFile f = read_tracks(path);
        TrackResult<T> r;
        r.tracks = f.result.tracks.template cast<T>();
        r.visibility_prob = f.result.visibility_prob.template cast<T>();
        r.confidence_prob = f.result.confidence_prob.template cast<T>();
        return r;
    }
    TrackResult<T> r = pseudo_label(registry.model(teacher_ix), e.mode, video_chw, queries);
    TrackResult<float> rf;
    rf.tracks = r.tracks.template cast<float>();
    rf.visibility_prob = r.visibility_prob.template cast<float>();
    rf.confidence_prob = r.confidence_prob.template cast<float>();
    write_tracks(path, rf, queries, {{"teacher", e.name}, {"seed", seed}});
    return r;
}

/// Pseudo-label fine-tuning (Eq. 1 only). The confidence/visibility head is
/// excluded from the optimizer; supervision weights come from the teacher's
/// gated visibility when configured. Returns the loss curve.
template <typename T>
std::vector<LossCurveRow> finetune_student(TrackerModel<T>& student,
                                           const TeacherRegistry<T>& teachers,
                                           const SceneDataset& videos, const DistillConfig& cfg,
                                           const std::string& out_dir, bool verbose = true) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    // frozen head: strip its parameters from the optimizer
    std::vector<std::string> frozen_names;
    for (auto& [name, var] : student.confvis_head_params()) frozen_names.push_back(name);
    std::vector<Var<T>> trainable;
    for (auto& [name, var] : student.params())
        if (std::find(frozen_names.begin(), frozen_names.end(), name) == frozen_names.end())
            trainable.push_back(var);
    AdamW<T> opt(trainable, {.beta1 = T(0.9), .beta2 = T(0.999), .eps = T(1e-8),
                             .weight_decay = T(1e-5)});
    LrSchedule sched{.base_lr = cfg.lr, .warmup_steps = 0, .total_steps = cfg.steps};

    Rng rng(hash_combine(splitmix64(cfg.seed), hash_str("distill")));
    std::vector<LossCurveRow> curve;
    int64_t skipped_videos = 0, used_videos = 0;

    // per-video query cache (sampling is deterministic per video+seed)
    std::vector<std::optional<std::vector<Query>>> qcache(videos.size());
    std::vector<bool> qknown(videos.size(), false);

    for (int64_t step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        Var<T> batch_total(Tensor<T>::scalar(T(0)), false);
        double log_track = 0;
        int64_t used_in_batch = 0;

        for (int64_t b = 0; b < cfg.batch; ++b) {
            // draw a video with usable queries; a fully skipped corpus aborts
            int64_t vi = -1;
            std::vector<Query> queries;
            for (int64_t tries = 0; tries < static_cast<int64_t>(videos.size()) + 8; ++tries) {
                const int64_t cand = rng.uniform_int(static_cast<int64_t>(videos.size()));
                if (!qknown[static_cast<size_t>(cand)]) {
                    const SyntheticScene scene = videos.get(static_cast<size_t>(cand));
                    qcache[static_cast<size_t>(cand)] = sift_queries(
                        scene.video, cfg.queries,
                        hash_combine(splitmix64(cfg.seed), static_cast<uint64_t>(cand)));
                    qknown[static_cast<size_t>(cand)] = true;
                    if (!qcache[static_cast<size_t>(cand)].has_value()) ++skipped_videos;
                }
                if (qcache[static_cast<size_t>(cand)].has_value()) {
                    vi = cand;
                    queries = *qcache[static_cast<size_t>(cand)];
                    break;
                }
            }
            if (vi < 0)
                throw std::runtime_error(
                    format_msg("every video was skipped by query sampling (", skipped_videos,
                               " skips); cannot distill"));
            ++used_videos;
            const SyntheticScene scene = videos.get(static_cast<size_t>(vi));
            const std::string video_key = videos.paths().empty()
                                              ? "mem:" + std::to_string(vi)
                                              : videos.paths()[static_cast<size_t>(vi)];

            // teacher labels for the full video
            TrackResult<T> labels;
            if (cfg.teacher_agg == "random") {
                const size_t ti = sample_teacher(teachers, step * cfg.batch + b);
                labels = cached_pseudo_label(teachers, ti, scene.video, video_key, queries,
                                             cfg.cache_dir, cfg.seed);
            } else {
                std::vector<TrackResult<T>> all;
                for (size_t ti = 0; ti < teachers.size(); ++ti)
                    all.push_back(cached_pseudo_label(teachers, ti, scene.video, video_key, queries,
                                                      cfg.cache_dir, cfg.seed));
                labels = distill_detail::aggregate_labels(all, cfg.teacher_agg);
            }

            // occlusion indicator for the 1/5 weight
            const int64_t Nq = labels.tracks.dim(0);
            const int64_t Tv = labels.tracks.dim(1);
            Tensor<T> label_vis({Nq, Tv});
            for (int64_t j = 0; j < label_vis.numel(); ++j)
                label_vis[j] = (!cfg.teacher_vis_as_occlusion ||
                                labels.visibility_prob[j] > T(0.5))
                                   ? T(1)
                                   : T(0);

            Var<T> clip_total(Tensor<T>::scalar(T(0)), false);
            if (cfg.student_mode == "offline") {
                const int64_t lmin = (Tv + 1) / 2;
                const int64_t len = rng.uniform_int(lmin, Tv);
                const int64_t start = rng.uniform_int(0, Tv - len);
                // keep queries whose frame lies inside the trimmed span
                std::vector<int64_t> keep;
                for (size_t qi = 0; qi < queries.size(); ++qi)
                    if (queries[qi].t >= start && queries[qi].t < start + len)
                        keep.push_back(static_cast<int64_t>(qi));
                if (keep.empty()) continue;
                const int64_t N = static_cast<int64_t>(keep.size());
                Tensor<T> qxy({N, 2});
                std::vector<int64_t> tq(static_cast<size_t>(N));
                Tensor<T> gt({N, len, 2}), gtv({N, len});
                for (int64_t j = 0; j < N; ++j) {
                    const Query& q = queries[static_cast<size_t>(keep[static_cast<size_t>(j)])];
                    qxy.at(j, 0) = static_cast<T>(q.x);
                    qxy.at(j, 1) = static_cast<T>(q.y);
                    tq[static_cast<size_t>(j)] = q.t - start;
                    for (int64_t t = 0; t < len; ++t) {
                        gt.at(j, t, 0) = labels.tracks.at(keep[static_cast<size_t>(j)], start + t, 0);
                        gt.at(j, t, 1) = labels.tracks.at(keep[static_cast<size_t>(j)], start + t, 1);
                        gtv.at(j, t) = label_vis.at(keep[static_cast<size_t>(j)], start + t);
                    }
                }
                Tensor<float> sub({len, 3, scene.height(), scene.width()});
                std::copy(scene.video.data() + start * 3 * scene.height() * scene.width(),
                          scene.video.data() + (start + len) * 3 * scene.height() * scene.width(),
                          sub.data());
                Var<T> video(video_to_nhwc<T>(sub), false);
                FeaturePyramid<T> pyr = student.extract_pyramid(video);
                auto qf = student.query_features(pyr, tq, qxy);
                auto states = student.iterate(pyr, qf, qxy, tq, init_track_state(qxy, len),
                                              student.config().m_train);
                clip_total = track_loss(states, gt, gtv, cfg.loss);
            } else {
                // online protocol: unrolled windows with forward-only masks
                const int64_t Tw = student.config().window_len, stride = Tw / 2;
                int64_t len = std::min<int64_t>(cfg.clip_len, Tv);
                len = Tw + ((len - Tw) / stride) * stride;
                const int64_t start = rng.uniform_int(0, Tv - len);
                std::vector<int64_t> keep;
                for (size_t qi = 0; qi < queries.size(); ++qi)
                    if (queries[qi].t >= start && queries[qi].t < start + len)
                        keep.push_back(static_cast<int64_t>(qi));
                if (keep.empty()) continue;
                const int64_t N = static_cast<int64_t>(keep.size());
                Tensor<T> qxy({N, 2});
                std::vector<int64_t> tq(static_cast<size_t>(N));
                Tensor<T> gt({N, len, 2}), gtv({N, len});
                for (int64_t j = 0; j < N; ++j) {
                    const Query& q = queries[static_cast<size_t>(keep[static_cast<size_t>(j)])];
                    qxy.at(j, 0) = static_cast<T>(q.x);
                    qxy.at(j, 1) = static_cast<T>(q.y);
                    tq[static_cast<size_t>(j)] = q.t - start;
                    for (int64_t t = 0; t < len; ++t) {
                        gt.at(j, t, 0) = labels.tracks.at(keep[static_cast<size_t>(j)], start + t, 0);
                        gt.at(j, t, 1) = labels.tracks.at(keep[static_cast<size_t>(j)], start + t, 1);
                        gtv.at(j, t) = label_vis.at(keep[static_cast<size_t>(j)], start + t);
                    }
                }
                Tensor<float> sub({len, 3, scene.height(), scene.width()});
                std::copy(scene.video.data() + start * 3 * scene.height() * scene.width(),
                          scene.video.data() + (start + len) * 3 * scene.height() * scene.width(),
                          sub.data());
                Var<T> video(video_to_nhwc<T>(sub), false);
                auto unrolled = unroll_online_windows(student, video, qxy, tq,
                                                      student.config().m_train);
                int64_t used_windows = 0;
                Var<T> sum(Tensor<T>::scalar(T(0)), false);
                for (size_t w = 0; w < unrolled.states.size(); ++w) {
                    bool any = false;
                    for (int64_t j = 0; j < unrolled.masks[w].numel(); ++j)
                        if (unrolled.masks[w][j] != T(0)) {
                            any = true;
                            break;
                        }
                    if (!any) continue;
                    const int64_t s = unrolled.starts[w];
                    Tensor<T> wgt({N, Tw, 2}), wgv({N, Tw});
                    for (int64_t j = 0; j < N; ++j)
                        for (int64_t t = 0; t < Tw; ++t) {
                            wgt.at(j, t, 0) = gt.at(j, s + t, 0);
                            wgt.at(j, t, 1) = gt.at(j, s + t, 1);
                            wgv.at(j, t) = gtv.at(j, s + t);
                        }
                    sum = vadd(sum, track_loss(unrolled.states[w], wgt, wgv, cfg.loss,
                                               unrolled.masks[w]));
                    ++used_windows;
                }
                if (used_windows == 0) continue;
                clip_total = mul_scalar(sum, T(1) / static_cast<T>(used_windows));
            }
            batch_total = vadd(batch_total, clip_total);
            log_track += static_cast<double>(clip_total.val()[0]);
            ++used_in_batch;
        }

        if (used_in_batch == 0) continue;
        batch_total = mul_scalar(batch_total, T(1) / static_cast<T>(used_in_batch));
        log_track /= static_cast<double>(used_in_batch);
        if (!std::isfinite(log_track))
            throw std::runtime_error(format_msg("non-finite distillation loss at step ", step));
        batch_total.backward();
        opt.clip_grad_norm(T(cfg.clip_norm));
        const double lr = sched.at(step);
        opt.step(static_cast<T>(lr));

        if (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
            curve.push_back({step, log_track, 0.0, 0.0, lr});
            if (verbose)
                std::fprintf(stderr, "distill step %6ld  track %.5f  lr %.2e\n",
                             static_cast<long>(step), log_track, lr);
        }
        if (cfg.checkpoint_every > 0 && step > 0 && step % cfg.checkpoint_every == 0)
            student.save_checkpoint(out_dir + "/student_step" + std::to_string(step) + ".ptc",
                                    {{"step", step}, {"distilled", true}});
    }
    student.save_checkpoint(out_dir + "/student.ptc",
                            {{"step", cfg.steps}, {"distilled", true}});
    write_loss_curve(out_dir + "/distill_curve.csv", curve);
    return curve;
}

}  // namespace pointtrack
