#pragma once

#include "pointtrack/tracker.hpp"

namespace pointtrack {

template <typename T>
struct TrackResult {
    Tensor<T> tracks;           // [N,T,2]
    Tensor<T> visibility_prob;  // [N,T] in [0,1]
    Tensor<T> confidence_prob;  // [N,T] in [0,1]

    int64_t num_points() const { return tracks.dim(0); }
    int64_t num_frames() const { return tracks.dim(1); }
};

namespace engine_detail {

template <typename T>
T sigmoid_scalar(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

inline void validate_queries(const std::vector<Query>& queries, int64_t T_len, int64_t H, int64_t W,
                             bool check_frame_range) {
    PTK_CHECK_PARAM(!queries.empty(), "no queries given");
    for (const auto& q : queries) {
        PTK_CHECK_PARAM(q.t >= 0, "query frame ", q.t, " negative");
        if (check_frame_range) PTK_CHECK_PARAM(q.t < T_len, "query frame ", q.t, " beyond video end");
        PTK_CHECK_PARAM(q.x >= 0 && q.x < static_cast<double>(W) && q.y >= 0 &&
                            q.y < static_cast<double>(H),
                        "query coordinates (", q.x, ",", q.y, ") outside the frame");
    }
}

template <typename T>
Tensor<T> query_xy(const std::vector<Query>& queries) {
    Tensor<T> q({static_cast<int64_t>(queries.size()), 2});
    for (size_t i = 0; i < queries.size(); ++i) {
        q.at(static_cast<int64_t>(i), 0) = static_cast<T>(queries[i].x);
        q.at(static_cast<int64_t>(i), 1) = static_cast<T>(queries[i].y);
    }
    return q;
}

}  // namespace engine_detail

/// Whole-video tracking in a single window: bidirectional, every frame of every
/// track receives a prediction regardless of the query frame.
template <typename T>
TrackResult<T> track_offline(const TrackerModel<T>& model, const Tensor<float>& video_chw,
                             const std::vector<Query>& queries, int iterations = -1) {
    const int64_t Tv = video_chw.dim(0), H = video_chw.dim(2), W = video_chw.dim(3);
    if (Tv > model.config().max_video_len)
        throw capacity_error(format_msg("video of ", Tv, " frames exceeds the offline capacity of ",
                                        model.config().max_video_len,
                                        " frames; raise max_video_len or track online"));
    engine_detail::validate_queries(queries, Tv, H, W, true);
    const int M = iterations > 0 ? iterations : model.config().m_eval;

    NoGradGuard ng;
    Var<T> video(video_to_nhwc<T>(video_chw), false);
    FeaturePyramid<T> pyr = model.extract_pyramid(video);
    return track_offline_with_pyramid(model, pyr, queries, M);
}

/// Offline tracking with a precomputed pyramid (shared across per-query runs).
template <typename T>
TrackResult<T> track_offline_with_pyramid(const TrackerModel<T>& model,
                                          const FeaturePyramid<T>& pyr,
                                          const std::vector<Query>& queries, int iterations = -1) {
    NoGradGuard ng;
    const int M = iterations > 0 ? iterations : model.config().m_eval;
    const int64_t Tv = pyr.frames();
    Tensor<T> qxy = engine_detail::query_xy<T>(queries);
    std::vector<int64_t> tq(queries.size());
    for (size_t i = 0; i < queries.size(); ++i) tq[i] = queries[i].t;

    auto qf = model.query_features(pyr, tq, qxy);
    auto states = model.iterate(pyr, qf, qxy, tq, init_track_state(qxy, Tv), M);
    const TrackState<T>& fin = states.back();

    TrackResult<T> r;
    r.tracks = fin.P.val().clone();
    r.visibility_prob = Tensor<T>(fin.V.val().shape());
    r.confidence_prob = Tensor<T>(fin.C.val().shape());
    for (int64_t i = 0; i < r.visibility_prob.numel(); ++i) {
        r.visibility_prob[i] = engine_detail::sigmoid_scalar(fin.V.val()[i]);
        r.confidence_prob[i] = engine_detail::sigmoid_scalar(fin.C.val()[i]);
    }
    return r;
}

/// Streaming sliding-window tracker: windows of T' frames advancing by T'/2.
/// The overlapping half of the previous window initializes the next one; the
/// newer window's predictions win on overlapped frames. Points are tracked
/// forward-only from their query frame; earlier frames emit the query
/// coordinates with zero visibility.
template <typename T>
class OnlineTracker {
  public:
    OnlineTracker(const TrackerModel<T>& model, std::vector<Query> queries, int iterations = -1)
        : model_(model),
          queries_(std::move(queries)),
          window_(model.config().window_len),
          stride_(model.config().window_len / 2),
          m_(iterations > 0 ? iterations : model.config().m_eval) {
        PTK_CHECK_PARAM(!queries_.empty(), "no queries given");
        const int64_t N = static_cast<int64_t>(queries_.size());
        qxy_ = engine_detail::query_xy<T>(queries_);
        activated_.assign(static_cast<size_t>(N), false);
        // zero features until a point's query frame arrives
        const int64_t k2 = model.config().nbhd_side() * model.config().nbhd_side();
        for (int s = 0; s < model.config().scales; ++s)
            qfeats_cached_.push_back(Tensor<T>({N, k2, model.config().d}));
    }

    int64_t frames_seen() const { return frames_seen_; }
    int64_t windows_run() const { return windows_run_; }

    /// Frames must arrive in order, starting at index 0.
    void push_frame(const Tensor<float>& frame_chw, int64_t frame_index) {
        if (frame_index != frames_seen_)
            throw stream_error(format_msg("out-of-order frame: expected index ", frames_seen_,
                                          ", got ", frame_index));
        PTK_CHECK_SHAPE(frame_chw.ndim() == 3 && frame_chw.dim(0) == 3, "frame must be [3,H,W]");
        if (frames_seen_ == 0) {
            H_ = frame_chw.dim(1);
            W_ = frame_chw.dim(2);
            engine_detail::validate_queries(queries_, -1, H_, W_, false);
        }
        Tensor<float> one({1, 3, H_, W_}, std::vector<float>(frame_chw.data(), frame_chw.data() + frame_chw.numel()));
        buffer_.push_back(video_to_nhwc<T>(one));
        ++frames_seen_;
        if (static_cast<int64_t>(buffer_.size()) + window_start_ == frames_seen_ &&
            static_cast<int64_t>(buffer_.size()) == window_)
            run_window(window_);
    }

    /// Flushes the trailing partial window (padded by repeating the last frame).
    void finish() {
        if (finished_) return;
        finished_ = true;
        PTK_CHECK_PARAM(frames_seen_ > 0, "no frames pushed");
        const int64_t pending = frames_seen_ - emitted_upto_;
        if (pending > 0) {
            const int64_t valid = static_cast<int64_t>(buffer_.size());
            while (static_cast<int64_t>(buffer_.size()) < window_)
                buffer_.push_back(buffer_.back().clone());
            run_window(valid);
        }
    }

    /// Assembled result over all frames seen so far; call after finish().
    TrackResult<T> result() const {
        const int64_t N = static_cast<int64_t>(queries_.size());
        const int64_t Tv = frames_seen_;
        TrackResult<T> r;
        r.tracks = Tensor<T>({N, Tv, 2});
        r.visibility_prob = Tensor<T>({N, Tv});
        r.confidence_prob = Tensor<T>({N, Tv});
        for (int64_t i = 0; i < N; ++i)
            for (int64_t t = 0; t < Tv; ++t) {
                if (t < queries_[static_cast<size_t>(i)].t ||
                    t >= static_cast<int64_t>(emitted_p_.size())) {
                    // not yet activated (or never covered): query placeholder
                    r.tracks.at(i, t, 0) = qxy_.at(i, 0);
                    r.tracks.at(i, t, 1) = qxy_.at(i, 1);
                    r.visibility_prob.at(i, t) = T(0);
                    r.confidence_prob.at(i, t) = T(0);
                } else {
                    r.tracks.at(i, t, 0) = emitted_p_[static_cast<size_t>(t)].at(i, 0);
                    r.tracks.at(i, t, 1) = emitted_p_[static_cast<size_t>(t)].at(i, 1);
                    r.visibility_prob.at(i, t) =
                        engine_detail::sigmoid_scalar(emitted_v_[static_cast<size_t>(t)][i]);
                    r.confidence_prob.at(i, t) =
                        engine_detail::sigmoid_scalar(emitted_c_[static_cast<size_t>(t)][i]);
                }
            }
        return r;
    }

  private:
    void run_window(int64_t valid) {
        NoGradGuard ng;
        const int64_t N = static_cast<int64_t>(queries_.size());
        const int64_t start = window_start_;

        // stack buffered frames into one [T',H,W,3] tensor
        Tensor<T> frames({window_, H_, W_, 3});
        for (int64_t t = 0; t < window_; ++t)
            std::copy(buffer_[static_cast<size_t>(t)].data(),
                      buffer_[static_cast<size_t>(t)].data() + buffer_[static_cast<size_t>(t)].numel(),
                      frames.data() + t * H_ * W_ * 3);
        FeaturePyramid<T> pyr = model_.extract_pyramid(Var<T>(frames, false));

        // initialize this window's state
        TrackState<T> state = init_track_state(qxy_, window_);
        Tensor<T>& P = state.P.mutable_val();
        Tensor<T>& C = state.C.mutable_val();
        Tensor<T>& V = state.V.mutable_val();
        if (windows_run_ > 0) {
            for (int64_t i = 0; i < N; ++i) {
                if (!activated_[static_cast<size_t>(i)]) continue;
                for (int64_t t = 0; t < window_; ++t) {
                    // overlap half carries the previous window's predictions;
                    // the rest repeats the last overlapped frame's state
                    const int64_t src = std::min(stride_ + t, window_ - 1);
                    P.at(i, t, 0) = prev_p_.at(i, src, 0);
                    P.at(i, t, 1) = prev_p_.at(i, src, 1);
                    C.at(i, t) = prev_c_.at(i, src);
                    V.at(i, t) = prev_v_.at(i, src);
                }
            }
        }

        // activate queries whose frame falls inside this window
        std::vector<int64_t> pin(static_cast<size_t>(N), -1);
        std::vector<int64_t> newly;
        for (int64_t i = 0; i < N; ++i) {
            const int64_t tq = queries_[static_cast<size_t>(i)].t;
            if (tq >= start && tq < start + window_) {
                pin[static_cast<size_t>(i)] = tq - start;
                if (!activated_[static_cast<size_t>(i)]) {
                    newly.push_back(i);
                    activated_[static_cast<size_t>(i)] = true;
                }
            }
        }
        if (!newly.empty()) {
            std::vector<int64_t> frames_ix(newly.size());
            Tensor<T> coords({static_cast<int64_t>(newly.size()), 2});
            for (size_t j = 0; j < newly.size(); ++j) {
                frames_ix[j] = queries_[static_cast<size_t>(newly[j])].t - start;
                coords.at(static_cast<int64_t>(j), 0) = qxy_.at(newly[j], 0);
                coords.at(static_cast<int64_t>(j), 1) = qxy_.at(newly[j], 1);
            }
            auto qf = model_.query_features(pyr, frames_ix, coords);
            for (int s = 0; s < model_.config().scales; ++s) {
                auto& cache = qfeats_cached_[static_cast<size_t>(s)];
                const int64_t block = qf[static_cast<size_t>(s)].dim(1) * qf[static_cast<size_t>(s)].dim(2);
                for (size_t j = 0; j < newly.size(); ++j)
                    std::copy(qf[static_cast<size_t>(s)].val().data() + static_cast<int64_t>(j) * block,
                              qf[static_cast<size_t>(s)].val().data() + static_cast<int64_t>(j + 1) * block,
                              cache.data() + newly[j] * block);
            }
        }

        std::vector<Var<T>> qfeats;
        for (auto& c : qfeats_cached_) qfeats.push_back(Var<T>(c, false));
        auto states = model_.iterate(pyr, qfeats, qxy_, pin, state, m_);
        const TrackState<T>& fin = states.back();

        // emit: the newer window wins on overlapped frames; padded frames are dropped
        if (static_cast<int64_t>(emitted_p_.size()) < start + valid) {
            emitted_p_.resize(static_cast<size_t>(start + valid));
            emitted_c_.resize(static_cast<size_t>(start + valid));
            emitted_v_.resize(static_cast<size_t>(start + valid));
        }
        for (int64_t t = 0; t < valid; ++t) {
            Tensor<T> pt({N, 2});
            std::vector<T> ct(static_cast<size_t>(N)), vt(static_cast<size_t>(N));
            for (int64_t i = 0; i < N; ++i) {
                pt.at(i, 0) = fin.P.val().at(i, t, 0);
                pt.at(i, 1) = fin.P.val().at(i, t, 1);
                ct[static_cast<size_t>(i)] = fin.C.val().at(i, t);
                vt[static_cast<size_t>(i)] = fin.V.val().at(i, t);
            }
            emitted_p_[static_cast<size_t>(start + t)] = std::move(pt);
            emitted_c_[static_cast<size_t>(start + t)] = std::move(ct);
            emitted_v_[static_cast<size_t>(start + t)] = std::move(vt);
        }
        emitted_upto_ = start + valid;

        prev_p_ = fin.P.val().clone();
        prev_c_ = fin.C.val().clone();
        prev_v_ = fin.V.val().clone();
        ++windows_run_;
        window_start_ += stride_;
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<size_t>(stride_));
    }

    const TrackerModel<T>& model_;
    std::vector<Query> queries_;
    Tensor<T> qxy_;
    int64_t window_, stride_;
    int m_;
    int64_t H_ = 0, W_ = 0;
    int64_t frames_seen_ = 0;
    int64_t window_start_ = 0;
    int64_t windows_run_ = 0;
    int64_t emitted_upto_ = 0;
    bool finished_ = false;
    std::vector<Tensor<T>> buffer_;  // pending frames, NHWC [1,H,W,3] each
    std::vector<bool> activated_;
    std::vector<Tensor<T>> qfeats_cached_;  // per scale [N,K2,d]
    Tensor<T> prev_p_, prev_c_, prev_v_;
    std::vector<Tensor<T>> emitted_p_;          // per frame [N,2]
    std::vector<std::vector<T>> emitted_c_, emitted_v_;  // per frame logits
};

/// Convenience wrapper: streams a whole video through the online tracker.
template <typename T>
TrackResult<T> track_online(const TrackerModel<T>& model, const Tensor<float>& video_chw,
                            const std::vector<Query>& queries, int iterations = -1) {
    const int64_t Tv = video_chw.dim(0), H = video_chw.dim(2), W = video_chw.dim(3);
    engine_detail::validate_queries(queries, Tv, H, W, true);
    OnlineTracker<T> tracker(model, queries, iterations);
    Tensor<float> frame({3, H, W});
    for (int64_t t = 0; t < Tv; ++t) {
        std::copy(video_chw.data() + t * 3 * H * W, video_chw.data() + (t + 1) * 3 * H * W,
                  frame.data());
        tracker.push_frame(frame, t);
    }
    tracker.finish();
    return tracker.result();
}

// ---------------------------------------------------------------------------
// support points and visibility gating
// ---------------------------------------------------------------------------

struct SupportConfig {
    int global_grid = 5;
    int local_grid = 8;
    double local_radius_frac = 0.125;  // of frame width
};

/// Appends a regular global grid and a per-query local grid of context points.
/// The returned mask marks the original queries so callers can strip supports.
inline std::pair<std::vector<Query>, std::vector<uint8_t>> add_support_points(
    const std::vector<Query>& queries, int64_t W, int64_t H, const SupportConfig& cfg = {}) {
    PTK_CHECK_PARAM(!queries.empty(), "no queries to support");
    std::vector<Query> out = queries;
    std::vector<uint8_t> mask(queries.size(), 1);
    auto clampx = [&](double v) { return std::clamp(v, 0.0, static_cast<double>(W - 1)); };
    auto clampy = [&](double v) { return std::clamp(v, 0.0, static_cast<double>(H - 1)); };

    const int64_t t0 = queries.front().t;
    for (int gy = 0; gy < cfg.global_grid; ++gy)
        for (int gx = 0; gx < cfg.global_grid; ++gx) {
            Query q;
            q.t = t0;
            q.x = clampx((gx + 0.5) * static_cast<double>(W) / cfg.global_grid);
            q.y = clampy((gy + 0.5) * static_cast<double>(H) / cfg.global_grid);
            out.push_back(q);
            mask.push_back(0);
        }
    const double radius = cfg.local_radius_frac * static_cast<double>(W);
    for (const auto& anchor : queries) {
        for (int gy = 0; gy < cfg.local_grid; ++gy)
            for (int gx = 0; gx < cfg.local_grid; ++gx) {
                Query q;
                q.t = anchor.t;
                q.x = clampx(anchor.x + (2.0 * gx / (cfg.local_grid - 1) - 1.0) * radius);
                q.y = clampy(anchor.y + (2.0 * gy / (cfg.local_grid - 1) - 1.0) * radius);
                out.push_back(q);
                mask.push_back(0);
            }
    }
    return {out, mask};
}

/// visible = visibility * confidence > threshold.
template <typename T>
Tensor<uint8_t> gate_visibility(const TrackResult<T>& result, double threshold) {
    PTK_CHECK_PARAM(threshold > 0.0 && threshold < 1.0, "visibility threshold must lie in (0,1), got ",
                    threshold);
    Tensor<uint8_t> out({result.tracks.dim(0), result.tracks.dim(1)});
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<double>(result.visibility_prob[i]) *
                             static_cast<double>(result.confidence_prob[i]) >
                         threshold
                     ? 1
                     : 0;
    return out;
}

}  // namespace pointtrack
