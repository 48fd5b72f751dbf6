#pragma once

#include "pointtrack/container.hpp"
#include "pointtrack/correlation.hpp"
#include "pointtrack/feature_net.hpp"
#include "pointtrack/transformer.hpp"

namespace pointtrack {

/// A point to track: query frame index plus pixel coordinates in that frame.
struct Query {
    int64_t t = 0;
    double x = 0, y = 0;
};

/// Full tracking model: feature pyramid trunk, shared correlation projector,
/// and the iterative refinement transformer.
template <typename T>
class TrackerModel {
  public:
    TrackerModel() = default;

    explicit TrackerModel(const ModelConfig& cfg, uint64_t seed = 0) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(hash_combine(splitmix64(seed), 0x706b6d6fULL));
        Rng frng = rng.fork("feature_net");
        fnet_ = FeatureNet<T>(cfg_, frng);
        Rng crng = rng.fork("correlation");
        corr_ = CorrProjector<T>(cfg_, crng);
        Rng trng = rng.fork("transformer");
        transformer_ = TrackTransformer<T>(cfg_, trng);
        Rng erng = rng.fork("time_table");
        Tensor<T> table({cfg_.time_embed_len, cfg_.width});
        for (int64_t i = 0; i < table.numel(); ++i)
            table[i] = static_cast<T>(erng.normal(0.0, 0.02));
        time_table_ = Var<T>(std::move(table), true);
    }

    const ModelConfig& config() const { return cfg_; }
    ModelConfig& mutable_config() { return cfg_; }
    const TrackTransformer<T>& transformer() const { return transformer_; }
    const CorrProjector<T>& corr_projector() const { return corr_; }

    FeaturePyramid<T> extract_pyramid(const Var<T>& video_nhwc) const {
        return fnet_.forward(video_nhwc);
    }

    /// Neighborhood features at the query location in the query frame, per scale.
    std::vector<Var<T>> query_features(const FeaturePyramid<T>& pyr,
                                       const std::vector<int64_t>& query_frame,
                                       const Tensor<T>& query_xy) const {
        std::vector<Var<T>> feats;
        Var<T> coords(query_xy, false);
        for (int s = 0; s < cfg_.scales; ++s)
            feats.push_back(sample_query_neighborhoods(pyr.maps[static_cast<size_t>(s)], query_frame,
                                                       coords, static_cast<T>(cfg_.scale_divisor(s + 1)),
                                                       cfg_.delta));
        return feats;
    }

    Var<T> time_embedding(int64_t T_len) const {
        if (cfg_.time_embed == "learned") return interpolate_time_embeddings(time_table_, T_len);
        return Var<T>(fourier_time_table<T>(T_len, cfg_.width), false);
    }

    /// Correlation features for the current track estimates: [N,T,p*S].
    Var<T> correlation_features(const FeaturePyramid<T>& pyr, const std::vector<Var<T>>& qfeats,
                                const Var<T>& track_xy) const {
        std::vector<Var<T>> per_scale;
        per_scale.reserve(static_cast<size_t>(cfg_.scales));
        for (int s = 0; s < cfg_.scales; ++s) {
            Var<T> nb = sample_neighborhoods(pyr.maps[static_cast<size_t>(s)], track_xy,
                                             static_cast<T>(cfg_.scale_divisor(s + 1)), cfg_.delta);
            per_scale.push_back(corr4d_batched(qfeats[static_cast<size_t>(s)], nb));
        }
        return corr_.project(per_scale);
    }

    /// M refinement iterations; correlations are resampled around the updated
    /// tracks after every step. Points with pin_frame[i] >= 0 have that frame's
    /// coordinates reset to the query after each update (bit-exact).
    /// Returns all M intermediate states.
    std::vector<TrackState<T>> iterate(const FeaturePyramid<T>& pyr,
                                       const std::vector<Var<T>>& qfeats,
                                       const Tensor<T>& query_xy,
                                       const std::vector<int64_t>& pin_frame, TrackState<T> state,
                                       int M) const {
        const int64_t N = state.num_points(), Tn = state.num_frames();
        PTK_CHECK_SHAPE(pyr.frames() == Tn, "pyramid frame count mismatch");
        PTK_CHECK_SHAPE(static_cast<int64_t>(pin_frame.size()) == N, "pin list size mismatch");
        PTK_CHECK_PARAM(M >= 1, "need at least one iteration");

        Var<T> time_embed = time_embedding(Tn);

        // pin mask and pinned values are constants of this call
        Tensor<T> keep({N, Tn, 2});
        Tensor<T> pin_val({N, Tn, 2});
        keep.fill(T(1));
        bool any_pin = false;
        for (int64_t i = 0; i < N; ++i) {
            const int64_t tq = pin_frame[static_cast<size_t>(i)];
            if (tq < 0) continue;
            PTK_CHECK_SHAPE(tq < Tn, "pin frame out of range");
            any_pin = true;
            keep.at(i, tq, 0) = T(0);
            keep.at(i, tq, 1) = T(0);
            pin_val.at(i, tq, 0) = query_xy.at(i, 0);
            pin_val.at(i, tq, 1) = query_xy.at(i, 1);
        }
        Var<T> keep_c(keep, false), pin_c(pin_val, false);

        std::vector<TrackState<T>> states;
        states.reserve(static_cast<size_t>(M));
        for (int m = 1; m <= M; ++m) {
            Var<T> corr = correlation_features(pyr, qfeats, state.P);
            Var<T> tokens = build_tokens(state, corr, cfg_.fourier_bands);
            auto deltas = transformer_.forward(tokens, time_embed);
            TrackState<T> next;
            next.P = vadd(state.P, deltas.dP);
            if (any_pin) next.P = vadd(vmul(next.P, keep_c), pin_c);
            next.C = vadd(state.C, deltas.dC);
            next.V = vadd(state.V, deltas.dV);
            next.iteration = state.iteration + 1;
            states.push_back(next);
            state = next;
        }
        return states;
    }

    ParamList<T> params() {
        ParamList<T> out;
        fnet_.collect("feature_net", out);
        corr_.collect("corr_mlp", out);
        transformer_.collect("transformer", out);
        out.push_back({"time_table", time_table_});
        return out;
    }

    ParamList<T> confvis_head_params() {
        ParamList<T> out;
        transformer_.collect_confvis_head("transformer", out);
        return out;
    }

    void save_checkpoint(const std::string& path, nlohmann::json extra = {}) {
        ContainerData c;
        c.kind = "checkpoint";
        c.meta["model"] = cfg_.to_json();
        c.meta["extra"] = std::move(extra);
        for (auto& [name, var] : params())
            c.tensors.emplace_back(name, var.val().template cast<float>());
        write_container(path, c);
    }

    static TrackerModel load_checkpoint(const std::string& path) {
        ContainerData c = read_container(path, "checkpoint");
        TrackerModel model(ModelConfig::from_json(c.meta.at("model")), /*seed=*/0);
        for (auto& [name, var] : model.params()) {
            const Tensor<float>& stored = c.tensor(name);
            PTK_CHECK_SHAPE(stored.shape() == var.val().shape(), "checkpoint tensor ", name,
                            " has shape ", shape_str(stored.shape()), ", expected ",
                            shape_str(var.val().shape()));
            Tensor<T> cast = stored.template cast<T>();
            std::copy(cast.data(), cast.data() + cast.numel(), var.mutable_val().data());
        }
        return model;
    }

    static nlohmann::json checkpoint_extra(const std::string& path) {
        ContainerData c = read_container(path, "checkpoint");
        return c.meta.value("extra", nlohmann::json::object());
    }

  private:
    ModelConfig cfg_;
    FeatureNet<T> fnet_;
    CorrProjector<T> corr_;
    TrackTransformer<T> transformer_;
    Var<T> time_table_;
};

}  // namespace pointtrack
