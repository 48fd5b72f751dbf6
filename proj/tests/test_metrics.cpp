#include <catch2/catch_amalgamated.hpp>

#include "pointtrack/metrics.hpp"
#include "testutil.hpp"

using namespace pointtrack;
using ptkt::random_tensor;

namespace {

// scalar re-implementations used as the metric oracle
struct MetricOracle {
    static double err(const Tensor<double>& p, const Tensor<double>& g, int64_t j) {
        const double dx = p[2 * j] - g[2 * j], dy = p[2 * j + 1] - g[2 * j + 1];
        return std::sqrt(dx * dx + dy * dy);
    }

    static std::optional<double> delta_mean(const Tensor<double>& p, const Tensor<double>& g,
                                            const Tensor<uint8_t>& mask) {
        int64_t n = 0;
        std::array<int64_t, 5> hits{};
        for (int64_t j = 0; j < mask.numel(); ++j) {
            if (!mask[j]) continue;
            ++n;
            for (size_t k = 0; k < kDeltaThresholds.size(); ++k)
                if (err(p, g, j) < kDeltaThresholds[k]) ++hits[k];
        }
        if (!n) return std::nullopt;
        double m = 0;
        for (size_t k = 0; k < 5; ++k) m += static_cast<double>(hits[k]) / static_cast<double>(n);
        return m / 5.0;
    }

    static std::optional<double> aj(const Tensor<double>& p, const Tensor<uint8_t>& pv,
                                    const Tensor<double>& g, const Tensor<uint8_t>& gv,
                                    const Tensor<uint8_t>& mask) {
        int64_t gt_pos = 0;
        std::array<int64_t, 5> tp{}, fp{};
        for (int64_t j = 0; j < mask.numel(); ++j) {
            if (!mask[j]) continue;
            if (gv[j]) ++gt_pos;
            for (size_t k = 0; k < 5; ++k) {
                const bool within = err(p, g, j) < kDeltaThresholds[k];
                if (gv[j] && pv[j] && within) ++tp[k];
                if (pv[j] && (!gv[j] || !within)) ++fp[k];
            }
        }
        if (!gt_pos) return std::nullopt;
        double s = 0;
        for (size_t k = 0; k < 5; ++k) {
            const int64_t denom = gt_pos + fp[k];
            s += denom ? static_cast<double>(tp[k]) / static_cast<double>(denom) : 0.0;
        }
        return s / 5.0;
    }

    static double oa(const Tensor<uint8_t>& pv, const Tensor<uint8_t>& gv) {
        int64_t agree = 0;
        for (int64_t j = 0; j < gv.numel(); ++j)
            if ((pv[j] != 0) == (gv[j] != 0)) ++agree;
        return static_cast<double>(agree) / static_cast<double>(gv.numel());
    }
};

}  // namespace

TEST_CASE("delta_avg hand cases") {
    // perfect prediction
    Rng rng(1);
    Tensor<double> gt = random_tensor<double>({2, 3, 2}, rng, 0, 100);
    Tensor<uint8_t> mask = Tensor<uint8_t>::full({2, 3}, 1);
    DeltaResult d = delta_avg(gt, gt, mask);
    REQUIRE(d.mean.has_value());
    REQUIRE(*d.mean == 1.0);

    // single point at 3 px: thresholds 1,2 miss; 4,8,16 hit
    Tensor<double> p({1, 1, 2}, {3.0, 0.0});
    Tensor<double> g({1, 1, 2}, {0.0, 0.0});
    Tensor<uint8_t> m1 = Tensor<uint8_t>::full({1, 1}, 1);
    d = delta_avg(p, g, m1);
    REQUIRE(*d.per_threshold[0] == 0.0);
    REQUIRE(*d.per_threshold[1] == 0.0);
    REQUIRE(*d.per_threshold[2] == 1.0);
    REQUIRE(*d.per_threshold[3] == 1.0);
    REQUIRE(*d.per_threshold[4] == 1.0);
    REQUIRE(*d.mean == Catch::Approx(0.6));

    // errors 0.5 and 20 px: every threshold catches exactly one of two
    Tensor<double> p2({2, 1, 2}, {0.5, 0.0, 20.0, 0.0});
    Tensor<double> g2({2, 1, 2});
    Tensor<uint8_t> m2 = Tensor<uint8_t>::full({2, 1}, 1);
    d = delta_avg(p2, g2, m2);
    for (size_t k = 0; k < 5; ++k) REQUIRE(*d.per_threshold[k] == 0.5);
    REQUIRE(*d.mean == 0.5);

    // empty mask: undefined, not zero
    Tensor<uint8_t> none({2, 1});
    d = delta_avg(p2, g2, none);
    REQUIRE_FALSE(d.mean.has_value());
}

TEST_CASE("threshold comparison is strictly less-than") {
    Tensor<double> p({1, 1, 2}, {4.0, 0.0});
    Tensor<double> g({1, 1, 2});
    Tensor<uint8_t> m = Tensor<uint8_t>::full({1, 1}, 1);
    DeltaResult d = delta_avg(p, g, m);
    REQUIRE(*d.per_threshold[2] == 0.0);  // err 4 is not < 4
    REQUIRE(*d.per_threshold[3] == 1.0);
}

TEST_CASE("occlusion accuracy hand cases") {
    Tensor<uint8_t> a({2, 2}, {1, 0, 1, 0});
    REQUIRE(occlusion_accuracy(a, a) == 1.0);
    Tensor<uint8_t> flipped({2, 2}, {0, 1, 0, 1});
    REQUIRE(occlusion_accuracy(a, flipped) == 0.0);
    Tensor<uint8_t> mostly({2, 2}, {1, 0, 1, 1});
    REQUIRE(occlusion_accuracy(mostly, a) == 0.75);
    Tensor<uint8_t> wrong({4});
    REQUIRE_THROWS_AS(occlusion_accuracy(a, wrong), shape_error);
}

TEST_CASE("average jaccard hand cases") {
    // perfect prediction
    Rng rng(2);
    Tensor<double> gt = random_tensor<double>({3, 2, 2}, rng, 0, 50);
    Tensor<uint8_t> vis = Tensor<uint8_t>::full({3, 2}, 1);
    Tensor<uint8_t> mask = Tensor<uint8_t>::full({3, 2}, 1);
    REQUIRE(*average_jaccard(gt, vis, gt, vis, mask) == 1.0);

    // everything predicted occluded while gt is visible: TP=0, FN>0
    Tensor<uint8_t> none({3, 2});
    REQUIRE(*average_jaccard(gt, none, gt, vis, mask) == 0.0);

    // 2 points x 2 frames; mask only two cells: one TP (err 0.5 < 4), one FP
    Tensor<double> pred({2, 2, 2});
    Tensor<double> g2({2, 2, 2});
    pred.at(0, 0, 0) = 0.5;   // within every threshold on the TP cell
    pred.at(1, 0, 0) = 2.0;   // irrelevant magnitude; FP via gt occlusion
    Tensor<uint8_t> pv({2, 2});
    pv.at(0, 0) = 1;
    pv.at(1, 0) = 1;
    Tensor<uint8_t> gv({2, 2});
    gv.at(0, 0) = 1;  // visible -> TP
    gv.at(1, 0) = 0;  // occluded but predicted visible -> FP
    Tensor<uint8_t> m({2, 2});
    m.at(0, 0) = 1;
    m.at(1, 0) = 1;
    // at threshold 4 (and every other): TP=1, FN=0, FP=1 -> 1/2
    REQUIRE(*average_jaccard(pred, pv, g2, gv, m) == Catch::Approx(0.5));

    // no gt-visible cell in the mask: undefined
    Tensor<uint8_t> occ_only({2, 2});
    occ_only.at(1, 0) = 1;
    REQUIRE_FALSE(average_jaccard(pred, pv, g2, gv, occ_only).has_value());
}

TEST_CASE("metrics match the scalar oracle on 50 random instances") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const int64_t N = 1 + rng.uniform_int(4), T = 1 + rng.uniform_int(5);
        Tensor<double> gt = random_tensor<double>({N, T, 2}, rng, 0, 40);
        Tensor<double> pred({N, T, 2});
        for (int64_t j = 0; j < pred.numel(); ++j) pred[j] = gt[j] + rng.normal(0, 6);
        Tensor<uint8_t> gv({N, T}), pv({N, T}), mask({N, T});
        for (int64_t j = 0; j < gv.numel(); ++j) {
            gv[j] = rng.bernoulli(0.7) ? 1 : 0;
            pv[j] = rng.bernoulli(0.6) ? 1 : 0;
            mask[j] = rng.bernoulli(0.8) ? 1 : 0;
        }
        auto d = delta_avg(pred, gt, mask);
        auto d_ref = MetricOracle::delta_mean(pred, gt, mask);
        REQUIRE(d.mean.has_value() == d_ref.has_value());
        if (d.mean) REQUIRE(*d.mean == *d_ref);

        auto a = average_jaccard(pred, pv, gt, gv, mask);
        auto a_ref = MetricOracle::aj(pred, pv, gt, gv, mask);
        REQUIRE(a.has_value() == a_ref.has_value());
        if (a) REQUIRE(*a == *a_ref);

        REQUIRE(occlusion_accuracy(pv, gv) == MetricOracle::oa(pv, gv));
    }
}

TEST_CASE("improving one prediction never lowers AJ or delta") {
    Rng rng(4);
    Tensor<double> gt = random_tensor<double>({3, 4, 2}, rng, 0, 40);
    Tensor<double> pred({3, 4, 2});
    for (int64_t j = 0; j < pred.numel(); ++j) pred[j] = gt[j] + rng.normal(0, 5);
    Tensor<uint8_t> gv = Tensor<uint8_t>::full({3, 4}, 1);
    Tensor<uint8_t> pv({3, 4});
    for (int64_t j = 0; j < pv.numel(); ++j) pv[j] = rng.bernoulli(0.7) ? 1 : 0;
    Tensor<uint8_t> mask = Tensor<uint8_t>::full({3, 4}, 1);

    const double d0 = *delta_avg(pred, gt, mask).mean;
    const double a0 = *average_jaccard(pred, pv, gt, gv, mask);
    // snap one cell to the ground truth
    pred.at(1, 2, 0) = gt.at(1, 2, 0);
    pred.at(1, 2, 1) = gt.at(1, 2, 1);
    REQUIRE(*delta_avg(pred, gt, mask).mean >= d0);
    REQUIRE(*average_jaccard(pred, pv, gt, gv, mask) >= a0);
}

TEST_CASE("AJ is bounded by delta when predicted visibility has no false positives") {
    Rng rng(5);
    Tensor<double> gt = random_tensor<double>({4, 5, 2}, rng, 0, 40);
    Tensor<double> pred({4, 5, 2});
    for (int64_t j = 0; j < pred.numel(); ++j) pred[j] = gt[j] + rng.normal(0, 4);
    Tensor<uint8_t> gv({4, 5});
    for (int64_t j = 0; j < gv.numel(); ++j) gv[j] = rng.bernoulli(0.8) ? 1 : 0;
    // predicted visibility is a subset of gt visibility: no FPs from occlusion
    Tensor<uint8_t> pv({4, 5});
    for (int64_t j = 0; j < pv.numel(); ++j) pv[j] = gv[j] && rng.bernoulli(0.8) ? 1 : 0;
    Tensor<uint8_t> mask({4, 5});
    for (int64_t j = 0; j < mask.numel(); ++j) mask[j] = gv[j];  // delta over visible cells

    const auto aj = average_jaccard(pred, pv, gt, gv, mask);
    const auto dv = delta_avg(pred, gt, mask);
    REQUIRE(aj.has_value());
    REQUIRE(*aj <= *dv.mean + 1e-12);
}

TEST_CASE("report JSON round-trip, including undefined metrics") {
    MetricsReport r;
    r.aj = 0.5;
    r.delta_avg_vis = 0.75;
    r.delta_avg_occ = std::nullopt;
    r.oa = 1.0;
    r.per_threshold_vis = {0.2, 0.4, 0.8, 1.0, 1.0};
    r.epe_vis_native = 2.5;
    r.n_points = 10;
    r.n_frames = 24;
    r.n_scenes = 3;
    r.n_never_visible = 1;
    MetricsReport back = MetricsReport::from_json(r.to_json());
    REQUIRE(back.aj == r.aj);
    REQUIRE(back.delta_avg_vis == r.delta_avg_vis);
    REQUIRE_FALSE(back.delta_avg_occ.has_value());
    REQUIRE(back.per_threshold_vis[1] == r.per_threshold_vis[1]);
    REQUIRE(back.n_never_visible == 1);
}

TEST_CASE("ground truth evaluated as a prediction scores 1.0 everywhere") {
    SyntheticScene scene = generate_scene(41, 16, 64, 64, 3, 8);
    TrackResult<float> asresult;
    asresult.tracks = scene.gt_tracks.clone();
    asresult.visibility_prob = scene.gt_visibility.clone();
    asresult.confidence_prob = Tensor<float>::full({scene.num_tracks(), scene.num_frames()}, 1.f);
    EvalProtocol proto;
    MetricsReport r = evaluate_result_against_scene(asresult, scene, proto);
    REQUIRE(r.aj.has_value());
    REQUIRE(*r.aj == 1.0);
    REQUIRE(*r.delta_avg_vis == 1.0);
    REQUIRE(*r.oa == 1.0);
    if (r.delta_avg_occ) REQUIRE(*r.delta_avg_occ == 1.0);
}

TEST_CASE("zero-head model: delta equals the gt-displacement bound") {
    ModelConfig mc = ModelConfig::toy();
    mc.d = 8;
    mc.trunk_blocks = 1;
    mc.scales = 2;
    mc.delta = 1;
    mc.p = 4;
    mc.corr_hidden = 12;
    mc.blocks = 1;
    mc.width = 32;
    mc.heads = 2;
    mc.n_proxy = 4;
    mc.m_eval = 1;
    TrackerModel<float> model(mc, 1);  // zero heads: predictions stay at the query
    SyntheticScene scene = generate_scene(42, 8, 64, 64, 2, 6);
    SceneDataset data = SceneDataset::from_memory({scene});

    EvalProtocol proto;
    proto.support_points = false;  // predictions are query coords either way
    MetricsReport r = eval_first_query(model, data, proto);

    // expected: fraction of visible cells whose gt moved less than each
    // threshold away from its first-visible position (in the 256 metric frame)
    const double sx = 256.0 / 64.0, sy = 256.0 / 64.0;
    std::array<int64_t, 5> hits{};
    int64_t n = 0;
    for (int64_t i = 0; i < scene.num_tracks(); ++i) {
        int64_t t0 = -1;
        for (int64_t t = 0; t < scene.num_frames() && t0 < 0; ++t)
            if (scene.gt_visibility.at(i, t) != 0.f) t0 = t;
        if (t0 < 0) continue;
        for (int64_t t = t0 + 1; t < scene.num_frames(); ++t) {
            if (scene.gt_visibility.at(i, t) == 0.f) continue;
            ++n;
            const double dx = (scene.gt_tracks.at(i, t, 0) - scene.gt_tracks.at(i, t0, 0)) * sx;
            const double dy = (scene.gt_tracks.at(i, t, 1) - scene.gt_tracks.at(i, t0, 1)) * sy;
            const double err = std::sqrt(dx * dx + dy * dy);
            for (size_t k = 0; k < 5; ++k)
                if (err < kDeltaThresholds[k]) ++hits[k];
        }
    }
    REQUIRE(n > 0);
    double expect = 0;
    for (size_t k = 0; k < 5; ++k) expect += static_cast<double>(hits[k]) / static_cast<double>(n);
    expect /= 5.0;
    REQUIRE(r.delta_avg_vis.has_value());
    REQUIRE(*r.delta_avg_vis == Catch::Approx(expect).margin(1e-12));
}
