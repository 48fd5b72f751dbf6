#include <catch2/catch_amalgamated.hpp>
#include <cstdio>

#include "pointtrack/engines.hpp"
#include "pointtrack/track_io.hpp"
#include "pointtrack/train.hpp"
#include "testutil.hpp"

using namespace pointtrack;
using ptkt::random_tensor;

namespace {

ModelConfig engine_cfg() {
    ModelConfig c = ModelConfig::toy();
    c.d = 8;
    c.trunk_blocks = 1;
    c.scales = 2;
    c.delta = 1;
    c.p = 4;
    c.corr_hidden = 12;
    c.blocks = 1;
    c.width = 32;
    c.heads = 2;
    c.n_proxy = 4;
    c.fourier_bands = 2;
    c.window_len = 8;
    c.m_eval = 2;
    c.max_video_len = 64;
    return c;
}

template <typename T>
void randomize(TrackerModel<T>& model, uint64_t seed, double stddev = 0.03) {
    Rng rng(seed);
    for (auto& [name, var] : model.params()) {
        Tensor<T>& v = var.mutable_val();
        for (int64_t i = 0; i < v.numel(); ++i) v[i] = static_cast<T>(rng.normal(0.0, stddev));
    }
}

Tensor<float> random_video_chw(int64_t T, int64_t hw, uint64_t seed) {
    Rng rng(seed);
    Tensor<float> v({T, 3, hw, hw});
    for (int64_t i = 0; i < v.numel(); ++i) v[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    return v;
}

}  // namespace

TEST_CASE("offline zero-head model keeps every track at its query") {
    TrackerModel<float> model(engine_cfg(), 1);  // heads start at zero
    Tensor<float> video = random_video_chw(6, 32, 5);
    std::vector<Query> queries = {{0, 8.25, 9.5}, {3, 20.0, 12.75}, {5, 4.0, 28.0}};
    TrackResult<float> r = track_offline(model, video, queries);
    for (size_t i = 0; i < queries.size(); ++i)
        for (int64_t t = 0; t < 6; ++t) {
            REQUIRE(r.tracks.at(static_cast<int64_t>(i), t, 0) == static_cast<float>(queries[i].x));
            REQUIRE(r.tracks.at(static_cast<int64_t>(i), t, 1) == static_cast<float>(queries[i].y));
        }
}

TEST_CASE("offline backward tracking: a last-frame query still covers frame 0") {
    TrackerModel<float> model(engine_cfg(), 2);
    randomize(model, 11);
    Tensor<float> video = random_video_chw(6, 32, 7);
    std::vector<Query> queries = {{5, 16.0, 16.0}};
    TrackResult<float> r = track_offline(model, video, queries);
    REQUIRE(r.num_frames() == 6);
    // every earlier frame receives a real (refined) prediction, not a placeholder
    bool moved = false;
    for (int64_t t = 0; t < 5; ++t) {
        REQUIRE(std::isfinite(r.tracks.at(0, t, 0)));
        if (r.tracks.at(0, t, 0) != 16.0f || r.tracks.at(0, t, 1) != 16.0f) moved = true;
    }
    REQUIRE(moved);
    // the query frame itself is pinned
    REQUIRE(r.tracks.at(0, 5, 0) == 16.0f);
}

TEST_CASE("query-frame exactness for both engines over random scenes") {
    TrackerModel<float> model(engine_cfg(), 3);
    randomize(model, 13);
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        SyntheticScene scene = generate_scene(200 + trial, 12, 32, 32, 2, 3);
        std::vector<Query> queries;
        for (int64_t i = 0; i < 3; ++i) {
            Query q;
            q.t = rng.uniform_int(12);
            q.x = rng.uniform(1.0, 30.0);
            q.y = rng.uniform(1.0, 30.0);
            queries.push_back(q);
        }
        TrackResult<float> off = track_offline(model, scene.video, queries);
        TrackResult<float> on = track_online(model, scene.video, queries);
        for (size_t i = 0; i < queries.size(); ++i) {
            const int64_t ii = static_cast<int64_t>(i);
            REQUIRE(off.tracks.at(ii, queries[i].t, 0) == static_cast<float>(queries[i].x));
            REQUIRE(off.tracks.at(ii, queries[i].t, 1) == static_cast<float>(queries[i].y));
            REQUIRE(on.tracks.at(ii, queries[i].t, 0) == static_cast<float>(queries[i].x));
            REQUIRE(on.tracks.at(ii, queries[i].t, 1) == static_cast<float>(queries[i].y));
        }
    }
}

TEST_CASE("window count formula holds for T' through 4T'") {
    TrackerModel<float> model(engine_cfg(), 4);  // zero heads keep it fast
    const int64_t Tw = model.config().window_len;
    for (int64_t T = Tw; T <= 4 * Tw; ++T) {
        Tensor<float> video = random_video_chw(T, 32, 100 + T);
        std::vector<Query> queries = {{0, 10.0, 10.0}};
        OnlineTracker<float> tracker(model, queries);
        Tensor<float> frame({3, 32, 32});
        for (int64_t t = 0; t < T; ++t) {
            std::copy(video.data() + t * 3 * 32 * 32, video.data() + (t + 1) * 3 * 32 * 32,
                      frame.data());
            tracker.push_frame(frame, t);
        }
        tracker.finish();
        const int64_t expect = (T - Tw + Tw / 2 - 1) / (Tw / 2) + 1;  // ceil((T-T')/(T'/2)) + 1
        REQUIRE(tracker.windows_run() == expect);
        REQUIRE(tracker.result().num_frames() == T);
    }
}

TEST_CASE("a video of exactly one window matches a single offline pass") {
    TrackerModel<float> model(engine_cfg(), 5);
    randomize(model, 19);
    const int64_t Tw = model.config().window_len;
    Tensor<float> video = random_video_chw(Tw, 32, 23);
    std::vector<Query> queries = {{0, 12.0, 9.0}, {2, 25.0, 17.0}};
    TrackResult<float> on = track_online(model, video, queries);
    TrackResult<float> off = track_offline(model, video, queries);
    // identical from each query frame on; earlier frames are the online
    // engine's forward-only placeholders
    for (size_t i = 0; i < queries.size(); ++i) {
        const int64_t ii = static_cast<int64_t>(i);
        for (int64_t t = queries[i].t; t < Tw; ++t) {
            REQUIRE(std::abs(on.tracks.at(ii, t, 0) - off.tracks.at(ii, t, 0)) < 1e-6f);
            REQUIRE(std::abs(on.tracks.at(ii, t, 1) - off.tracks.at(ii, t, 1)) < 1e-6f);
            REQUIRE(std::abs(on.visibility_prob.at(ii, t) - off.visibility_prob.at(ii, t)) < 1e-6f);
            REQUIRE(std::abs(on.confidence_prob.at(ii, t) - off.confidence_prob.at(ii, t)) < 1e-6f);
        }
        for (int64_t t = 0; t < queries[i].t; ++t) {
            REQUIRE(on.tracks.at(ii, t, 0) == static_cast<float>(queries[i].x));
            REQUIRE(on.visibility_prob.at(ii, t) == 0.0f);
        }
    }
}

TEST_CASE("online causality: later frames never change earlier emissions") {
    TrackerModel<float> model(engine_cfg(), 6);
    randomize(model, 29);
    const int64_t Tw = model.config().window_len;  // 8
    const int64_t T = 3 * Tw;
    Tensor<float> a = random_video_chw(T, 32, 31);
    Tensor<float> b = a.clone();
    const int64_t changed_from = 2 * Tw;
    {
        Rng rng(37);
        for (int64_t i = changed_from * 3 * 32 * 32; i < b.numel(); ++i)
            b[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    }
    std::vector<Query> queries = {{0, 10.0, 20.0}, {1, 22.0, 6.0}};
    TrackResult<float> ra = track_online(model, a, queries);
    TrackResult<float> rb = track_online(model, b, queries);
    // frames emitted by windows that end before the first changed frame
    const int64_t safe = changed_from - Tw / 2;
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t t = 0; t < safe; ++t) {
            REQUIRE(ra.tracks.at(i, t, 0) == rb.tracks.at(i, t, 0));
            REQUIRE(ra.tracks.at(i, t, 1) == rb.tracks.at(i, t, 1));
            REQUIRE(ra.visibility_prob.at(i, t) == rb.visibility_prob.at(i, t));
        }
}

TEST_CASE("overlap frames carry the newer window's predictions") {
    TrackerModel<float> model(engine_cfg(), 7);
    randomize(model, 41);
    const int64_t Tw = model.config().window_len;
    const int64_t T = Tw + Tw / 2;  // 1.5 windows
    Tensor<float> video = random_video_chw(T, 32, 43);
    std::vector<Query> queries = {{0, 15.0, 15.0}};

    TrackResult<float> online = track_online(model, video, queries);
    // the training-path unroll is an independent implementation of the same
    // window schedule; its final window states give the expected emissions
    NoGradGuard ng;
    Tensor<float> qxy({1, 2});
    qxy.at(0, 0) = 15.f;
    qxy.at(0, 1) = 15.f;
    // pad the clip like the engine does (repeat last frame to fill the window)
    Tensor<float> padded({2 * Tw, 3, 32, 32});
    std::copy(video.data(), video.data() + video.numel(), padded.data());
    for (int64_t t = T; t < 2 * Tw; ++t)
        std::copy(video.data() + (T - 1) * 3 * 32 * 32, video.data() + T * 3 * 32 * 32,
                  padded.data() + t * 3 * 32 * 32);
    auto unrolled = unroll_online_windows(model, Var<float>(video_to_nhwc<float>(padded), false),
                                          qxy, {0}, model.config().m_eval);
    REQUIRE(unrolled.states.size() >= 2);
    const auto& w2 = unrolled.states[1].back();  // window starting at T'/2
    for (int64_t t = Tw / 2; t < T; ++t) {
        const int64_t local = t - Tw / 2;
        REQUIRE(online.tracks.at(0, t, 0) == Catch::Approx(w2.P.val().at(0, local, 0)).margin(2e-4));
        REQUIRE(online.tracks.at(0, t, 1) == Catch::Approx(w2.P.val().at(0, local, 1)).margin(2e-4));
    }
}

TEST_CASE("before activation, online outputs are the query placeholder") {
    TrackerModel<float> model(engine_cfg(), 8);
    randomize(model, 47);
    Tensor<float> video = random_video_chw(16, 32, 53);
    std::vector<Query> queries = {{10, 13.5, 18.25}};
    TrackResult<float> r = track_online(model, video, queries);
    for (int64_t t = 0; t < 10; ++t) {
        REQUIRE(r.tracks.at(0, t, 0) == 13.5f);
        REQUIRE(r.tracks.at(0, t, 1) == 18.25f);
        REQUIRE(r.visibility_prob.at(0, t) == 0.0f);
    }
    // from the query frame on, visibility comes from the model
    REQUIRE(r.visibility_prob.at(0, 10) > 0.0f);
}

TEST_CASE("zero-head online equals query placeholder everywhere") {
    TrackerModel<float> model(engine_cfg(), 9);
    Tensor<float> video = random_video_chw(12, 32, 59);
    std::vector<Query> queries = {{2, 7.0, 9.0}};
    TrackResult<float> r = track_online(model, video, queries);
    for (int64_t t = 0; t < 12; ++t) {
        REQUIRE(r.tracks.at(0, t, 0) == 7.0f);
        REQUIRE(r.tracks.at(0, t, 1) == 9.0f);
    }
}

TEST_CASE("engine input validation") {
    TrackerModel<float> model(engine_cfg(), 10);
    Tensor<float> video = random_video_chw(6, 32, 61);
    REQUIRE_THROWS_AS(track_offline(model, video, {{7, 10.0, 10.0}}), param_error);
    REQUIRE_THROWS_AS(track_offline(model, video, {{0, 40.0, 10.0}}), param_error);
    REQUIRE_THROWS_AS(track_offline(model, video, std::vector<Query>{}), param_error);

    Tensor<float> long_video = random_video_chw(80, 32, 67);  // beyond max_video_len=64
    REQUIRE_THROWS_AS(track_offline(model, long_video, {{0, 10.0, 10.0}}), capacity_error);

    OnlineTracker<float> tracker(model, {{0, 10.0, 10.0}});
    Tensor<float> frame({3, 32, 32});
    tracker.push_frame(frame, 0);
    REQUIRE_THROWS_AS(tracker.push_frame(frame, 2), stream_error);
}

TEST_CASE("support points: counts, centering, clipping, stripping") {
    std::vector<Query> queries = {{4, 128.0, 128.0}};
    auto [extended, mask] = add_support_points(queries, 256, 256);
    REQUIRE(extended.size() == 1 + 25 + 64);
    REQUIRE(mask.size() == extended.size());
    REQUIRE(mask[0] == 1);
    for (size_t i = 1; i < mask.size(); ++i) REQUIRE(mask[i] == 0);

    // support points share the anchor's query frame
    for (size_t i = 1; i < extended.size(); ++i) REQUIRE(extended[i].t == 4);

    // local grid is centered on the query
    double cx = 0, cy = 0;
    for (size_t i = 26; i < extended.size(); ++i) {
        cx += extended[i].x;
        cy += extended[i].y;
    }
    REQUIRE(cx / 64 == Catch::Approx(128.0));
    REQUIRE(cy / 64 == Catch::Approx(128.0));

    // a corner query clips its local grid into the frame
    auto [corner, cmask] = add_support_points({{0, 2.0, 2.0}}, 256, 256);
    for (const auto& q : corner) {
        REQUIRE(q.x >= 0.0);
        REQUIRE(q.y >= 0.0);
        REQUIRE(q.x <= 255.0);
        REQUIRE(q.y <= 255.0);
    }

    // stripping with the mask recovers the original queries
    std::vector<Query> stripped;
    for (size_t i = 0; i < extended.size(); ++i)
        if (mask[i]) stripped.push_back(extended[i]);
    REQUIRE(stripped.size() == queries.size());
    REQUIRE(stripped[0].x == queries[0].x);
    REQUIRE(stripped[0].t == queries[0].t);
}

TEST_CASE("visibility gating") {
    TrackResult<float> r;
    r.tracks = Tensor<float>({2, 1, 2});
    r.visibility_prob = Tensor<float>({2, 1}, {0.9f, 1.0f});
    r.confidence_prob = Tensor<float>({2, 1}, {0.9f, 0.5f});
    Tensor<uint8_t> vis = gate_visibility(r, 0.6);
    REQUIRE(vis.at(0, 0) == 1);  // 0.81 > 0.6
    REQUIRE(vis.at(1, 0) == 0);  // 0.50 < 0.6
    REQUIRE_THROWS_AS(gate_visibility(r, 0.0), param_error);
    REQUIRE_THROWS_AS(gate_visibility(r, 1.0), param_error);
}

TEST_CASE("track file round-trip") {
    TrackResult<float> r;
    Rng rng(71);
    r.tracks = ptkt::random_tensor<float>({3, 5, 2}, rng, 0, 32);
    r.visibility_prob = ptkt::random_tensor<float>({3, 5}, rng, 0, 1);
    r.confidence_prob = ptkt::random_tensor<float>({3, 5}, rng, 0, 1);
    std::vector<Query> queries = {{0, 1.5, 2.5}, {2, 3.0, 4.0}, {4, 5.0, 6.0}};
    const std::string path = "engine_test_tracks.ptc";
    write_tracks(path, r, queries, {{"mode", "offline"}});
    TrackFile f = read_tracks(path);
    REQUIRE(f.queries.size() == 3);
    REQUIRE(f.queries[1].t == 2);
    REQUIRE(f.queries[1].x == 3.0);
    REQUIRE(std::memcmp(f.result.tracks.data(), r.tracks.data(),
                        r.tracks.numel() * sizeof(float)) == 0);
    REQUIRE(f.config.at("mode") == "offline");
    std::remove(path.c_str());
}
