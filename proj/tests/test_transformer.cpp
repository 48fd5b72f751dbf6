#include <catch2/catch_amalgamated.hpp>

#include "pointtrack/tracker.hpp"
#include "testutil.hpp"

using namespace pointtrack;
using ptkt::random_tensor;

namespace {

ModelConfig micro_cfg() {
    ModelConfig c = ModelConfig::toy();
    c.d = 8;
    c.trunk_blocks = 1;
    c.scales = 2;
    c.delta = 1;
    c.p = 6;
    c.corr_hidden = 16;
    c.blocks = 1;
    c.width = 32;
    c.heads = 2;
    c.n_proxy = 4;
    c.fourier_bands = 3;
    c.time_embed_len = 8;
    return c;
}

template <typename T>
void randomize_params(TrackerModel<T>& model, uint64_t seed, double stddev = 0.05) {
    Rng rng(seed);
    for (auto& [name, var] : model.params()) {
        Tensor<T>& v = var.mutable_val();
        for (int64_t i = 0; i < v.numel(); ++i) v[i] = static_cast<T>(rng.normal(0.0, stddev));
    }
}

template <typename T>
Tensor<T> random_video(int64_t frames, int64_t hw, Rng& rng) {
    return random_tensor<T>({frames, hw, hw, 3}, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("static track state encodes zero displacement in both directions") {
    const int64_t N = 3, Tn = 5;
    Tensor<double> q({N, 2});
    for (int64_t i = 0; i < N; ++i) {
        q.at(i, 0) = 10.0 + i;
        q.at(i, 1) = 20.0 - i;
    }
    TrackState<double> s = init_track_state(q, Tn);
    Var<double> corr(Tensor<double>({N, Tn, 4}), false);
    Var<double> tokens = build_tokens(s, corr, 2);
    const int64_t eta_dim = fourier_encode_dim(2);
    REQUIRE(tokens.dim(2) == 2 * eta_dim + 2 + 4);
    for (int64_t i = 0; i < N; ++i)
        for (int64_t t = 0; t < Tn; ++t)
            for (int64_t b = 0; b < 2; ++b) {
                const int64_t base = b * eta_dim;
                REQUIRE(tokens.val().at(i, t, base + 0) == 0.0);  // raw dx
                REQUIRE(tokens.val().at(i, t, base + 1) == 0.0);  // raw dy
                for (int band = 0; band < 2; ++band) {
                    REQUIRE(tokens.val().at(i, t, base + 2 + 2 * band) == 0.0);      // sin
                    REQUIRE(tokens.val().at(i, t, base + 2 + 2 * band + 1) == 1.0);  // cos
                }
            }
}

TEST_CASE("token assembly matches a hand-built N=1, T=2 case") {
    Tensor<double> q({1, 2}, {3.0, 4.0});
    TrackState<double> s = init_track_state(q, 2);
    // move frame 1 to (5, 1): displacement (2, -3)
    s.P.mutable_val().at(0, 1, 0) = 5.0;
    s.P.mutable_val().at(0, 1, 1) = 1.0;
    s.C.mutable_val().at(0, 0) = 0.25;
    s.V.mutable_val().at(0, 1) = -0.5;
    Tensor<double> corr_t({1, 2, 3}, {7, 8, 9, 10, 11, 12});
    const int bands = 2;
    Var<double> tokens = build_tokens(s, Var<double>(corr_t, false), bands);

    auto encode = [&](double dx, double dy) {
        std::vector<double> e = {dx, dy};
        for (int b = 0; b < bands; ++b) {
            const double f = std::pow(2.0, b);
            e.push_back(std::sin(f * dx));
            e.push_back(std::cos(f * dx));
        }
        for (int b = 0; b < bands; ++b) {
            const double f = std::pow(2.0, b);
            e.push_back(std::sin(f * dy));
            e.push_back(std::cos(f * dy));
        }
        // interleave x block before y block per encoder layout
        std::vector<double> out = {e[0], e[1]};
        for (int b = 0; b < bands; ++b) {
            out.push_back(e[2 + 2 * b]);
            out.push_back(e[2 + 2 * b + 1]);
        }
        for (int b = 0; b < bands; ++b) {
            out.push_back(e[2 + 2 * bands + 2 * b]);
            out.push_back(e[2 + 2 * bands + 2 * b + 1]);
        }
        return out;
    };

    // t=0: backward displacement is zero, forward is (2,-3)
    std::vector<double> expected;
    auto append = [&](const std::vector<double>& v) { expected.insert(expected.end(), v.begin(), v.end()); };
    append(encode(0, 0));
    append(encode(2, -3));
    expected.push_back(0.25);  // C at t=0
    expected.push_back(0.0);   // V at t=0
    expected.insert(expected.end(), {7, 8, 9});
    for (size_t i = 0; i < expected.size(); ++i)
        REQUIRE(tokens.val().at(0, 0, static_cast<int64_t>(i)) == Catch::Approx(expected[i]).margin(1e-12));

    // t=1: backward (2,-3), forward zero
    expected.clear();
    append(encode(2, -3));
    append(encode(0, 0));
    expected.push_back(0.0);   // C at t=1
    expected.push_back(-0.5);  // V at t=1
    expected.insert(expected.end(), {10, 11, 12});
    for (size_t i = 0; i < expected.size(); ++i)
        REQUIRE(tokens.val().at(0, 1, static_cast<int64_t>(i)) == Catch::Approx(expected[i]).margin(1e-12));
}

TEST_CASE("permuting points permutes tokens and nothing else") {
    Rng rng(7);
    const int64_t N = 4, Tn = 3;
    Tensor<double> q = random_tensor<double>({N, 2}, rng, 5, 20);
    TrackState<double> s = init_track_state(q, Tn);
    s.P = Var<double>(random_tensor<double>({N, Tn, 2}, rng, 0, 30), false);
    Tensor<double> corr = random_tensor<double>({N, Tn, 5}, rng);
    Var<double> tokens = build_tokens(s, Var<double>(corr, false), 2);

    const std::vector<int64_t> perm = {2, 0, 3, 1};
    Tensor<double> pp({N, Tn, 2}), pc({N, Tn, 5});
    TrackState<double> sp = init_track_state(q, Tn);
    for (int64_t i = 0; i < N; ++i)
        for (int64_t t = 0; t < Tn; ++t) {
            for (int64_t c = 0; c < 2; ++c) pp.at(i, t, c) = s.P.val().at(perm[i], t, c);
            for (int64_t c = 0; c < 5; ++c) pc.at(i, t, c) = corr.at(perm[i], t, c);
        }
    sp.P = Var<double>(pp, false);
    Var<double> tokens_p = build_tokens(sp, Var<double>(pc, false), 2);
    for (int64_t i = 0; i < N; ++i)
        for (int64_t t = 0; t < Tn; ++t)
            for (int64_t c = 0; c < tokens.dim(2); ++c)
                REQUIRE(tokens_p.val().at(i, t, c) == tokens.val().at(perm[i], t, c));
}

TEST_CASE("zero-initialized heads produce zero deltas") {
    ModelConfig cfg = micro_cfg();
    Rng rng(11);
    TrackTransformer<double> tf(cfg, rng);
    Var<double> tokens(random_tensor<double>({3, 4, cfg.token_dim()}, rng), false);
    Var<double> te(fourier_time_table<double>(4, cfg.width), false);
    auto d = tf.forward(tokens, te);
    REQUIRE(d.dP.val().max_abs() == 0.0);
    REQUIRE(d.dC.val().max_abs() == 0.0);
    REQUIRE(d.dV.val().max_abs() == 0.0);
}

TEST_CASE("transformer step gradient w.r.t. the token grid") {
    ModelConfig cfg = micro_cfg();
    Rng rng(13);
    TrackTransformer<double> tf(cfg, rng);
    // randomize the track head so dP is non-trivial
    ParamList<double> ps;
    tf.collect("tf", ps);
    for (auto& [name, var] : ps) {
        Tensor<double>& v = var.mutable_val();
        Rng r2(hash_str(name, 99));
        for (int64_t i = 0; i < v.numel(); ++i) v[i] = r2.normal(0.0, 0.05);
    }
    Var<double> tokens(random_tensor<double>({2, 3, cfg.token_dim()}, rng), true);
    Var<double> te(fourier_time_table<double>(3, cfg.width), false);
    Tensor<double> w = random_tensor<double>({2, 3, 2}, rng);
    auto f = [&]() { return sum_all(vmul(tf.forward(tokens, te).dP, Var<double>(w, false))); };
    REQUIRE(ptkt::fd_check(f, {tokens}, rng, 20) < 1e-3);
}

TEST_CASE("time embedding interpolation endpoints and midpoints") {
    Rng rng(17);
    // target == table length: unchanged
    Var<double> table(random_tensor<double>({5, 6}, rng), false);
    Var<double> same = interpolate_time_embeddings(table, 5);
    for (int64_t i = 0; i < table.numel(); ++i) REQUIRE(same.val()[i] == table.val()[i]);

    // 3 rows -> 2 rows: endpoints
    Var<double> t3(random_tensor<double>({3, 4}, rng), false);
    Var<double> down = interpolate_time_embeddings(t3, 2);
    for (int64_t c = 0; c < 4; ++c) {
        REQUIRE(down.val().at(0, c) == t3.val().at(0, c));
        REQUIRE(down.val().at(1, c) == t3.val().at(2, c));
    }

    // 2 rows -> 3 rows: middle is the mean
    Var<double> t2(random_tensor<double>({2, 4}, rng), false);
    Var<double> up = interpolate_time_embeddings(t2, 3);
    for (int64_t c = 0; c < 4; ++c) {
        REQUIRE(up.val().at(0, c) == t2.val().at(0, c));
        REQUIRE(up.val().at(1, c) == Catch::Approx(0.5 * (t2.val().at(0, c) + t2.val().at(1, c))));
        REQUIRE(up.val().at(2, c) == t2.val().at(1, c));
    }

    REQUIRE_THROWS_AS(interpolate_time_embeddings(t2, 1), param_error);
}

TEST_CASE("iterate: zero-head model keeps tracks at query coordinates") {
    ModelConfig cfg = micro_cfg();
    TrackerModel<double> model(cfg, 1);
    Rng rng(19);
    Tensor<double> video = random_video<double>(4, 32, rng);
    FeaturePyramid<double> pyr = model.extract_pyramid(Var<double>(video, false));

    const int64_t N = 3;
    Tensor<double> q({N, 2});
    std::vector<int64_t> tq = {0, 1, 3};
    for (int64_t i = 0; i < N; ++i) {
        q.at(i, 0) = 8.0 + 4 * i;
        q.at(i, 1) = 16.0 - 2 * i;
    }
    auto qf = model.query_features(pyr, tq, q);
    auto states = model.iterate(pyr, qf, q, tq, init_track_state(q, 4), 3);
    REQUIRE(states.size() == 3);
    for (const auto& s : states)
        for (int64_t i = 0; i < N; ++i)
            for (int64_t t = 0; t < 4; ++t) {
                REQUIRE(s.P.val().at(i, t, 0) == q.at(i, 0));
                REQUIRE(s.P.val().at(i, t, 1) == q.at(i, 1));
            }
}

TEST_CASE("iterate M=1 equals one manual composition; M=3 matches a scripted unroll") {
    ModelConfig cfg = micro_cfg();
    TrackerModel<double> model(cfg, 2);
    randomize_params(model, 23);
    Rng rng(29);
    Tensor<double> video = random_video<double>(3, 32, rng);
    FeaturePyramid<double> pyr = model.extract_pyramid(Var<double>(video, false));

    const int64_t N = 2, Tn = 3;
    Tensor<double> q({N, 2});
    std::vector<int64_t> tq = {0, 2};
    q.at(0, 0) = 10;
    q.at(0, 1) = 12;
    q.at(1, 0) = 20;
    q.at(1, 1) = 8;
    auto qf = model.query_features(pyr, tq, q);

    // scripted unroll using the same public pieces
    auto step_once = [&](TrackState<double> s) {
        Var<double> corr = model.correlation_features(pyr, qf, s.P);
        Var<double> tokens = build_tokens(s, corr, cfg.fourier_bands);
        auto d = model.transformer().forward(tokens, model.time_embedding(Tn));
        TrackState<double> n;
        n.P = vadd(s.P, d.dP);
        Tensor<double> pv = n.P.val().clone();
        for (int64_t i = 0; i < N; ++i) {
            pv.at(i, tq[static_cast<size_t>(i)], 0) = q.at(i, 0);
            pv.at(i, tq[static_cast<size_t>(i)], 1) = q.at(i, 1);
        }
        n.P = Var<double>(pv, false);
        n.C = vadd(s.C, d.dC);
        n.V = vadd(s.V, d.dV);
        n.iteration = s.iteration + 1;
        return n;
    };

    TrackState<double> manual = init_track_state(q, Tn);
    std::vector<TrackState<double>> scripted;
    for (int m = 0; m < 3; ++m) {
        manual = step_once(manual);
        scripted.push_back(manual);
    }
    auto states = model.iterate(pyr, qf, q, tq, init_track_state(q, Tn), 3);
    for (int m = 0; m < 3; ++m)
        for (int64_t i = 0; i < N * Tn * 2; ++i)
            REQUIRE(states[m].P.val()[i] == Catch::Approx(scripted[m].P.val()[i]).margin(1e-9));
}

TEST_CASE("full iterate is equivariant to point permutations") {
    ModelConfig cfg = micro_cfg();
    TrackerModel<double> model(cfg, 3);
    randomize_params(model, 31);
    Rng rng(37);
    Tensor<double> video = random_video<double>(4, 32, rng);
    FeaturePyramid<double> pyr = model.extract_pyramid(Var<double>(video, false));

    const int64_t N = 5, Tn = 4;
    for (int trial = 0; trial < 3; ++trial) {
        Tensor<double> q = random_tensor<double>({N, 2}, rng, 4, 28);
        std::vector<int64_t> tq(N);
        for (auto& t : tq) t = rng.uniform_int(Tn);
        auto qf = model.query_features(pyr, tq, q);
        auto states = model.iterate(pyr, qf, q, tq, init_track_state(q, Tn), 2);

        std::vector<int64_t> perm(N);
        for (int64_t i = 0; i < N; ++i) perm[static_cast<size_t>(i)] = i;
        rng.shuffle(perm.begin(), perm.end());
        Tensor<double> qp({N, 2});
        std::vector<int64_t> tqp(N);
        for (int64_t i = 0; i < N; ++i) {
            qp.at(i, 0) = q.at(perm[static_cast<size_t>(i)], 0);
            qp.at(i, 1) = q.at(perm[static_cast<size_t>(i)], 1);
            tqp[static_cast<size_t>(i)] = tq[static_cast<size_t>(perm[static_cast<size_t>(i)])];
        }
        auto qfp = model.query_features(pyr, tqp, qp);
        auto states_p = model.iterate(pyr, qfp, qp, tqp, init_track_state(qp, Tn), 2);

        double max_dev = 0;
        for (int64_t i = 0; i < N; ++i)
            for (int64_t t = 0; t < Tn; ++t) {
                for (int64_t c = 0; c < 2; ++c)
                    max_dev = std::max(max_dev,
                                       std::abs(states_p.back().P.val().at(i, t, c) -
                                                states.back().P.val().at(perm[static_cast<size_t>(i)], t, c)));
                max_dev = std::max(max_dev, std::abs(states_p.back().C.val().at(i, t) -
                                                     states.back().C.val().at(perm[static_cast<size_t>(i)], t)));
                max_dev = std::max(max_dev, std::abs(states_p.back().V.val().at(i, t) -
                                                     states.back().V.val().at(perm[static_cast<size_t>(i)], t)));
            }
        REQUIRE(max_dev < 1e-5);
    }
}

TEST_CASE("iterate stays finite over M=6 and is deterministic") {
    ModelConfig cfg = micro_cfg();
    TrackerModel<float> model(cfg, 4);
    randomize_params(model, 41, 0.1);
    Rng rng(43);
    Tensor<float> video = random_video<float>(4, 32, rng);

    NoGradGuard ng;
    FeaturePyramid<float> pyr = model.extract_pyramid(Var<float>(video, false));
    const int64_t N = 4;
    Tensor<float> q = random_tensor<float>({N, 2}, rng, 4, 28);
    std::vector<int64_t> tq(N, 0);
    auto qf = model.query_features(pyr, tq, q);
    auto s1 = model.iterate(pyr, qf, q, tq, init_track_state(q, 4), 6);
    for (const auto& s : s1) {
        REQUIRE(s.P.val().all_finite());
        REQUIRE(s.C.val().all_finite());
        REQUIRE(s.V.val().all_finite());
    }
    auto s2 = model.iterate(pyr, qf, q, tq, init_track_state(q, 4), 6);
    REQUIRE(std::memcmp(s1.back().P.val().data(), s2.back().P.val().data(),
                        sizeof(float) * s1.back().P.numel()) == 0);
}

TEST_CASE("group attention goes through the proxy pool, never N x N") {
    ModelConfig cfg = micro_cfg();
    TrackerModel<double> model(cfg, 5);
    Rng rng(47);
    Tensor<double> video = random_video<double>(2, 32, rng);
    NoGradGuard ng;
    FeaturePyramid<double> pyr = model.extract_pyramid(Var<double>(video, false));

    for (int64_t N : {6, 12}) {
        Tensor<double> q = random_tensor<double>({N, 2}, rng, 4, 28);
        std::vector<int64_t> tq(N, 0);
        auto qf = model.query_features(pyr, tq, q);
        std::vector<std::pair<int64_t, int64_t>> log;
        attention_shape_log() = &log;
        model.iterate(pyr, qf, q, tq, init_track_state(q, 2), 1);
        attention_shape_log() = nullptr;
        REQUIRE_FALSE(log.empty());
        for (const auto& [rows, cols] : log) {
            const bool time_attn = rows == 2 && cols == 2;
            const bool pool = rows == cfg.n_proxy && cols == N;
            const bool broadcast = rows == N && cols == cfg.n_proxy;
            REQUIRE((time_attn || pool || broadcast));
            REQUIRE_FALSE((rows == N && cols == N));
        }
    }
}

TEST_CASE("checkpoint round-trip preserves behavior bitwise") {
    ModelConfig cfg = micro_cfg();
    TrackerModel<float> model(cfg, 6);
    randomize_params(model, 53, 0.05);
    const std::string path = "transformer_test_ckpt.ptc";
    model.save_checkpoint(path, {{"note", "test"}});
    TrackerModel<float> loaded = TrackerModel<float>::load_checkpoint(path);

    Rng rng(59);
    Tensor<float> video = random_video<float>(3, 32, rng);
    NoGradGuard ng;
    auto run = [&](TrackerModel<float>& m) {
        FeaturePyramid<float> pyr = m.extract_pyramid(Var<float>(video, false));
        Tensor<float> q = random_tensor<float>({2, 2}, rng, 8, 24);
        Rng r2(61);
        q = ptkt::random_tensor<float>({2, 2}, r2, 8, 24);
        std::vector<int64_t> tq = {0, 1};
        auto qf = m.query_features(pyr, tq, q);
        return m.iterate(pyr, qf, q, tq, init_track_state(q, 3), 2).back().P.val().clone();
    };
    Tensor<float> a = run(model);
    Tensor<float> b = run(loaded);
    REQUIRE(std::memcmp(a.data(), b.data(), sizeof(float) * a.numel()) == 0);
    std::remove(path.c_str());
}
