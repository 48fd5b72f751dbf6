#include <catch2/catch_amalgamated.hpp>

#include "pointtrack/feature_net.hpp"
#include "testutil.hpp"

using namespace pointtrack;
using ptkt::random_tensor;

namespace {
ModelConfig tiny_cfg(int64_t d = 8, int scales = 2) {
    ModelConfig c = ModelConfig::toy();
    c.d = d;
    c.scales = scales;
    c.trunk_blocks = 1;
    return c;
}
}  // namespace

TEST_CASE("pyramid spatial sizes halve from k-th downsample") {
    ModelConfig cfg = tiny_cfg(8, 4);
    Rng rng(1);
    FeatureNet<float> net(cfg, rng);
    Var<float> video(random_tensor<float>({1, 256, 256, 3}, rng, 0.0, 1.0), false);
    FeaturePyramid<float> pyr = net.forward(video);
    REQUIRE(pyr.scales() == 4);
    const int64_t expect[4] = {64, 32, 16, 8};
    for (int s = 0; s < 4; ++s) {
        REQUIRE(pyr.maps[s].dim(1) == expect[s]);
        REQUIRE(pyr.maps[s].dim(2) == expect[s]);
        REQUIRE(pyr.maps[s].dim(3) == 8);
        REQUIRE(pyr.maps[s].val().all_finite());
    }
}

TEST_CASE("identical frames produce identical features") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(2);
    FeatureNet<float> net(cfg, rng);
    Tensor<float> v({3, 32, 32, 3});
    Tensor<float> frame = random_tensor<float>({32, 32, 3}, rng, 0.0, 1.0);
    for (int64_t t = 0; t < 3; ++t)
        std::copy(frame.data(), frame.data() + frame.numel(), v.data() + t * frame.numel());
    FeaturePyramid<float> pyr = net.forward(Var<float>(v, false));
    const int64_t per_frame = pyr.maps[0].numel() / 3;
    for (int64_t t = 1; t < 3; ++t)
        for (int64_t i = 0; i < per_frame; ++i)
            REQUIRE(pyr.maps[0].val()[i] == pyr.maps[0].val()[t * per_frame + i]);
}

TEST_CASE("frame permutation permutes features identically") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(3);
    FeatureNet<float> net(cfg, rng);
    Tensor<float> v = random_tensor<float>({4, 32, 32, 3}, rng, 0.0, 1.0);
    const int64_t fsz = v.numel() / 4;
    Tensor<float> vp({4, 32, 32, 3});
    const int perm[4] = {2, 0, 3, 1};
    for (int64_t t = 0; t < 4; ++t)
        std::copy(v.data() + perm[t] * fsz, v.data() + (perm[t] + 1) * fsz, vp.data() + t * fsz);

    FeaturePyramid<float> a = net.forward(Var<float>(v, false));
    FeaturePyramid<float> b = net.forward(Var<float>(vp, false));
    const int64_t msz = a.maps[0].numel() / 4;
    for (int64_t t = 0; t < 4; ++t)
        for (int64_t i = 0; i < msz; ++i)
            REQUIRE(b.maps[0].val()[t * msz + i] == a.maps[0].val()[perm[t] * msz + i]);
}

TEST_CASE("non-divisible dimensions are rejected") {
    ModelConfig cfg = tiny_cfg(8, 4);  // requires divisibility by 32
    Rng rng(4);
    FeatureNet<float> net(cfg, rng);
    Var<float> bad(Tensor<float>({1, 40, 40, 3}), false);
    REQUIRE_THROWS_AS(net.forward(bad), shape_error);
}

TEST_CASE("feature net gradient w.r.t. input matches finite differences") {
    ModelConfig cfg = tiny_cfg(6, 2);
    Rng rng(5);
    FeatureNet<double> net(cfg, rng);
    Var<double> video(random_tensor<double>({1, 32, 32, 3}, rng, 0.05, 0.95), true);
    Tensor<double> w0, w1;
    {
        FeaturePyramid<double> p = net.forward(video);
        w0 = ptkt::random_tensor<double>(p.maps[0].val().shape(), rng);
        w1 = ptkt::random_tensor<double>(p.maps[1].val().shape(), rng);
    }
    auto f = [&]() {
        FeaturePyramid<double> p = net.forward(video);
        return vadd(sum_all(vmul(p.maps[0], Var<double>(w0, false))),
                    sum_all(vmul(p.maps[1], Var<double>(w1, false))));
    };
    REQUIRE(ptkt::fd_check(f, {video}, rng, 16) < 1e-3);
}
