#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "pointtrack/distill.hpp"
#include "testutil.hpp"

using namespace pointtrack;

namespace {

ModelConfig distill_cfg_micro() {
    ModelConfig c = ModelConfig::toy();
    c.d = 8;
    c.trunk_blocks = 1;
    c.scales = 2;
    c.delta = 1;
    c.p = 4;
    c.corr_hidden = 16;
    c.blocks = 1;
    c.width = 32;
    c.heads = 2;
    c.n_proxy = 4;
    c.fourier_bands = 2;
    c.window_len = 8;
    c.m_train = 1;
    c.m_eval = 1;
    c.time_embed_len = 12;
    return c;
}

QuerySampleConfig toy_queries() {
    QuerySampleConfig q;
    q.n_queries = 12;
    q.keyframes = 3;
    q.min_points_per_frame = 4;
    return q;
}

SyntheticScene textureless_scene(int64_t T, int64_t hw) {
    SyntheticScene s = generate_scene(1, T, hw, hw, 1, 2);
    s.video.fill(0.5f);  // uniform gray wipes out every feature
    return s;
}

}  // namespace

TEST_CASE("uniform video yields the skip signal") {
    SyntheticScene s = textureless_scene(8, 64);
    auto q = sift_queries(s.video, toy_queries(), 0);
    REQUIRE_FALSE(q.has_value());
}

TEST_CASE("textured scene yields the full query quota") {
    SyntheticScene s = generate_scene(21, 12, 64, 64, 3, 8);
    QuerySampleConfig cfg = toy_queries();
    auto q = sift_queries(s.video, cfg, 7);
    REQUIRE(q.has_value());
    REQUIRE(static_cast<int64_t>(q->size()) == cfg.n_queries);
    for (const auto& query : *q) {
        REQUIRE(query.t >= 0);
        REQUIRE(query.t < 12);
        REQUIRE(query.x >= 0);
        REQUIRE(query.x < 64);
        REQUIRE(query.y >= 0);
        REQUIRE(query.y < 64);
    }
    // determinism
    auto q2 = sift_queries(s.video, cfg, 7);
    REQUIRE(q2.has_value());
    REQUIRE(q->size() == q2->size());
    for (size_t i = 0; i < q->size(); ++i) {
        REQUIRE((*q)[i].t == (*q2)[i].t);
        REQUIRE((*q)[i].x == (*q2)[i].x);
        REQUIRE((*q)[i].y == (*q2)[i].y);
    }
    // a different seed picks different keyframes
    auto q3 = sift_queries(s.video, cfg, 8);
    REQUIRE(q3.has_value());
}

TEST_CASE("detector finds corner-like structure, rejects flat regions") {
    // a bright blob on a dark background is a textbook DoG extremum
    Tensor<float> img({64, 64});
    for (int64_t y = 0; y < 64; ++y)
        for (int64_t x = 0; x < 64; ++x) {
            const double d2 = (x - 32.0) * (x - 32.0) + (y - 20.0) * (y - 20.0);
            img.at(y, x) = static_cast<float>(0.9 * std::exp(-d2 / 18.0));
        }
    auto kps = detect_keypoints(img);
    REQUIRE_FALSE(kps.empty());
    // the strongest keypoint sits on the blob
    REQUIRE(std::abs(kps[0].x - 32.0) < 4.0);
    REQUIRE(std::abs(kps[0].y - 20.0) < 4.0);

    Tensor<float> flat({64, 64});
    flat.fill(0.3f);
    REQUIRE(detect_keypoints(flat).empty());
}

TEST_CASE("teacher sampling is uniform and reproducible") {
    std::vector<TeacherEntry> entries;
    for (int i = 0; i < 4; ++i) entries.push_back({"t" + std::to_string(i), "unused.ptc", "offline"});
    TeacherRegistry<float> reg(entries, 123);

    std::array<int64_t, 4> counts = {0, 0, 0, 0};
    for (int64_t b = 0; b < 10000; ++b) ++counts[sample_teacher(reg, b)];
    for (int64_t c : counts) {
        REQUIRE(c > 2200);
        REQUIRE(c < 2800);
    }
    // reproducible
    for (int64_t b = 0; b < 50; ++b) REQUIRE(sample_teacher(reg, b) == sample_teacher(reg, b));

    TeacherRegistry<float> single({{"only", "unused.ptc", "online"}}, 9);
    for (int64_t b = 0; b < 10; ++b) REQUIRE(sample_teacher(single, b) == 0);
}

TEST_CASE("zero-head teacher labels every frame with the query coordinates") {
    TrackerModel<float> teacher(distill_cfg_micro(), 1);
    SyntheticScene s = generate_scene(3, 8, 32, 32, 2, 4);
    std::vector<Query> queries = {{0, 10.0, 12.0}, {2, 20.0, 8.0}};
    TrackResult<float> labels = pseudo_label(teacher, "offline", s.video, queries);
    for (size_t i = 0; i < queries.size(); ++i)
        for (int64_t t = 0; t < 8; ++t) {
            REQUIRE(labels.tracks.at(static_cast<int64_t>(i), t, 0) == static_cast<float>(queries[i].x));
            REQUIRE(labels.tracks.at(static_cast<int64_t>(i), t, 1) == static_cast<float>(queries[i].y));
        }

    // labels survive the track container round trip
    const std::string path = "distill_test_labels.ptc";
    write_tracks(path, labels, queries);
    TrackFile f = read_tracks(path);
    REQUIRE(std::memcmp(f.result.tracks.data(), labels.tracks.data(),
                        labels.tracks.numel() * sizeof(float)) == 0);
    std::remove(path.c_str());
}

TEST_CASE("distillation freezes the conf/vis head and never touches conf/vis losses") {
    namespace fs = std::filesystem;
    const std::string dir = "distill_test_run";
    fs::create_directories(dir);

    // teachers: two checkpoints of this implementation, with non-zero heads so
    // their labels actually differ from the student's initial predictions
    ModelConfig mc = distill_cfg_micro();
    auto randomize = [](TrackerModel<float>& m, uint64_t seed) {
        Rng r(seed);
        for (auto& [name, var] : m.params()) {
            Tensor<float>& v = var.mutable_val();
            for (int64_t i = 0; i < v.numel(); ++i) v[i] = static_cast<float>(r.normal(0.0, 0.05));
        }
    };
    {
        TrackerModel<float> t1(mc, 11);
        randomize(t1, 211);
        t1.save_checkpoint(dir + "/t1.ptc");
        TrackerModel<float> t2(mc, 22);
        randomize(t2, 222);
        t2.save_checkpoint(dir + "/t2.ptc");
    }
    TeacherRegistry<float> teachers({{"a", dir + "/t1.ptc", "offline"},
                                     {"b", dir + "/t2.ptc", "online"}},
                                    5);
    const auto hashes_before = teachers.checkpoint_hashes();

    std::vector<SyntheticScene> scenes;
    for (uint64_t i = 0; i < 2; ++i) scenes.push_back(generate_scene(30 + i, 10, 64, 64, 3, 6));
    SceneDataset videos = SceneDataset::from_memory(scenes);

    TrackerModel<float> student(mc, 33);
    // snapshot the frozen head
    std::vector<Tensor<float>> head_before;
    for (auto& [name, var] : student.confvis_head_params()) head_before.push_back(var.val().clone());

    DistillConfig cfg;
    cfg.steps = 4;
    cfg.batch = 1;
    cfg.seed = 7;
    cfg.student_mode = "offline";
    cfg.queries = toy_queries();
    cfg.log_every = 1;

    loss_call_counters() = {};
    auto curve = finetune_student(student, teachers, videos, cfg, dir, false);
    REQUIRE_FALSE(curve.empty());
    REQUIRE(loss_call_counters().track > 0);
    REQUIRE(loss_call_counters().conf == 0);
    REQUIRE(loss_call_counters().vis == 0);

    // head parameters are bit-identical
    size_t hi = 0;
    for (auto& [name, var] : student.confvis_head_params()) {
        REQUIRE(std::memcmp(var.val().data(), head_before[hi].data(),
                            var.val().numel() * sizeof(float)) == 0);
        ++hi;
    }
    // at least one trunk parameter moved
    bool moved = false;
    TrackerModel<float> fresh(mc, 33);
    auto fresh_params = fresh.params();
    auto student_params = student.params();
    for (size_t i = 0; i < student_params.size() && !moved; ++i)
        if (std::memcmp(student_params[i].var.val().data(), fresh_params[i].var.val().data(),
                        student_params[i].var.val().numel() * sizeof(float)) != 0)
            moved = true;
    REQUIRE(moved);

    // teachers untouched on disk
    REQUIRE(teachers.checkpoint_hashes() == hashes_before);
    fs::remove_all(dir);
}

TEST_CASE("distillation is reproducible given a seed") {
    namespace fs = std::filesystem;
    const std::string dir = "distill_test_repro";
    fs::create_directories(dir);
    ModelConfig mc = distill_cfg_micro();
    {
        TrackerModel<float> t1(mc, 44);
        t1.save_checkpoint(dir + "/t.ptc");
    }
    TeacherRegistry<float> teachers({{"t", dir + "/t.ptc", "offline"}}, 5);
    std::vector<SyntheticScene> scenes = {generate_scene(50, 10, 64, 64, 3, 6)};
    SceneDataset videos = SceneDataset::from_memory(scenes);

    DistillConfig cfg;
    cfg.steps = 3;
    cfg.batch = 1;
    cfg.seed = 99;
    cfg.student_mode = "online";
    cfg.clip_len = 10;
    cfg.queries = toy_queries();
    cfg.log_every = 1;

    TrackerModel<float> s1(mc, 55);
    auto c1 = finetune_student(s1, teachers, videos, cfg, dir + "/r1", false);
    TrackerModel<float> s2(mc, 55);
    auto c2 = finetune_student(s2, teachers, videos, cfg, dir + "/r2", false);
    REQUIRE(c1.size() == c2.size());
    for (size_t i = 0; i < c1.size(); ++i) REQUIRE(c1[i].track_loss == c2[i].track_loss);
    fs::remove_all(dir);
}

TEST_CASE("a fully textureless corpus aborts with a diagnostic") {
    namespace fs = std::filesystem;
    const std::string dir = "distill_test_skip";
    fs::create_directories(dir);
    ModelConfig mc = distill_cfg_micro();
    {
        TrackerModel<float> t1(mc, 66);
        t1.save_checkpoint(dir + "/t.ptc");
    }
    TeacherRegistry<float> teachers({{"t", dir + "/t.ptc", "offline"}}, 5);
    std::vector<SyntheticScene> scenes = {textureless_scene(10, 64), textureless_scene(10, 64)};
    SceneDataset videos = SceneDataset::from_memory(scenes);

    DistillConfig cfg;
    cfg.steps = 1;
    cfg.batch = 1;
    cfg.queries = toy_queries();

    TrackerModel<float> student(mc, 77);
    REQUIRE_THROWS_WITH(finetune_student(student, teachers, videos, cfg, dir + "/out", false),
                        Catch::Matchers::ContainsSubstring("skip"));
    fs::remove_all(dir);
}

TEST_CASE("mixed corpus: exactly the textureless videos are skipped") {
    QuerySampleConfig cfg = toy_queries();
    std::vector<SyntheticScene> scenes;
    std::vector<bool> textureless;
    for (uint64_t i = 0; i < 6; ++i) {
        if (i % 3 == 2) {
            scenes.push_back(textureless_scene(8, 64));
            textureless.push_back(true);
        } else {
            scenes.push_back(generate_scene(80 + i, 8, 64, 64, 3, 4));
            textureless.push_back(false);
        }
    }
    for (size_t i = 0; i < scenes.size(); ++i) {
        auto q = sift_queries(scenes[i].video, cfg, 100 + i);
        REQUIRE(q.has_value() == !textureless[i]);
    }
}

TEST_CASE("pseudo-label cache round-trips and is keyed by teacher") {
    namespace fs = std::filesystem;
    const std::string dir = "distill_test_cache";
    fs::create_directories(dir);
    ModelConfig mc = distill_cfg_micro();
    {
        TrackerModel<float> t1(mc, 88);
        t1.save_checkpoint(dir + "/t1.ptc");
        TrackerModel<float> t2(mc, 89);
        t2.save_checkpoint(dir + "/t2.ptc");
    }
    TeacherRegistry<float> teachers({{"a", dir + "/t1.ptc", "offline"},
                                     {"b", dir + "/t2.ptc", "offline"}},
                                    3);
    SyntheticScene s = generate_scene(90, 8, 64, 64, 2, 4);
    std::vector<Query> queries = {{0, 10.0, 10.0}, {1, 30.0, 20.0}};

    auto l1 = cached_pseudo_label(teachers, 0, s.video, "vid0", queries, dir + "/cache", 1);
    auto l1_again = cached_pseudo_label(teachers, 0, s.video, "vid0", queries, dir + "/cache", 1);
    REQUIRE(std::memcmp(l1.tracks.data(), l1_again.tracks.data(),
                        l1.tracks.numel() * sizeof(float)) == 0);
    // two cache entries: one per teacher
    cached_pseudo_label(teachers, 1, s.video, "vid0", queries, dir + "/cache", 1);
    int64_t files = 0;
    for (const auto& e : fs::directory_iterator(dir + "/cache")) (void)e, ++files;
    REQUIRE(files == 2);
    fs::remove_all(dir);
}
