// pointtrack command line: data generation, training, distillation, tracking,
// evaluation, and plot emission.

#include <CLI11.hpp>

#include "pointtrack/distill.hpp"
#include "pointtrack/metrics.hpp"
#include "pointtrack/plot.hpp"

using namespace pointtrack;
namespace fs = std::filesystem;

namespace {

void write_sidecar(const std::string& primary_out, const std::string& command,
                   const nlohmann::json& options) {
    nlohmann::json side;
    side["command"] = command;
    side["options"] = options;
    std::string path = primary_out;
    while (!path.empty() && path.back() == '/') path.pop_back();
    std::ofstream f(path + ".config.json", std::ios::trunc);
    f << side.dump(2) << "\n";
}

nlohmann::json load_config_options(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot read config: " + path);
    nlohmann::json side = nlohmann::json::parse(f);
    return side.contains("options") ? side.at("options") : side;
}

template <typename T>
void from_cfg(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<Query> parse_queries(const std::string& spec, const SyntheticScene& scene) {
    std::vector<Query> queries;
    if (spec.rfind("gt", 0) == 0) {
        // gt or gt:N -- first-visible-frame queries from the scene's ground truth
        int64_t limit = scene.num_tracks();
        if (spec.size() > 3 && spec[2] == ':') limit = std::stol(spec.substr(3));
        for (int64_t i = 0; i < std::min(limit, scene.num_tracks()); ++i)
            for (int64_t t = 0; t < scene.num_frames(); ++t)
                if (scene.gt_visibility.at(i, t) != 0.f) {
                    queries.push_back({t, scene.gt_tracks.at(i, t, 0), scene.gt_tracks.at(i, t, 1)});
                    break;
                }
        return queries;
    }
    if (spec.rfind("grid:", 0) == 0) {
        const int k = std::stoi(spec.substr(5));
        PTK_CHECK_PARAM(k >= 1, "grid size must be positive");
        for (int gy = 0; gy < k; ++gy)
            for (int gx = 0; gx < k; ++gx)
                queries.push_back({0,
                                   (gx + 0.5) * static_cast<double>(scene.width()) / k,
                                   (gy + 0.5) * static_cast<double>(scene.height()) / k});
        return queries;
    }
    // JSON file: [[t,x,y], ...]
    std::ifstream f(spec);
    if (!f) throw io_error("cannot read queries: " + spec);
    nlohmann::json j = nlohmann::json::parse(f);
    for (const auto& q : j)
        queries.push_back({q.at(0).get<int64_t>(), q.at(1).get<double>(), q.at(2).get<double>()});
    return queries;
}

ModelConfig model_config_for(const std::string& preset, const std::string& mode) {
    ModelConfig mc = ModelConfig::preset(preset);
    mc.time_embed = mode == "offline" ? "learned" : "fourier";
    return mc;
}

// ---------------------------------------------------------------------------

int cmd_make_data(CLI::App& app, int argc, char** argv);

struct MakeDataOpts {
    uint64_t seed = 0;
    int64_t count = 8;
    int64_t frames = 24;
    int64_t size = 64;
    int sprites = 3;
    int tracks = 16;
    double max_speed = 5.0;
    std::string out_dir;
    int workers = 1;

    nlohmann::json to_json() const {
        return {{"seed", seed},         {"count", count},   {"frames", frames},
                {"size", size},         {"sprites", sprites}, {"tracks", tracks},
                {"max_speed", max_speed}, {"out_dir", out_dir}, {"workers", workers}};
    }
    void from_json(const nlohmann::json& j) {
        from_cfg(j, "seed", seed);
        from_cfg(j, "count", count);
        from_cfg(j, "frames", frames);
        from_cfg(j, "size", size);
        from_cfg(j, "sprites", sprites);
        from_cfg(j, "tracks", tracks);
        from_cfg(j, "max_speed", max_speed);
        from_cfg(j, "out_dir", out_dir);
        from_cfg(j, "workers", workers);
    }
};

int run_make_data(const MakeDataOpts& o) {
    fs::create_directories(o.out_dir);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, o.workers)) if (o.workers > 1)
    for (int64_t i = 0; i < o.count; ++i) {
        SceneConfig cfg;
        cfg.seed = o.seed + static_cast<uint64_t>(i);
        cfg.T = o.frames;
        cfg.H = o.size;
        cfg.W = o.size;
        cfg.n_sprites = o.sprites;
        cfg.n_tracks = o.tracks;
        cfg.max_speed = o.max_speed;
        SyntheticScene scene = generate_scene(cfg);
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%05ld.ptc", static_cast<long>(i));
        write_scene(scene, o.out_dir + "/" + name);
    }
    write_sidecar(o.out_dir, "make-data", o.to_json());
    std::printf("wrote %ld scenes to %s\n", static_cast<long>(o.count), o.out_dir.c_str());
    return 0;
}

struct TrainOpts {
    std::string mode = "offline";
    std::string preset = "toy";
    std::string data_dir;
    std::string out_dir;
    std::string init_checkpoint;
    int64_t steps = 2000;
    int64_t batch = 4;
    int64_t queries = 32;
    int64_t clip_len = 24;
    double lr = 5e-4;
    int64_t warmup = 1000;
    uint64_t seed = 0;
    int64_t checkpoint_every = 1000;

    nlohmann::json to_json() const {
        return {{"mode", mode},       {"preset", preset},   {"data_dir", data_dir},
                {"out_dir", out_dir}, {"init_checkpoint", init_checkpoint},
                {"steps", steps},     {"batch", batch},     {"queries", queries},
                {"clip_len", clip_len}, {"lr", lr},         {"warmup", warmup},
                {"seed", seed},       {"checkpoint_every", checkpoint_every}};
    }
    void from_json(const nlohmann::json& j) {
        from_cfg(j, "mode", mode);
        from_cfg(j, "preset", preset);
        from_cfg(j, "data_dir", data_dir);
        from_cfg(j, "out_dir", out_dir);
        from_cfg(j, "init_checkpoint", init_checkpoint);
        from_cfg(j, "steps", steps);
        from_cfg(j, "batch", batch);
        from_cfg(j, "queries", queries);
        from_cfg(j, "clip_len", clip_len);
        from_cfg(j, "lr", lr);
        from_cfg(j, "warmup", warmup);
        from_cfg(j, "seed", seed);
        from_cfg(j, "checkpoint_every", checkpoint_every);
    }
};

int run_train(const TrainOpts& o) {
    TrackerModel<float> model = o.init_checkpoint.empty()
                                    ? TrackerModel<float>(model_config_for(o.preset, o.mode), o.seed)
                                    : TrackerModel<float>::load_checkpoint(o.init_checkpoint);
    SceneDataset data = SceneDataset::from_dir(o.data_dir);
    TrainConfig cfg;
    cfg.mode = o.mode;
    cfg.steps = o.steps;
    cfg.batch = o.batch;
    cfg.queries_per_clip = o.queries;
    cfg.clip_len = o.clip_len;
    cfg.lr = o.lr;
    cfg.warmup_steps = o.warmup;
    cfg.seed = o.seed;
    cfg.checkpoint_every = o.checkpoint_every;
    write_sidecar(o.out_dir, "train", o.to_json());
    auto curve = train_supervised(model, data, cfg, o.out_dir);
    plot_loss_curve(curve, o.out_dir + "/loss_curve.png");
    std::printf("trained %ld steps; final track loss %.5f; model at %s/model.ptc\n",
                static_cast<long>(o.steps), curve.empty() ? -1.0 : curve.back().track_loss,
                o.out_dir.c_str());
    return 0;
}

struct DistillOpts {
    std::string student;
    std::string teachers;  // comma-separated checkpoint paths
    std::string videos_dir;
    std::string queries = "sift";
    std::string out_dir;
    std::string cache_dir;
    std::string teacher_agg = "random";
    std::string student_mode;  // defaults to the student checkpoint's mode
    int64_t steps = 2000;
    int64_t batch = 4;
    double lr = 5e-5;
    uint64_t seed = 0;
    int64_t n_queries = 32;
    int64_t keyframes = 4;
    int64_t min_points = 8;

    nlohmann::json to_json() const {
        return {{"student", student},     {"teachers", teachers},   {"videos_dir", videos_dir},
                {"queries", queries},     {"out_dir", out_dir},     {"cache_dir", cache_dir},
                {"teacher_agg", teacher_agg}, {"student_mode", student_mode},
                {"steps", steps},         {"batch", batch},         {"lr", lr},
                {"seed", seed},           {"n_queries", n_queries}, {"keyframes", keyframes},
                {"min_points", min_points}};
    }
    void from_json(const nlohmann::json& j) {
        from_cfg(j, "student", student);
        from_cfg(j, "teachers", teachers);
        from_cfg(j, "videos_dir", videos_dir);
        from_cfg(j, "queries", queries);
        from_cfg(j, "out_dir", out_dir);
        from_cfg(j, "cache_dir", cache_dir);
        from_cfg(j, "teacher_agg", teacher_agg);
        from_cfg(j, "student_mode", student_mode);
        from_cfg(j, "steps", steps);
        from_cfg(j, "batch", batch);
        from_cfg(j, "lr", lr);
        from_cfg(j, "seed", seed);
        from_cfg(j, "n_queries", n_queries);
        from_cfg(j, "keyframes", keyframes);
        from_cfg(j, "min_points", min_points);
    }
};

int run_distill(const DistillOpts& o) {
    PTK_CHECK_PARAM(o.queries == "sift", "only sift query sampling is available");
    TrackerModel<float> student = TrackerModel<float>::load_checkpoint(o.student);

    std::vector<TeacherEntry> entries;
    std::stringstream ss(o.teachers);
    std::string path;
    while (std::getline(ss, path, ',')) {
        if (path.empty()) continue;
        TeacherEntry e;
        e.checkpoint_path = path;
        e.name = fs::path(path).stem().string();
        nlohmann::json extra = TrackerModel<float>::checkpoint_extra(path);
        e.mode = extra.value("mode", "offline");
        entries.push_back(e);
    }
    TeacherRegistry<float> teachers(entries, o.seed);

    SceneDataset videos = SceneDataset::from_dir(o.videos_dir);
    DistillConfig cfg;
    cfg.steps = o.steps;
    cfg.batch = o.batch;
    cfg.lr = o.lr;
    cfg.seed = o.seed;
    cfg.student_mode = o.student_mode.empty()
                           ? TrackerModel<float>::checkpoint_extra(o.student).value("mode", "offline")
                           : o.student_mode;
    cfg.teacher_agg = o.teacher_agg;
    cfg.cache_dir = o.cache_dir;
    cfg.queries.n_queries = o.n_queries;
    cfg.queries.keyframes = o.keyframes;
    cfg.queries.min_points_per_frame = o.min_points;
    cfg.queries.bias_early = cfg.student_mode == "online";
    write_sidecar(o.out_dir, "distill", o.to_json());
    auto curve = finetune_student(student, teachers, videos, cfg, o.out_dir);
    plot_loss_curve(curve, o.out_dir + "/distill_curve.png");
    std::printf("distilled %ld steps; student at %s/student.ptc\n", static_cast<long>(o.steps),
                o.out_dir.c_str());
    return 0;
}

struct TrackOpts {
    std::string model;
    std::string video;  // scene container
    std::string queries = "gt";
    std::string mode = "offline";
    double vis_threshold = 0.6;
    std::string out;
    int iterations = -1;

    nlohmann::json to_json() const {
        return {{"model", model}, {"video", video},   {"queries", queries},
                {"mode", mode},   {"vis_threshold", vis_threshold}, {"out", out},
                {"iterations", iterations}};
    }
    void from_json(const nlohmann::json& j) {
        from_cfg(j, "model", model);
        from_cfg(j, "video", video);
        from_cfg(j, "queries", queries);
        from_cfg(j, "mode", mode);
        from_cfg(j, "vis_threshold", vis_threshold);
        from_cfg(j, "out", out);
        from_cfg(j, "iterations", iterations);
    }
};

int run_track(const TrackOpts& o) {
    if (!fs::exists(o.model)) throw param_error("checkpoint not found: " + o.model);
    TrackerModel<float> model = TrackerModel<float>::load_checkpoint(o.model);
    SyntheticScene scene = read_scene(o.video);
    std::vector<Query> queries = parse_queries(o.queries, scene);
    PTK_CHECK_PARAM(!queries.empty(), "no queries resolved from '", o.queries, "'");
    TrackResult<float> result = o.mode == "online"
                                    ? track_online(model, scene.video, queries, o.iterations)
                                    : track_offline(model, scene.video, queries, o.iterations);
    write_tracks(o.out, result, queries,
                 {{"mode", o.mode}, {"vis_threshold", o.vis_threshold}, {"video", o.video}});
    write_sidecar(o.out, "track", o.to_json());
    Tensor<uint8_t> gated = gate_visibility(result, o.vis_threshold);
    int64_t visible = 0;
    for (int64_t i = 0; i < gated.numel(); ++i) visible += gated[i];
    std::printf("tracked %zu points over %ld frames (%ld visible cells) -> %s\n", queries.size(),
                static_cast<long>(result.num_frames()), static_cast<long>(visible), o.out.c_str());
    return 0;
}

struct EvalOpts {
    std::string model;
    std::string data_dir;
    std::string mode = "offline";
    std::string protocol = "first-query";
    std::string report = "report.json";
    double vis_threshold = 0.6;
    bool no_support = false;
    int64_t limit = -1;
    int workers = 1;
    int iterations = -1;

    nlohmann::json to_json() const {
        return {{"model", model},     {"data_dir", data_dir}, {"mode", mode},
                {"protocol", protocol}, {"report", report},   {"vis_threshold", vis_threshold},
                {"no_support", no_support}, {"limit", limit}, {"workers", workers},
                {"iterations", iterations}};
    }
    void from_json(const nlohmann::json& j) {
        from_cfg(j, "model", model);
        from_cfg(j, "data_dir", data_dir);
        from_cfg(j, "mode", mode);
        from_cfg(j, "protocol", protocol);
        from_cfg(j, "report", report);
        from_cfg(j, "vis_threshold", vis_threshold);
        from_cfg(j, "no_support", no_support);
        from_cfg(j, "limit", limit);
        from_cfg(j, "workers", workers);
        from_cfg(j, "iterations", iterations);
    }
};

int run_eval(const EvalOpts& o) {
    PTK_CHECK_PARAM(o.protocol == "first-query", "unknown protocol '", o.protocol, "'");
    if (!fs::exists(o.model)) throw param_error("checkpoint not found: " + o.model);
    TrackerModel<float> model = TrackerModel<float>::load_checkpoint(o.model);
    SceneDataset data = SceneDataset::from_dir(o.data_dir);
    EvalProtocol proto;
    proto.mode = o.mode;
    proto.vis_threshold = o.vis_threshold;
    proto.support_points = !o.no_support;
    proto.limit_scenes = o.limit;
    proto.workers = o.workers;
    proto.iterations = o.iterations;

    std::vector<MetricsReport> per_scene;
    MetricsReport report = eval_first_query(model, data, proto, &per_scene);

    nlohmann::json out;
    out["protocol"] = proto.to_json();
    out["total"] = report.to_json();
    auto& scenes = out["per_scene"] = nlohmann::json::array();
    for (const auto& r : per_scene) scenes.push_back(r.to_json());
    std::ofstream f(o.report, std::ios::trunc);
    f << out.dump(2) << "\n";
    write_sidecar(o.report, "eval", o.to_json());

    auto show = [](const std::optional<double>& v) { return v ? *v : std::nan(""); };
    std::printf("scenes %ld  aj %.4f  delta_vis %.4f  delta_occ %.4f  oa %.4f  epe %.3f px\n",
                static_cast<long>(report.n_scenes), show(report.aj), show(report.delta_avg_vis),
                show(report.delta_avg_occ), show(report.oa), show(report.epe_vis_native));
    return 0;
}

struct PlotOpts {
    std::string tracks;
    std::string scene;
    std::string loss_csv;
    std::string scaling;
    std::string out = "plots";
    double vis_threshold = 0.6;
    int64_t stride = 1;

    nlohmann::json to_json() const {
        return {{"tracks", tracks}, {"scene", scene},     {"loss_csv", loss_csv},
                {"scaling", scaling}, {"out", out},       {"vis_threshold", vis_threshold},
                {"stride", stride}};
    }
    void from_json(const nlohmann::json& j) {
        from_cfg(j, "tracks", tracks);
        from_cfg(j, "scene", scene);
        from_cfg(j, "loss_csv", loss_csv);
        from_cfg(j, "scaling", scaling);
        from_cfg(j, "out", out);
        from_cfg(j, "vis_threshold", vis_threshold);
        from_cfg(j, "stride", stride);
    }
};

int run_plot(const PlotOpts& o) {
    bool did = false;
    fs::create_directories(o.out);
    if (!o.loss_csv.empty()) {
        auto rows = read_loss_curve(o.loss_csv);
        plot_loss_curve(rows, o.out + "/loss_curve.png");
        std::printf("loss curve (%zu rows) -> %s/loss_curve.png\n", rows.size(), o.out.c_str());
        did = true;
    }
    if (!o.scaling.empty()) {
        std::ifstream f(o.scaling);
        if (!f) throw io_error("cannot read scaling data: " + o.scaling);
        nlohmann::json j = nlohmann::json::parse(f);
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : j) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        plot_scaling_curve(pts, o.out + "/scaling.png");
        std::printf("scaling curve (%zu points) -> %s/scaling.png\n", pts.size(), o.out.c_str());
        did = true;
    }
    if (!o.tracks.empty()) {
        PTK_CHECK_PARAM(!o.scene.empty(), "--tracks needs --scene for the video frames");
        TrackFile tf = read_tracks(o.tracks);
        SyntheticScene scene = read_scene(o.scene);
        auto paths = plot_track_overlays(scene.video, tf.result, o.out + "/overlays",
                                         o.vis_threshold, o.stride);
        std::printf("%zu overlay frames -> %s/overlays\n", paths.size(), o.out.c_str());
        did = true;
    }
    PTK_CHECK_PARAM(did, "nothing to plot; pass --tracks/--scene, --loss-csv, or --scaling");
    write_sidecar(o.out, "plot", o.to_json());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint point tracking on synthetic video: data, training, "
                 "distillation, tracking, evaluation, plots"};
    app.require_subcommand(1);

    MakeDataOpts md;
    TrainOpts tr;
    DistillOpts di;
    TrackOpts tk;
    EvalOpts ev;
    PlotOpts pl;
    std::string config_path;

    auto* c_md = app.add_subcommand("make-data", "generate synthetic scenes with ground truth");
    c_md->add_option("--config", config_path, "preload options from a sidecar JSON");
    c_md->add_option("--seed", md.seed);
    c_md->add_option("--count", md.count);
    c_md->add_option("--frames", md.frames);
    c_md->add_option("--size", md.size);
    c_md->add_option("--sprites", md.sprites);
    c_md->add_option("--tracks", md.tracks);
    c_md->add_option("--max-speed", md.max_speed);
    c_md->add_option("--out-dir", md.out_dir)->required();
    c_md->add_option("--workers", md.workers);

    auto* c_tr = app.add_subcommand("train", "supervised training on scene datasets");
    c_tr->add_option("--config", config_path);
    c_tr->add_option("--mode", tr.mode)->check(CLI::IsMember({"online", "offline"}));
    c_tr->add_option("--preset", tr.preset)->check(CLI::IsMember({"toy", "full"}));
    c_tr->add_option("--data-dir", tr.data_dir)->required();
    c_tr->add_option("--out", tr.out_dir)->required();
    c_tr->add_option("--init", tr.init_checkpoint);
    c_tr->add_option("--steps", tr.steps);
    c_tr->add_option("--batch", tr.batch);
    c_tr->add_option("--queries", tr.queries);
    c_tr->add_option("--clip-len", tr.clip_len);
    c_tr->add_option("--lr", tr.lr);
    c_tr->add_option("--warmup", tr.warmup);
    c_tr->add_option("--seed", tr.seed);
    c_tr->add_option("--checkpoint-every", tr.checkpoint_every);

    auto* c_di = app.add_subcommand("distill", "multi-teacher pseudo-label fine-tuning");
    c_di->add_option("--config", config_path);
    c_di->add_option("--student", di.student)->required();
    c_di->add_option("--teachers", di.teachers)->required();
    c_di->add_option("--videos-dir", di.videos_dir)->required();
    c_di->add_option("--queries", di.queries);
    c_di->add_option("--steps", di.steps);
    c_di->add_option("--batch", di.batch);
    c_di->add_option("--lr", di.lr);
    c_di->add_option("--seed", di.seed);
    c_di->add_option("--out", di.out_dir)->required();
    c_di->add_option("--cache-dir", di.cache_dir);
    c_di->add_option("--teacher-agg", di.teacher_agg)
        ->check(CLI::IsMember({"random", "mean", "median"}));
    c_di->add_option("--student-mode", di.student_mode)
        ->check(CLI::IsMember({"", "online", "offline"}));
    c_di->add_option("--n-queries", di.n_queries);
    c_di->add_option("--keyframes", di.keyframes);
    c_di->add_option("--min-points", di.min_points);

    auto* c_tk = app.add_subcommand("track", "run the tracker on a scene video");
    c_tk->add_option("--config", config_path);
    c_tk->add_option("--model", tk.model)->required();
    c_tk->add_option("--video", tk.video)->required();
    c_tk->add_option("--queries", tk.queries, "gt | gt:N | grid:K | queries.json");
    c_tk->add_option("--mode", tk.mode)->check(CLI::IsMember({"online", "offline"}));
    c_tk->add_option("--vis-threshold", tk.vis_threshold);
    c_tk->add_option("--iterations", tk.iterations);
    c_tk->add_option("--out", tk.out)->required();

    auto* c_ev = app.add_subcommand("eval", "first-query evaluation over a scene dataset");
    c_ev->add_option("--config", config_path);
    c_ev->add_option("--model", ev.model)->required();
    c_ev->add_option("--data-dir", ev.data_dir)->required();
    c_ev->add_option("--mode", ev.mode)->check(CLI::IsMember({"online", "offline"}));
    c_ev->add_option("--protocol", ev.protocol);
    c_ev->add_option("--report", ev.report);
    c_ev->add_option("--vis-threshold", ev.vis_threshold);
    c_ev->add_flag("--no-support", ev.no_support, "skip support-point context");
    c_ev->add_option("--limit", ev.limit);
    c_ev->add_option("--workers", ev.workers);
    c_ev->add_option("--iterations", ev.iterations);

    auto* c_pl = app.add_subcommand("plot", "overlay frames and curve images");
    c_pl->add_option("--config", config_path);
    c_pl->add_option("--tracks", pl.tracks);
    c_pl->add_option("--scene", pl.scene);
    c_pl->add_option("--loss-csv", pl.loss_csv);
    c_pl->add_option("--scaling", pl.scaling);
    c_pl->add_option("--out", pl.out);
    c_pl->add_option("--vis-threshold", pl.vis_threshold);
    c_pl->add_option("--stride", pl.stride);

    // preload sidecar options before explicit flags take precedence
    app.preparse_callback([&](size_t) {});
    try {
        // find --config early so file values become defaults
        for (int i = 1; i + 1 < argc; ++i) {
            if (std::string(argv[i]) == "--config") {
                nlohmann::json j = load_config_options(argv[i + 1]);
                md.from_json(j);
                tr.from_json(j);
                di.from_json(j);
                tk.from_json(j);
                ev.from_json(j);
                pl.from_json(j);
                break;
            }
        }
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    try {
        if (c_md->parsed()) return run_make_data(md);
        if (c_tr->parsed()) return run_train(tr);
        if (c_di->parsed()) return run_distill(di);
        if (c_tk->parsed()) return run_track(tk);
        if (c_ev->parsed()) return run_eval(ev);
        if (c_pl->parsed()) return run_plot(pl);
    } catch (const param_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const io_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
