#pragma once

#include <json.hpp>
#include <vector>

#include "pointtrack/container.hpp"
#include "pointtrack/rng.hpp"
#include "pointtrack/tensor.hpp"

namespace pointtrack {

// Procedurally generated sprite videos with closed-form ground-truth tracks.
// Sprites are textured rectangles/ellipses translating along
//   pos(t) = a + b*t + c*sin(w*t + phi)
// over a textured static background. Depth index 0 is nearest; a point is
// occluded when a strictly nearer sprite covers it or it leaves the frame.

struct SpriteParams {
    int shape = 0;  // 0 rectangle, 1 ellipse
    double half_w = 8, half_h = 8;
    double ax = 0, bx = 0, cx = 0, wx = 0, phx = 0;
    double ay = 0, by = 0, cy = 0, wy = 0, phy = 0;
    int depth = 0;
    uint64_t texture_seed = 0;

    nlohmann::json to_json() const {
        return {{"shape", shape}, {"half_w", half_w}, {"half_h", half_h},
                {"ax", ax},       {"bx", bx},         {"cx", cx},
                {"wx", wx},       {"phx", phx},       {"ay", ay},
                {"by", by},       {"cy", cy},         {"wy", wy},
                {"phy", phy},     {"depth", depth},   {"texture_seed", texture_seed}};
    }
    static SpriteParams from_json(const nlohmann::json& j) {
        SpriteParams s;
        s.shape = j.at("shape");
        s.half_w = j.at("half_w");
        s.half_h = j.at("half_h");
        s.ax = j.at("ax");
        s.bx = j.at("bx");
        s.cx = j.at("cx");
        s.wx = j.at("wx");
        s.phx = j.at("phx");
        s.ay = j.at("ay");
        s.by = j.at("by");
        s.cy = j.at("cy");
        s.wy = j.at("wy");
        s.phy = j.at("phy");
        s.depth = j.at("depth");
        s.texture_seed = j.at("texture_seed");
        return s;
    }
};

/// Which sprite a ground-truth track rides on (-1: static background point).
struct TrackAttach {
    int sprite = -1;
    double off_x = 0, off_y = 0;

    nlohmann::json to_json() const {
        return {{"sprite", sprite}, {"off_x", off_x}, {"off_y", off_y}};
    }
    static TrackAttach from_json(const nlohmann::json& j) {
        return {j.at("sprite"), j.at("off_x"), j.at("off_y")};
    }
};

struct SceneConfig {
    uint64_t seed = 0;
    int64_t T = 24, H = 64, W = 64;
    int n_sprites = 3;
    int n_tracks = 16;
    double max_speed = 5.0;        // px/frame at 64x64; scales with min(H,W)/64
    double sprite_query_bias = 0.8;

    nlohmann::json to_json() const {
        return {{"seed", seed},         {"T", T},
                {"H", H},               {"W", W},
                {"n_sprites", n_sprites}, {"n_tracks", n_tracks},
                {"max_speed", max_speed}, {"sprite_query_bias", sprite_query_bias}};
    }
    static SceneConfig from_json(const nlohmann::json& j) {
        SceneConfig c;
        c.seed = j.at("seed");
        c.T = j.at("T");
        c.H = j.at("H");
        c.W = j.at("W");
        c.n_sprites = j.at("n_sprites");
        c.n_tracks = j.at("n_tracks");
        c.max_speed = j.at("max_speed");
        c.sprite_query_bias = j.at("sprite_query_bias");
        return c;
    }
};

struct SyntheticScene {
    Tensor<float> video;          // [T,3,H,W], values in [0,1]
    Tensor<float> gt_tracks;      // [N,T,2] (x,y), continuous pixel coordinates
    Tensor<float> gt_visibility;  // [N,T], 0 or 1
    uint64_t seed = 0;
    SceneConfig config;
    std::vector<SpriteParams> sprites;
    std::vector<TrackAttach> attach;

    int64_t num_tracks() const { return gt_tracks.dim(0); }
    int64_t num_frames() const { return video.dim(0); }
    int64_t height() const { return video.dim(2); }
    int64_t width() const { return video.dim(3); }
};

namespace synth_detail {

inline std::pair<double, double> sprite_position(const SpriteParams& s, double t) {
    return {s.ax + s.bx * t + s.cx * std::sin(s.wx * t + s.phx),
            s.ay + s.by * t + s.cy * std::sin(s.wy * t + s.phy)};
}

inline bool sprite_contains(const SpriteParams& s, double t, double x, double y) {
    const auto [cx, cy] = sprite_position(s, t);
    const double dx = x - cx, dy = y - cy;
    if (s.shape == 0) return std::abs(dx) <= s.half_w && std::abs(dy) <= s.half_h;
    const double u = dx / s.half_w, v = dy / s.half_h;
    return u * u + v * v <= 1.0;
}

/// Smooth value-noise texture: a coarse random RGB grid, bilinearly upsampled.
struct NoiseTexture {
    int grid = 6;
    std::vector<float> cells;  // grid*grid*3

    explicit NoiseTexture(uint64_t seed, int grid_size = 6) : grid(grid_size) {
        Rng rng(seed);
        cells.resize(static_cast<size_t>(grid) * grid * 3);
        for (auto& c : cells) c = static_cast<float>(rng.uniform(0.05, 0.95));
    }

    /// u, v in [0,1]
    void sample(double u, double v, float* rgb) const {
        const double gx = std::clamp(u, 0.0, 1.0) * (grid - 1);
        const double gy = std::clamp(v, 0.0, 1.0) * (grid - 1);
        const int x0 = std::min(static_cast<int>(gx), grid - 2);
        const int y0 = std::min(static_cast<int>(gy), grid - 2);
        const double tx = gx - x0, ty = gy - y0;
        for (int c = 0; c < 3; ++c) {
            const double v00 = cells[static_cast<size_t>((y0 * grid + x0) * 3 + c)];
            const double v10 = cells[static_cast<size_t>((y0 * grid + x0 + 1) * 3 + c)];
            const double v01 = cells[static_cast<size_t>(((y0 + 1) * grid + x0) * 3 + c)];
            const double v11 = cells[static_cast<size_t>(((y0 + 1) * grid + x0 + 1) * 3 + c)];
            rgb[c] = static_cast<float>((v00 * (1 - tx) + v10 * tx) * (1 - ty) +
                                        (v01 * (1 - tx) + v11 * tx) * ty);
        }
    }
};

inline bool in_frame(double x, double y, int64_t W, int64_t H) {
    return x >= 0.0 && x < static_cast<double>(W) && y >= 0.0 && y < static_cast<double>(H);
}

// visible = in frame and no strictly nearer sprite covers the point
inline bool point_visible(const std::vector<SpriteParams>& sprites, const TrackAttach& a, double t,
                          double x, double y, int64_t W, int64_t H) {
    if (!in_frame(x, y, W, H)) return false;
    const int own_depth = a.sprite >= 0 ? sprites[static_cast<size_t>(a.sprite)].depth
                                        : static_cast<int>(sprites.size());
    for (const auto& s : sprites)
        if (s.depth < own_depth && sprite_contains(s, t, x, y)) return false;
    return true;
}

}  // namespace synth_detail

/// Deterministic scene generation; identical arguments give identical scenes.
inline SyntheticScene generate_scene(const SceneConfig& cfg) {
    PTK_CHECK_PARAM(cfg.T >= 2, "need at least 2 frames, got ", cfg.T);
    PTK_CHECK_PARAM(cfg.H >= 32 && cfg.W >= 32, "frames must be at least 32x32, got ", cfg.H, "x",
                    cfg.W);
    PTK_CHECK_PARAM(cfg.n_sprites >= 1, "need at least one sprite");
    PTK_CHECK_PARAM(cfg.n_tracks >= 1, "need at least one track");
    PTK_CHECK_PARAM(cfg.max_speed >= 0, "negative max speed");

    using namespace synth_detail;
    const double scale = static_cast<double>(std::min(cfg.H, cfg.W)) / 64.0;
    const double axis_budget = cfg.max_speed * scale / std::sqrt(2.0);
    const bool want_occlusion = cfg.n_sprites >= 2 && cfg.T >= 16;

    SyntheticScene scene;
    scene.seed = cfg.seed;
    scene.config = cfg;

    // retries are deterministic: attempt index is folded into the stream seed
    for (int attempt = 0; attempt < 64; ++attempt) {
        Rng rng(hash_combine(splitmix64(cfg.seed), static_cast<uint64_t>(attempt)));
        std::vector<SpriteParams> sprites;
        for (int i = 0; i < cfg.n_sprites; ++i) {
            SpriteParams s;
            s.shape = static_cast<int>(rng.uniform_int(2));
            s.half_w = rng.uniform(0.12, 0.25) * std::min(cfg.H, cfg.W);
            s.half_h = rng.uniform(0.12, 0.25) * std::min(cfg.H, cfg.W);
            s.depth = i;
            s.texture_seed = rng.next_u64();
            auto sample_axis = [&](double lo, double hi, double& a, double& b, double& c,
                                   double& w, double& ph) {
                a = rng.uniform(lo, hi);
                b = rng.uniform(-0.5, 0.5) * axis_budget;
                w = rng.uniform(0.15, 0.6);
                const double amp_budget = (axis_budget - std::abs(b)) / w;
                c = rng.uniform(-1.0, 1.0) * amp_budget;
                ph = rng.uniform(0.0, 2.0 * M_PI);
            };
            sample_axis(0.36 * cfg.W, 0.64 * cfg.W, s.ax, s.bx, s.cx, s.wx, s.phx);
            sample_axis(0.36 * cfg.H, 0.64 * cfg.H, s.ay, s.by, s.cy, s.wy, s.phy);
            // recenter so the sinusoid's t=0 offset does not move the start point
            s.ax -= s.cx * std::sin(s.phx);
            s.ay -= s.cy * std::sin(s.phy);
            sprites.push_back(s);
        }

        std::vector<TrackAttach> attach;
        Rng trng = rng.fork("tracks");
        for (int i = 0; i < cfg.n_tracks; ++i) {
            TrackAttach a;
            if (trng.bernoulli(cfg.sprite_query_bias)) {
                a.sprite = static_cast<int>(trng.uniform_int(cfg.n_sprites));
                const SpriteParams& s = sprites[static_cast<size_t>(a.sprite)];
                // rejection-sample an offset inside the shape
                for (;;) {
                    a.off_x = trng.uniform(-s.half_w, s.half_w);
                    a.off_y = trng.uniform(-s.half_h, s.half_h);
                    if (s.shape == 0) break;
                    const double u = a.off_x / s.half_w, v = a.off_y / s.half_h;
                    if (u * u + v * v <= 0.98) break;
                }
            } else {
                a.sprite = -1;
                // background points start clear of every sprite (3 px margin at t=0)
                for (int tries = 0; tries < 100; ++tries) {
                    a.off_x = trng.uniform(0.05 * cfg.W, 0.95 * cfg.W);
                    a.off_y = trng.uniform(0.05 * cfg.H, 0.95 * cfg.H);
                    bool covered = false;
                    for (const auto& s : sprites) {
                        SpriteParams inflated = s;
                        inflated.half_w += 3.0;
                        inflated.half_h += 3.0;
                        if (sprite_contains(inflated, 0.0, a.off_x, a.off_y)) {
                            covered = true;
                            break;
                        }
                    }
                    if (!covered) break;
                }
            }
            attach.push_back(a);
        }

        // ground truth
        const int64_t N = cfg.n_tracks, T = cfg.T;
        Tensor<float> tracks({N, T, 2});
        Tensor<float> vis({N, T});
        bool occlusion_seen = false;
        for (int64_t i = 0; i < N; ++i) {
            const TrackAttach& a = attach[static_cast<size_t>(i)];
            for (int64_t t = 0; t < T; ++t) {
                double x, y;
                if (a.sprite >= 0) {
                    const auto [cx, cy] =
                        sprite_position(sprites[static_cast<size_t>(a.sprite)], static_cast<double>(t));
                    x = cx + a.off_x;
                    y = cy + a.off_y;
                } else {
                    x = a.off_x;
                    y = a.off_y;
                }
                tracks.at(i, t, 0) = static_cast<float>(x);
                tracks.at(i, t, 1) = static_cast<float>(y);
                const bool v = point_visible(sprites, a, static_cast<double>(t), x, y, cfg.W, cfg.H);
                vis.at(i, t) = v ? 1.f : 0.f;
                if (!v && in_frame(x, y, cfg.W, cfg.H)) occlusion_seen = true;
            }
        }
        if (want_occlusion && !occlusion_seen) continue;

        // render: front-to-back first hit per pixel, background behind everything
        NoiseTexture bg(hash_combine(splitmix64(cfg.seed), 0x6267ULL), 14);
        std::vector<NoiseTexture> tex;
        tex.reserve(sprites.size());
        for (const auto& s : sprites) tex.emplace_back(s.texture_seed, 10);
        Tensor<float> video({T, 3, cfg.H, cfg.W});
        std::vector<std::pair<double, double>> centers(sprites.size());
        for (int64_t t = 0; t < T; ++t) {
            for (size_t si = 0; si < sprites.size(); ++si)
                centers[si] = sprite_position(sprites[si], static_cast<double>(t));
            for (int64_t y = 0; y < cfg.H; ++y)
                for (int64_t x = 0; x < cfg.W; ++x) {
                    float rgb[3];
                    bool hit = false;
                    for (size_t si = 0; si < sprites.size() && !hit; ++si) {
                        const SpriteParams& s = sprites[si];
                        const double dx = x - centers[si].first, dy = y - centers[si].second;
                        bool inside = s.shape == 0
                                          ? std::abs(dx) <= s.half_w && std::abs(dy) <= s.half_h
                                          : (dx / s.half_w) * (dx / s.half_w) +
                                                    (dy / s.half_h) * (dy / s.half_h) <=
                                                1.0;
                        if (inside) {
                            tex[si].sample((dx + s.half_w) / (2 * s.half_w),
                                           (dy + s.half_h) / (2 * s.half_h), rgb);
                            hit = true;
                        }
                    }
                    if (!hit)
                        bg.sample(static_cast<double>(x) / (cfg.W - 1),
                                  static_cast<double>(y) / (cfg.H - 1), rgb);
                    for (int c = 0; c < 3; ++c) video.at(t, c, y, x) = rgb[c];
                }
        }

        scene.video = std::move(video);
        scene.gt_tracks = std::move(tracks);
        scene.gt_visibility = std::move(vis);
        scene.sprites = std::move(sprites);
        scene.attach = std::move(attach);
        return scene;
    }
    throw param_error("could not generate a scene with an occlusion event; relax the config");
}

inline SyntheticScene generate_scene(uint64_t seed, int64_t T, int64_t H, int64_t W, int n_sprites,
                                     int n_tracks) {
    SceneConfig cfg;
    cfg.seed = seed;
    cfg.T = T;
    cfg.H = H;
    cfg.W = W;
    cfg.n_sprites = n_sprites;
    cfg.n_tracks = n_tracks;
    return generate_scene(cfg);
}

// ---------------------------------------------------------------------------
// scene container I/O
// ---------------------------------------------------------------------------

inline void write_scene(const SyntheticScene& scene, const std::string& path) {
    ContainerData c;
    c.kind = "scene";
    c.meta["T"] = scene.video.dim(0);
    c.meta["H"] = scene.video.dim(2);
    c.meta["W"] = scene.video.dim(3);
    c.meta["N"] = scene.gt_tracks.dim(0);
    c.meta["seed"] = scene.seed;
    c.meta["config"] = scene.config.to_json();
    auto& sj = c.meta["sprites"] = nlohmann::json::array();
    for (const auto& s : scene.sprites) sj.push_back(s.to_json());
    auto& aj = c.meta["tracks"] = nlohmann::json::array();
    for (const auto& a : scene.attach) aj.push_back(a.to_json());
    c.tensors.emplace_back("video", scene.video);
    c.tensors.emplace_back("gt_tracks", scene.gt_tracks);
    c.tensors.emplace_back("gt_visibility", scene.gt_visibility);
    write_container(path, c);
}

inline SyntheticScene read_scene(const std::string& path) {
    ContainerData c = read_container(path, "scene");
    SyntheticScene scene;
    scene.video = c.tensor("video");
    scene.gt_tracks = c.tensor("gt_tracks");
    scene.gt_visibility = c.tensor("gt_visibility");
    scene.seed = c.meta.at("seed");
    scene.config = SceneConfig::from_json(c.meta.at("config"));
    for (const auto& j : c.meta.at("sprites")) scene.sprites.push_back(SpriteParams::from_json(j));
    for (const auto& j : c.meta.at("tracks")) scene.attach.push_back(TrackAttach::from_json(j));
    return scene;
}

}  // namespace pointtrack
