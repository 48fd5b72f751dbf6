#pragma once

#include <zlib.h>

#include "pointtrack/engines.hpp"
#include "pointtrack/synth.hpp"
#include "pointtrack/train.hpp"

namespace pointtrack {

struct Rgb {
    uint8_t r = 0, g = 0, b = 0;
};

/// Track palette: evenly spaced hues.
inline Rgb track_color(int64_t i, int64_t n) {
    const double h = 360.0 * static_cast<double>(i) / std::max<int64_t>(1, n);
    const double x = 1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    if (h < 60) r = 1, g = x;
    else if (h < 120) r = x, g = 1;
    else if (h < 180) g = 1, b = x;
    else if (h < 240) g = x, b = 1;
    else if (h < 300) r = x, b = 1;
    else r = 1, b = x;
    return {static_cast<uint8_t>(55 + 200 * r), static_cast<uint8_t>(55 + 200 * g),
            static_cast<uint8_t>(55 + 200 * b)};
}

class Canvas {
  public:
    Canvas(int64_t w, int64_t h, Rgb fill = {255, 255, 255}) : w_(w), h_(h), px_(static_cast<size_t>(w * h * 3)) {
        for (int64_t i = 0; i < w * h; ++i) set_index(i, fill);
    }

    int64_t width() const { return w_; }
    int64_t height() const { return h_; }
    const std::vector<uint8_t>& pixels() const { return px_; }

    void set(int64_t x, int64_t y, Rgb c) {
        if (x < 0 || x >= w_ || y < 0 || y >= h_) return;
        set_index(y * w_ + x, c);
    }

    void line(int64_t x0, int64_t y0, int64_t x1, int64_t y1, Rgb c) {
        const int64_t dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int64_t sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int64_t err = dx + dy;
        for (;;) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int64_t e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void disc(int64_t cx, int64_t cy, int64_t r, Rgb c) {
        for (int64_t y = -r; y <= r; ++y)
            for (int64_t x = -r; x <= r; ++x)
                if (x * x + y * y <= r * r) set(cx + x, cy + y, c);
    }

    void cross(int64_t cx, int64_t cy, int64_t r, Rgb c) {
        line(cx - r, cy, cx + r, cy, c);
        line(cx, cy - r, cx, cy + r, c);
    }

  private:
    void set_index(int64_t i, Rgb c) {
        px_[static_cast<size_t>(3 * i)] = c.r;
        px_[static_cast<size_t>(3 * i + 1)] = c.g;
        px_[static_cast<size_t>(3 * i + 2)] = c.b;
    }

    int64_t w_, h_;
    std::vector<uint8_t> px_;
};

/// Minimal RGB8 PNG writer (single IDAT, filter 0, zlib level 6).
inline void write_png(const std::string& path, const Canvas& canvas) {
    const int64_t w = canvas.width(), h = canvas.height();
    std::vector<uint8_t> raw(static_cast<size_t>(h * (1 + 3 * w)));
    for (int64_t y = 0; y < h; ++y) {
        raw[static_cast<size_t>(y * (1 + 3 * w))] = 0;  // filter: none
        std::copy(canvas.pixels().begin() + y * 3 * w, canvas.pixels().begin() + (y + 1) * 3 * w,
                  raw.begin() + y * (1 + 3 * w) + 1);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw io_error("png compression failed");
    compressed.resize(bound);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot write image: " + path);
    auto be32 = [](uint32_t v) {
        return std::array<uint8_t, 4>{static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                                      static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
    };
    auto chunk = [&](const char* type, const std::vector<uint8_t>& data) {
        auto len = be32(static_cast<uint32_t>(data.size()));
        f.write(reinterpret_cast<const char*>(len.data()), 4);
        std::vector<uint8_t> block(4 + data.size());
        std::memcpy(block.data(), type, 4);
        std::copy(data.begin(), data.end(), block.begin() + 4);
        f.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size()));
        const uint32_t crc = static_cast<uint32_t>(
            crc32(0, block.data(), static_cast<uInt>(block.size())));
        auto c = be32(crc);
        f.write(reinterpret_cast<const char*>(c.data()), 4);
    };

    const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    f.write(reinterpret_cast<const char*>(sig), 8);
    std::vector<uint8_t> ihdr;
    for (uint8_t b : be32(static_cast<uint32_t>(w))) ihdr.push_back(b);
    for (uint8_t b : be32(static_cast<uint32_t>(h))) ihdr.push_back(b);
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
    chunk("IHDR", ihdr);
    chunk("IDAT", compressed);
    chunk("IEND", {});
    if (!f) throw io_error("write failed: " + path);
}

/// One frame of the video with tracked points drawn on top: discs for visible
/// predictions, open crosses for occluded ones, short trails for history.
inline Canvas render_overlay(const Tensor<float>& video_chw, const TrackResult<float>& result,
                             int64_t t, double vis_threshold = 0.6, int upscale = 4) {
    const int64_t H = video_chw.dim(2), W = video_chw.dim(3);
    Canvas canvas(W * upscale, H * upscale);
    for (int64_t y = 0; y < H * upscale; ++y)
        for (int64_t x = 0; x < W * upscale; ++x) {
            const int64_t sy = y / upscale, sx = x / upscale;
            canvas.set(x, y, {static_cast<uint8_t>(255 * video_chw.at(t, 0, sy, sx)),
                              static_cast<uint8_t>(255 * video_chw.at(t, 1, sy, sx)),
                              static_cast<uint8_t>(255 * video_chw.at(t, 2, sy, sx))});
        }
    const int64_t N = result.num_points();
    for (int64_t i = 0; i < N; ++i) {
        const Rgb c = track_color(i, N);
        // trail over the last few frames
        for (int64_t s = std::max<int64_t>(0, t - 6); s < t; ++s)
            canvas.line(static_cast<int64_t>(result.tracks.at(i, s, 0) * upscale),
                        static_cast<int64_t>(result.tracks.at(i, s, 1) * upscale),
                        static_cast<int64_t>(result.tracks.at(i, s + 1, 0) * upscale),
                        static_cast<int64_t>(result.tracks.at(i, s + 1, 1) * upscale), c);
        const int64_t px = static_cast<int64_t>(result.tracks.at(i, t, 0) * upscale);
        const int64_t py = static_cast<int64_t>(result.tracks.at(i, t, 1) * upscale);
        const bool visible = static_cast<double>(result.visibility_prob.at(i, t)) *
                                 static_cast<double>(result.confidence_prob.at(i, t)) >
                             vis_threshold;
        if (visible)
            canvas.disc(px, py, upscale, c);
        else
            canvas.cross(px, py, upscale + 1, c);
    }
    return canvas;
}

/// Polyline chart of (x, y) series on a white canvas with a framed plot area.
inline Canvas render_chart(const std::vector<std::vector<std::pair<double, double>>>& series,
                           int64_t w = 640, int64_t h = 400, bool log_y = false) {
    Canvas canvas(w, h);
    const int64_t m = 40;  // margin
    const Rgb frame{30, 30, 30};
    canvas.line(m, h - m, w - m, h - m, frame);
    canvas.line(m, m, m, h - m, frame);

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (auto [x, y] : s) {
            const double yy = log_y ? std::log10(std::max(y, 1e-12)) : y;
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, yy);
            ymax = std::max(ymax, yy);
        }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;

    auto toxy = [&](double x, double y) {
        const double yy = log_y ? std::log10(std::max(y, 1e-12)) : y;
        const int64_t px = m + static_cast<int64_t>((x - xmin) / (xmax - xmin) * (w - 2 * m));
        const int64_t py = h - m - static_cast<int64_t>((yy - ymin) / (ymax - ymin) * (h - 2 * m));
        return std::pair<int64_t, int64_t>(px, py);
    };
    for (size_t si = 0; si < series.size(); ++si) {
        const Rgb c = track_color(static_cast<int64_t>(si), static_cast<int64_t>(series.size()));
        for (size_t i = 0; i + 1 < series[si].size(); ++i) {
            auto [x0, y0] = toxy(series[si][i].first, series[si][i].second);
            auto [x1, y1] = toxy(series[si][i + 1].first, series[si][i + 1].second);
            canvas.line(x0, y0, x1, y1, c);
        }
        for (const auto& [x, y] : series[si]) {
            auto [px, py] = toxy(x, y);
            canvas.disc(px, py, 2, c);
        }
    }
    return canvas;
}

/// Loss curve image: track/conf/vis losses over steps (log scale).
inline void plot_loss_curve(const std::vector<LossCurveRow>& rows, const std::string& out_path) {
    std::vector<std::vector<std::pair<double, double>>> series(3);
    for (const auto& r : rows) {
        series[0].emplace_back(static_cast<double>(r.step), r.track_loss);
        series[1].emplace_back(static_cast<double>(r.step), r.conf_loss);
        series[2].emplace_back(static_cast<double>(r.step), r.vis_loss);
    }
    write_png(out_path, render_chart(series, 640, 400, /*log_y=*/true));
}

/// Scaling curve: metric vs corpus size.
inline void plot_scaling_curve(const std::vector<std::pair<double, double>>& points,
                               const std::string& out_path) {
    write_png(out_path, render_chart({points}, 640, 400, /*log_y=*/false));
}

/// Overlay images for a span of frames; returns the written paths.
inline std::vector<std::string> plot_track_overlays(const Tensor<float>& video_chw,
                                                    const TrackResult<float>& result,
                                                    const std::string& out_dir,
                                                    double vis_threshold = 0.6, int64_t stride = 1) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> paths;
    for (int64_t t = 0; t < video_chw.dim(0); t += stride) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04ld.png", static_cast<long>(t));
        const std::string path = out_dir + "/" + name;
        write_png(path, render_overlay(video_chw, result, t, vis_threshold));
        paths.push_back(path);
    }
    return paths;
}

}  // namespace pointtrack
