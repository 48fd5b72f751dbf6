#pragma once

#include <json.hpp>
#include <string>

#include "pointtrack/common.hpp"

namespace pointtrack {

/// Everything needed to rebuild the model from a checkpoint header.
struct ModelConfig {
    int64_t d = 128;          // feature channels
    int k = 4;                // base downsample factor (power of two)
    int scales = 4;           // pyramid levels
    int trunk_blocks = 2;     // residual blocks after the stem
    int delta = 3;            // correlation neighborhood radius
    int64_t p = 64;           // per-scale correlation projection dim
    int64_t corr_hidden = 384;
    int blocks = 6;           // transformer blocks
    int64_t width = 256;      // transformer token width
    int heads = 8;
    int64_t n_proxy = 64;     // proxy tokens for cross-track attention
    int m_train = 4;          // refinement iterations during training
    int m_eval = 6;           // refinement iterations at inference
    int fourier_bands = 10;   // displacement encoding bands
    int64_t time_embed_len = 60;         // learned time table length
    std::string time_embed = "fourier";  // "fourier" | "learned"
    int64_t window_len = 16;             // online sliding window T'
    int64_t max_video_len = 240;         // offline capacity bound

    static ModelConfig full() { return ModelConfig{}; }

    static ModelConfig toy() {
        ModelConfig c;
        c.d = 64;
        c.trunk_blocks = 2;
        c.delta = 2;
        c.p = 32;
        c.corr_hidden = 128;
        c.blocks = 2;
        c.width = 64;
        c.heads = 4;
        c.n_proxy = 16;
        c.time_embed_len = 24;
        c.window_len = 8;
        c.max_video_len = 96;
        return c;
    }

    static ModelConfig preset(const std::string& name) {
        if (name == "toy") return toy();
        if (name == "full") return full();
        throw param_error("unknown preset '" + name + "' (expected toy or full)");
    }

    int64_t token_dim() const {
        return 2 * (2 + 4 * static_cast<int64_t>(fourier_bands)) + 2 + p * scales;
    }
    int64_t nbhd_side() const { return 2 * static_cast<int64_t>(delta) + 1; }
    int64_t corr_len() const {
        const int64_t k2 = nbhd_side() * nbhd_side();
        return k2 * k2;
    }
    int64_t scale_divisor(int s) const { return static_cast<int64_t>(k) << (s - 1); }

    void validate() const {
        PTK_CHECK_PARAM(k >= 2 && (k & (k - 1)) == 0, "downsample factor must be a power of two");
        PTK_CHECK_PARAM(scales >= 1 && delta >= 0 && blocks >= 1 && heads >= 1, "bad model config");
        PTK_CHECK_PARAM(width % heads == 0, "width must divide into heads");
        PTK_CHECK_PARAM(m_train >= 1 && m_eval >= 1, "need at least one refinement iteration");
        PTK_CHECK_PARAM(time_embed == "fourier" || time_embed == "learned",
                        "time_embed must be 'fourier' or 'learned'");
        PTK_CHECK_PARAM(window_len >= 4 && window_len % 2 == 0,
                        "window length must be even and at least 4");
        PTK_CHECK_PARAM(time_embed_len >= 2, "time table too short");
    }

    nlohmann::json to_json() const {
        return {{"d", d},
                {"k", k},
                {"scales", scales},
                {"trunk_blocks", trunk_blocks},
                {"delta", delta},
                {"p", p},
                {"corr_hidden", corr_hidden},
                {"blocks", blocks},
                {"width", width},
                {"heads", heads},
                {"n_proxy", n_proxy},
                {"m_train", m_train},
                {"m_eval", m_eval},
                {"fourier_bands", fourier_bands},
                {"time_embed_len", time_embed_len},
                {"time_embed", time_embed},
                {"window_len", window_len},
                {"max_video_len", max_video_len}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.d = j.at("d");
        c.k = j.at("k");
        c.scales = j.at("scales");
        c.trunk_blocks = j.at("trunk_blocks");
        c.delta = j.at("delta");
        c.p = j.at("p");
        c.corr_hidden = j.at("corr_hidden");
        c.blocks = j.at("blocks");
        c.width = j.at("width");
        c.heads = j.at("heads");
        c.n_proxy = j.at("n_proxy");
        c.m_train = j.at("m_train");
        c.m_eval = j.at("m_eval");
        c.fourier_bands = j.at("fourier_bands");
        c.time_embed_len = j.at("time_embed_len");
        c.time_embed = j.at("time_embed");
        c.window_len = j.at("window_len");
        c.max_video_len = j.at("max_video_len");
        c.validate();
        return c;
    }
};

}  // namespace pointtrack
