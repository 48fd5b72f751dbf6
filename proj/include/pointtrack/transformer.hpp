#pragma once

#include "pointtrack/config.hpp"
#include "pointtrack/nn.hpp"

namespace pointtrack {

/// Joint refinement state for N tracks over a T-frame span.
/// P holds pixel coordinates; C and V are unbounded logits (sigmoid is applied
/// only at loss/evaluation time).
template <typename T>
struct TrackState {
    Var<T> P;  // [N,T,2]
    Var<T> C;  // [N,T]
    Var<T> V;  // [N,T]
    int iteration = 0;

    int64_t num_points() const { return P.dim(0); }
    int64_t num_frames() const { return P.dim(1); }
};

/// Fresh state: every frame initialized with the query coordinates, logits zero.
template <typename T>
TrackState<T> init_track_state(const Tensor<T>& query_xy, int64_t T_len) {
    const int64_t N = query_xy.dim(0);
    PTK_CHECK_SHAPE(query_xy.ndim() == 2 && query_xy.dim(1) == 2, "query coords must be [N,2]");
    Tensor<T> p({N, T_len, 2});
    for (int64_t i = 0; i < N; ++i)
        for (int64_t t = 0; t < T_len; ++t) {
            p.at(i, t, 0) = query_xy.at(i, 0);
            p.at(i, t, 1) = query_xy.at(i, 1);
        }
    TrackState<T> s;
    s.P = Var<T>(std::move(p), false);
    s.C = Var<T>(Tensor<T>({N, T_len}), false);
    s.V = Var<T>(Tensor<T>({N, T_len}), false);
    s.iteration = 0;
    return s;
}

/// Token grid: token[i,t] = (eta_{t-1->t}, eta_{t->t+1}, C_t, V_t, Corr_t).
/// Boundary displacements (t=0 backward, t=T-1 forward) encode zero.
/// corr: [N,T,p*S]. Returns [N,T,token_dim].
template <typename T>
Var<T> build_tokens(const TrackState<T>& state, const Var<T>& corr, int fourier_bands) {
    const int64_t N = state.num_points(), Tn = state.num_frames();
    PTK_CHECK_SHAPE(corr.dim(0) == N && corr.dim(1) == Tn, "corr shape mismatch: ",
                    shape_str(corr.shape()));
    Var<T> zero_pair(Tensor<T>({N, 1, 2}), false);
    Var<T> eta_bwd, eta_fwd;
    if (Tn > 1) {
        Var<T> diffs = vsub(slice(state.P, 1, 1, Tn - 1), slice(state.P, 1, 0, Tn - 1));
        eta_bwd = fourier_encode(concat<T>({zero_pair, diffs}, 1), fourier_bands);
        eta_fwd = fourier_encode(concat<T>({diffs, zero_pair}, 1), fourier_bands);
    } else {
        eta_bwd = fourier_encode(zero_pair, fourier_bands);
        eta_fwd = eta_bwd;
    }
    Var<T> c = reshape(state.C, {N, Tn, 1});
    Var<T> v = reshape(state.V, {N, Tn, 1});
    return concat<T>({eta_bwd, eta_fwd, c, v, corr}, -1);
}

/// Standard sinusoidal time embedding table, [T,width].
template <typename T>
Tensor<T> fourier_time_table(int64_t T_len, int64_t width) {
    Tensor<T> out({T_len, width});
    for (int64_t t = 0; t < T_len; ++t)
        for (int64_t i = 0; i < width / 2; ++i) {
            const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(width));
            out.at(t, 2 * i) = static_cast<T>(std::sin(static_cast<double>(t) * freq));
            out.at(t, 2 * i + 1) = static_cast<T>(std::cos(static_cast<double>(t) * freq));
        }
    return out;
}

/// Linear resampling matrix along the time axis; target_len == rows returns
/// the identity (table passes through unchanged).
template <typename T>
Tensor<T> time_interp_matrix(int64_t table_len, int64_t target_len) {
    PTK_CHECK_PARAM(target_len >= 2, "cannot interpolate time embeddings to length ", target_len);
    PTK_CHECK_PARAM(table_len >= 2, "time table too short");
    Tensor<T> m({target_len, table_len});
    for (int64_t r = 0; r < target_len; ++r) {
        const double pos = static_cast<double>(r) * static_cast<double>(table_len - 1) /
                           static_cast<double>(target_len - 1);
        const int64_t i0 = std::min(static_cast<int64_t>(pos), table_len - 2);
        const double w = pos - static_cast<double>(i0);
        m.at(r, i0) = static_cast<T>(1.0 - w);
        m.at(r, i0 + 1) += static_cast<T>(w);
    }
    return m;
}

/// table: [L,width] -> [target_len,width], differentiable in the table.
template <typename T>
Var<T> interpolate_time_embeddings(const Var<T>& table, int64_t target_len) {
    return matmul(Var<T>(time_interp_matrix<T>(table.dim(0), target_len), false), table);
}

/// Iterative refinement transformer: factorized attention over time per track
/// and proxy-token group attention across tracks (linear in N), followed by
/// separate linear heads for the track update and the confidence/visibility
/// update.
template <typename T>
class TrackTransformer {
  public:
    TrackTransformer() = default;

    TrackTransformer(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
        in_proj_ = Linear<T>(cfg.token_dim(), cfg.width, rng);
        for (int b = 0; b < cfg.blocks; ++b) {
            Block blk;
            blk.time_norm = LayerNorm<T>(cfg.width);
            blk.time_attn = Attention<T>(cfg.width, cfg.heads, rng);
            blk.ffn1_norm = LayerNorm<T>(cfg.width);
            blk.ffn1 = Mlp<T>({cfg.width, 4 * cfg.width, cfg.width}, rng);
            blk.group_norm = LayerNorm<T>(cfg.width);
            blk.proxy_seed = Var<T>(
                nn_init::xavier_uniform<T>({cfg.n_proxy, cfg.width}, cfg.width, cfg.width, rng),
                true);
            blk.pool_attn = Attention<T>(cfg.width, cfg.heads, rng);
            blk.broadcast_attn = Attention<T>(cfg.width, cfg.heads, rng);
            blk.ffn2_norm = LayerNorm<T>(cfg.width);
            blk.ffn2 = Mlp<T>({cfg.width, 4 * cfg.width, cfg.width}, rng);
            blocks_.push_back(std::move(blk));
        }
        out_norm_ = LayerNorm<T>(cfg.width);
        head_track_ = Linear<T>(cfg.width, 2, rng, /*zero_init=*/true);
        head_confvis_ = Linear<T>(cfg.width, 2, rng, /*zero_init=*/true);
    }

    struct Deltas {
        Var<T> dP;  // [N,T,2]
        Var<T> dC;  // [N,T]
        Var<T> dV;  // [N,T]
    };

    /// tokens: [N,T,token_dim]; time_embed: [T,width].
    Deltas forward(const Var<T>& tokens, const Var<T>& time_embed) const {
        const int64_t N = tokens.dim(0), Tn = tokens.dim(1);
        PTK_CHECK_SHAPE(time_embed.dim(0) == Tn && time_embed.dim(1) == cfg_.width,
                        "time embedding must be [T,width]");
        Var<T> x = in_proj_.forward(tokens);  // [N,T,W]
        x = vadd(x, reshape(time_embed, {1, Tn, cfg_.width}));
        for (const auto& blk : blocks_) {
            // attention over time, independently per track
            Var<T> h = blk.time_norm.forward(x);
            x = vadd(x, blk.time_attn.forward(h, h));
            x = vadd(x, blk.ffn1.forward(blk.ffn1_norm.forward(x)));

            // cross-track attention through the proxy pool, per frame:
            // proxies gather from all tracks (n_proxy x N), tracks read back
            // from proxies (N x n_proxy); nothing is ever N x N
            Var<T> z = permute(blk.group_norm.forward(x), {1, 0, 2});  // [T,N,W]
            Var<T> proxies = tile0(blk.proxy_seed, Tn);                // [T,P,W]
            proxies = vadd(proxies, blk.pool_attn.forward(proxies, z));
            Var<T> upd = blk.broadcast_attn.forward(z, proxies);       // [T,N,W]
            x = vadd(x, permute(upd, {1, 0, 2}));
            x = vadd(x, blk.ffn2.forward(blk.ffn2_norm.forward(x)));
        }
        Var<T> h = out_norm_.forward(x);
        Deltas d;
        d.dP = head_track_.forward(h);
        Var<T> cv = head_confvis_.forward(h);  // [N,T,2]
        d.dC = reshape(slice(cv, 2, 0, 1), {N, Tn});
        d.dV = reshape(slice(cv, 2, 1, 1), {N, Tn});
        return d;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        in_proj_.collect(prefix + ".in_proj", out);
        for (size_t b = 0; b < blocks_.size(); ++b) {
            const std::string bp = prefix + ".block" + std::to_string(b);
            auto& blk = blocks_[b];
            blk.time_norm.collect(bp + ".time_norm", out);
            blk.time_attn.collect(bp + ".time_attn", out);
            blk.ffn1_norm.collect(bp + ".ffn1_norm", out);
            blk.ffn1.collect(bp + ".ffn1", out);
            blk.group_norm.collect(bp + ".group_norm", out);
            out.push_back({bp + ".proxy_seed", blk.proxy_seed});
            blk.pool_attn.collect(bp + ".pool_attn", out);
            blk.broadcast_attn.collect(bp + ".broadcast_attn", out);
            blk.ffn2_norm.collect(bp + ".ffn2_norm", out);
            blk.ffn2.collect(bp + ".ffn2", out);
        }
        out_norm_.collect(prefix + ".out_norm", out);
        head_track_.collect(prefix + ".head_track", out);
        head_confvis_.collect(prefix + ".head_confvis", out);
    }

    /// Conf/visibility head parameters (frozen during pseudo-label training).
    void collect_confvis_head(const std::string& prefix, ParamList<T>& out) {
        head_confvis_.collect(prefix + ".head_confvis", out);
    }

  private:
    struct Block {
        LayerNorm<T> time_norm;
        Attention<T> time_attn;
        LayerNorm<T> ffn1_norm;
        Mlp<T> ffn1;
        LayerNorm<T> group_norm;
        Var<T> proxy_seed;  // [n_proxy, width]
        Attention<T> pool_attn;
        Attention<T> broadcast_attn;
        LayerNorm<T> ffn2_norm;
        Mlp<T> ffn2;
    };

    ModelConfig cfg_;
    Linear<T> in_proj_;
    std::vector<Block> blocks_;
    LayerNorm<T> out_norm_;
    Linear<T> head_track_;
    Linear<T> head_confvis_;
};

}  // namespace pointtrack
