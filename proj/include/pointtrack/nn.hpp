#pragma once

#include <string>
#include <vector>

#include "pointtrack/ops.hpp"
#include "pointtrack/ops_conv.hpp"
#include "pointtrack/rng.hpp"

namespace pointtrack {

template <typename T>
struct NamedParam {
    std::string name;
    Var<T> var;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

namespace nn_init {

template <typename T>
Tensor<T> xavier_uniform(std::vector<int64_t> shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
Tensor<T> kaiming_normal(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, stddev));
    return t;
}

}  // namespace nn_init

template <typename T>
struct Linear {
    Var<T> w;  // [in, out]
    Var<T> b;  // [out]

    Linear() = default;
    Linear(int64_t in, int64_t out, Rng& rng, bool zero_init = false) {
        Tensor<T> wt = zero_init ? Tensor<T>({in, out})
                                 : nn_init::xavier_uniform<T>({in, out}, in, out, rng);
        w = Var<T>(std::move(wt), true);
        b = Var<T>(Tensor<T>({out}), true);
    }

    int64_t in_dim() const { return w.dim(0); }
    int64_t out_dim() const { return w.dim(1); }

    /// x: [..., in] -> [..., out]
    Var<T> forward(const Var<T>& x) const {
        const int64_t in = w.dim(0), out = w.dim(1);
        std::vector<int64_t> oshape = x.val().shape();
        PTK_CHECK_SHAPE(oshape.back() == in, "linear expects trailing dim ", in, ", got ",
                        oshape.back());
        const int64_t rows = x.numel() / in;
        Var<T> y = matmul(reshape(x, {rows, in}), w);
        y = vadd(y, b);
        oshape.back() = out;
        return reshape(y, oshape);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".w", w});
        out.push_back({prefix + ".b", b});
    }
};

/// Stack of linear layers with GELU between them.
template <typename T>
struct Mlp {
    std::vector<Linear<T>> layers;

    Mlp() = default;
    Mlp(const std::vector<int64_t>& dims, Rng& rng) {
        for (size_t i = 0; i + 1 < dims.size(); ++i)
            layers.emplace_back(dims[i], dims[i + 1], rng);
    }

    Var<T> forward(Var<T> x) const {
        for (size_t i = 0; i < layers.size(); ++i) {
            x = layers[i].forward(x);
            if (i + 1 < layers.size()) x = gelu(x);
        }
        return x;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (size_t i = 0; i < layers.size(); ++i)
            layers[i].collect(prefix + ".l" + std::to_string(i), out);
    }
};

template <typename T>
struct LayerNorm {
    Var<T> gamma, beta;

    LayerNorm() = default;
    explicit LayerNorm(int64_t dim) {
        gamma = Var<T>(Tensor<T>::full({dim}, T(1)), true);
        beta = Var<T>(Tensor<T>({dim}), true);
    }

    Var<T> forward(const Var<T>& x) const { return layer_norm(x, gamma, beta); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

template <typename T>
struct Conv2dLayer {
    Var<T> w;  // [KH,KW,C,OC]
    Var<T> b;  // [OC]
    int stride = 1;
    int pad = 0;

    Conv2dLayer() = default;
    Conv2dLayer(int kh, int kw, int64_t in_ch, int64_t out_ch, int stride_, int pad_, Rng& rng)
        : stride(stride_), pad(pad_) {
        w = Var<T>(nn_init::kaiming_normal<T>({kh, kw, in_ch, out_ch}, kh * kw * in_ch, rng), true);
        b = Var<T>(Tensor<T>({out_ch}), true);
    }

    Var<T> forward(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".w", w});
        out.push_back({prefix + ".b", b});
    }
};

template <typename T>
struct InstanceNorm2d {
    Var<T> gamma, beta;

    InstanceNorm2d() = default;
    explicit InstanceNorm2d(int64_t ch) {
        gamma = Var<T>(Tensor<T>::full({ch}, T(1)), true);
        beta = Var<T>(Tensor<T>({ch}), true);
    }

    Var<T> forward(const Var<T>& x) const { return instance_norm2d(x, gamma, beta); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

/// When set, every attention call records its (rows, cols) score-matrix shape.
inline std::vector<std::pair<int64_t, int64_t>>*& attention_shape_log() {
    thread_local std::vector<std::pair<int64_t, int64_t>>* log = nullptr;
    return log;
}

/// Multi-head attention. Queries and keys/values may come from different token sets.
template <typename T>
struct Attention {
    Linear<T> q_proj, k_proj, v_proj, o_proj;
    int heads = 1;

    Attention() = default;
    Attention(int64_t width, int heads_, Rng& rng) : heads(heads_) {
        PTK_CHECK_PARAM(width % heads_ == 0, "attention width ", width, " not divisible by heads ",
                        heads_);
        q_proj = Linear<T>(width, width, rng);
        k_proj = Linear<T>(width, width, rng);
        v_proj = Linear<T>(width, width, rng);
        o_proj = Linear<T>(width, width, rng);
    }

    /// q_in: [B,Lq,W], kv_in: [B,Lk,W] -> [B,Lq,W]
    Var<T> forward(const Var<T>& q_in, const Var<T>& kv_in) const {
        const int64_t B = q_in.dim(0), Lq = q_in.dim(1), W = q_in.dim(2);
        const int64_t Lk = kv_in.dim(1);
        const int64_t H = heads, dh = W / H;
        if (attention_shape_log()) attention_shape_log()->emplace_back(Lq, Lk);
        auto split = [&](const Var<T>& x, int64_t L) {
            // [B,L,W] -> [B*H,L,dh]
            return reshape(permute(reshape(x, {B, L, H, dh}), {0, 2, 1, 3}), {B * H, L, dh});
        };
        Var<T> q = split(q_proj.forward(q_in), Lq);
        Var<T> k = split(k_proj.forward(kv_in), Lk);
        Var<T> v = split(v_proj.forward(kv_in), Lk);
        Var<T> scores = mul_scalar(bmm(q, permute(k, {0, 2, 1})), T(1) / std::sqrt(static_cast<T>(dh)));
        Var<T> attn = softmax_lastdim(scores);
        Var<T> ctx = bmm(attn, v);  // [B*H,Lq,dh]
        Var<T> merged = reshape(permute(reshape(ctx, {B, H, Lq, dh}), {0, 2, 1, 3}), {B, Lq, W});
        return o_proj.forward(merged);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        q_proj.collect(prefix + ".q", out);
        k_proj.collect(prefix + ".k", out);
        v_proj.collect(prefix + ".v", out);
        o_proj.collect(prefix + ".o", out);
    }
};

}  // namespace pointtrack
