#pragma once

#include "pointtrack/ops.hpp"

namespace pointtrack {

// Feature maps use NHWC layout so a pixel's channel vector is contiguous.

namespace conv_detail {

template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad, Tensor<T>& col, int64_t oh,
            int64_t ow) {
    const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const int64_t patch = kh * kw * C;
    const T* xp = x.data();
    T* cp = col.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oy = 0; oy < oh; ++oy) {
            for (int64_t ox = 0; ox < ow; ++ox) {
                T* dst = cp + ((b * oh + oy) * ow + ox) * patch;
                for (int64_t ky = 0; ky < kh; ++ky) {
                    const int64_t iy = oy * stride - pad + ky;
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        const int64_t ix = ox * stride - pad + kx;
                        T* d = dst + (ky * kw + kx) * C;
                        if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
                            std::fill(d, d + C, T(0));
                        } else {
                            const T* s = xp + ((b * H + iy) * W + ix) * C;
                            std::copy(s, s + C, d);
                        }
                    }
                }
            }
        }
}

template <typename T>
void col2im(const Tensor<T>& dcol, int kh, int kw, int stride, int pad, Tensor<T>& dx, int64_t oh,
            int64_t ow) {
    const int64_t B = dx.dim(0), H = dx.dim(1), W = dx.dim(2), C = dx.dim(3);
    const int64_t patch = kh * kw * C;
    const T* cp = dcol.data();
    T* xp = dx.data();
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                const T* src = cp + ((b * oh + oy) * ow + ox) * patch;
                for (int64_t ky = 0; ky < kh; ++ky) {
                    const int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        const int64_t ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        const T* s = src + (ky * kw + kx) * C;
                        T* d = xp + ((b * H + iy) * W + ix) * C;
                        for (int64_t c = 0; c < C; ++c) d[c] += s[c];
                    }
                }
            }
}

}  // namespace conv_detail

/// x: [B,H,W,C], w: [KH,KW,C,OC], b: [OC]. Same-padding requires explicit pad.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad) {
    PTK_CHECK_SHAPE(x.val().ndim() == 4 && w.val().ndim() == 4, "conv2d expects 4-d x and w");
    const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const int kh = static_cast<int>(w.dim(0)), kw = static_cast<int>(w.dim(1));
    PTK_CHECK_SHAPE(w.dim(2) == C, "conv2d channel mismatch: x has ", C, ", w expects ", w.dim(2));
    const int64_t OC = w.dim(3);
    const int64_t oh = (H + 2 * pad - kh) / stride + 1;
    const int64_t ow = (W + 2 * pad - kw) / stride + 1;
    PTK_CHECK_SHAPE(oh >= 1 && ow >= 1, "conv2d output would be empty");
    const int64_t rows = B * oh * ow;
    const int64_t patch = static_cast<int64_t>(kh) * kw * C;

    Tensor<T> col({rows, patch});
    conv_detail::im2col(x.val(), kh, kw, stride, pad, col, oh, ow);
    Tensor<T> out({B, oh, ow, OC});
    gemm(col.data(), w.val().data(), out.data(), rows, patch, OC);
    {
        T* op = out.data();
        const T* bp = bias.val().data();
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < OC; ++c) op[r * OC + c] += bp[c];
    }

    auto xn = x.node();
    auto wn = w.node();
    auto bn = bias.node();
    Tensor<T> wv = w.val();
    auto xshape = x.val().shape();
    return make_op<T>(std::move(out), {x, w, bias},
                      [=](const Tensor<T>& g) {
        const int64_t OCl = wv.dim(3);
        if (bn->requires_grad) {
            Tensor<T> db({OCl});
            const T* gp = g.data();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < OCl; ++c) db[c] += gp[r * OCl + c];
            bn->accum_grad(db);
        }
        if (wn->requires_grad) {
            Tensor<T> dw(wv.shape());
            gemm(col.data(), g.data(), dw.data(), patch, rows, OCl, true, false);
            wn->accum_grad(dw);
        }
        if (xn->requires_grad) {
            Tensor<T> dcol({rows, patch});
            gemm(g.data(), wv.data(), dcol.data(), rows, OCl, patch, false, true);
            Tensor<T> dx(xshape);
            conv_detail::col2im(dcol, kh, kw, stride, pad, dx, oh, ow);
            xn->accum_grad(dx);
        }
    });
}

/// Non-overlapping average pooling, NHWC.
template <typename T>
Var<T> avg_pool2d(const Var<T>& x, int k) {
    const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    PTK_CHECK_SHAPE(H % k == 0 && W % k == 0, "avg_pool2d needs divisible spatial dims");
    const int64_t oh = H / k, ow = W / k;
    Tensor<T> out({B, oh, ow, C});
    const T* xp = x.val().data();
    T* op = out.data();
    const T inv = T(1) / static_cast<T>(k * k);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                T* dst = op + ((b * oh + oy) * ow + ox) * C;
                for (int64_t ky = 0; ky < k; ++ky)
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const T* s = xp + ((b * H + oy * k + ky) * W + ox * k + kx) * C;
                        for (int64_t c = 0; c < C; ++c) dst[c] += s[c];
                    }
                for (int64_t c = 0; c < C; ++c) dst[c] *= inv;
            }
    auto xn = x.node();
    auto xshape = x.val().shape();
    return make_op<T>(std::move(out), {x}, [xn, xshape, k, B, oh, ow, C, H, W](const Tensor<T>& g) {
        Tensor<T> dx(xshape);
        const T inv = T(1) / static_cast<T>(k * k);
        const T* gp = g.data();
        T* dp = dx.data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    const T* gr = gp + ((b * oh + oy) * ow + ox) * C;
                    for (int64_t ky = 0; ky < k; ++ky)
                        for (int64_t kx = 0; kx < k; ++kx) {
                            T* d = dp + ((b * H + oy * k + ky) * W + ox * k + kx) * C;
                            for (int64_t c = 0; c < C; ++c) d[c] += gr[c] * inv;
                        }
                }
        xn->accum_grad(dx);
    });
}

/// Instance norm over spatial dims per (batch, channel), NHWC, with affine params [C].
template <typename T>
Var<T> instance_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
    const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    PTK_CHECK_SHAPE(gamma.numel() == C && beta.numel() == C, "instance_norm affine size mismatch");
    const int64_t hw = H * W;
    Tensor<T> out(x.val().shape());
    Tensor<T> xhat(x.val().shape());
    Tensor<T> inv_std({B, C});
    const T* xp = x.val().data();
    const T* gp = gamma.val().data();
    const T* bp = beta.val().data();
    T* op = out.data();
    T* hp = xhat.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const T* xb = xp + b * hw * C + c;
            T mean = T(0);
            for (int64_t i = 0; i < hw; ++i) mean += xb[i * C];
            mean /= static_cast<T>(hw);
            T var = T(0);
            for (int64_t i = 0; i < hw; ++i) {
                const T d = xb[i * C] - mean;
                var += d * d;
            }
            var /= static_cast<T>(hw);
            const T istd = T(1) / std::sqrt(var + eps);
            inv_std.at(b, c) = istd;
            T* ob = op + b * hw * C + c;
            T* hb = hp + b * hw * C + c;
            for (int64_t i = 0; i < hw; ++i) {
                const T h = (xb[i * C] - mean) * istd;
                hb[i * C] = h;
                ob[i * C] = gp[c] * h + bp[c];
            }
        }
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    Tensor<T> gv = gamma.val();
    return make_op<T>(std::move(out), {x, gamma, beta},
                      [xn, gn, bn, gv, xhat, inv_std, B, C, hw](const Tensor<T>& g) {
        const T* gp = g.data();
        const T* hp = xhat.data();
        if (gn->requires_grad || bn->requires_grad) {
            Tensor<T> dgamma({C}), dbeta({C});
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < hw; ++i)
                    for (int64_t c = 0; c < C; ++c) {
                        const int64_t off = (b * hw + i) * C + c;
                        dgamma[c] += gp[off] * hp[off];
                        dbeta[c] += gp[off];
                    }
            if (gn->requires_grad) gn->accum_grad(dgamma);
            if (bn->requires_grad) bn->accum_grad(dbeta);
        }
        if (xn->requires_grad) {
            Tensor<T> dx(xn->value.shape());
            T* dp = dx.data();
            const T* gamp = gv.data();
#pragma omp parallel for collapse(2) schedule(static)
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const T* gb = gp + b * hw * C + c;
                    const T* hb = hp + b * hw * C + c;
                    T m1 = T(0), m2 = T(0);
                    for (int64_t i = 0; i < hw; ++i) {
                        const T gg = gb[i * C] * gamp[c];
                        m1 += gg;
                        m2 += gg * hb[i * C];
                    }
                    m1 /= static_cast<T>(hw);
                    m2 /= static_cast<T>(hw);
                    const T istd = inv_std.at(b, c);
                    T* db = dp + b * hw * C + c;
                    for (int64_t i = 0; i < hw; ++i) {
                        const T gg = gb[i * C] * gamp[c];
                        db[i * C] = (gg - m1 - hb[i * C] * m2) * istd;
                    }
                }
            xn->accum_grad(dx);
        }
    });
}

}  // namespace pointtrack
