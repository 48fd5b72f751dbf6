#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "pointtrack/autograd.hpp"

namespace pointtrack {

// ---------------------------------------------------------------------------
// Eigen-backed GEMM on row-major buffers
// ---------------------------------------------------------------------------

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// C (m×n) = alpha * op(A) * op(B) + beta * C
template <typename T>
void gemm(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool trans_a = false,
          bool trans_b = false, T beta = T(0)) {
    Eigen::Map<EMat<T>> C(c, m, n);
    if (beta == T(0)) C.setZero();
    if (!trans_a && !trans_b) {
        Eigen::Map<const EMat<T>> A(a, m, k), B(b, k, n);
        C.noalias() += A * B;
    } else if (trans_a && !trans_b) {
        Eigen::Map<const EMat<T>> A(a, k, m), B(b, k, n);
        C.noalias() += A.transpose() * B;
    } else if (!trans_a && trans_b) {
        Eigen::Map<const EMat<T>> A(a, m, k), B(b, n, k);
        C.noalias() += A * B.transpose();
    } else {
        Eigen::Map<const EMat<T>> A(a, k, m), B(b, n, k);
        C.noalias() += A.transpose() * B.transpose();
    }
}

// ---------------------------------------------------------------------------
// broadcasting helpers
// ---------------------------------------------------------------------------

inline std::vector<int64_t> broadcast_shape(const std::vector<int64_t>& a,
                                            const std::vector<int64_t>& b) {
    const size_t n = std::max(a.size(), b.size());
    std::vector<int64_t> out(n);
    for (size_t i = 0; i < n; ++i) {
        const int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        const int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        PTK_CHECK_SHAPE(da == db || da == 1 || db == 1, "cannot broadcast ", shape_str(a), " with ",
                        shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

/// Sums `g` down to `target` shape (inverse of broadcasting).
template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, const std::vector<int64_t>& target) {
    if (g.shape() == target) return g;
    Tensor<T> out(target);
    const int gd = g.ndim();
    const int td = static_cast<int>(target.size());
    const int lead = gd - td;
    std::vector<int64_t> tstride(static_cast<size_t>(gd), 0);
    {
        int64_t s = 1;
        for (int i = td - 1; i >= 0; --i) {
            tstride[static_cast<size_t>(lead + i)] = (target[static_cast<size_t>(i)] == 1) ? 0 : s;
            s *= target[static_cast<size_t>(i)];
        }
    }
    std::vector<int64_t> idx(static_cast<size_t>(gd), 0);
    const T* gp = g.data();
    T* op = out.data();
    const int64_t n = g.numel();
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t toff = 0;
        for (int i = 0; i < gd; ++i) toff += idx[static_cast<size_t>(i)] * tstride[static_cast<size_t>(i)];
        op[toff] += gp[flat];
        for (int i = gd - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < g.dim(i)) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return out;
}

namespace ops_detail {

// strides of `shape` viewed inside the broadcast output space
inline std::vector<int64_t> broadcast_strides(const std::vector<int64_t>& shape,
                                              const std::vector<int64_t>& out_shape) {
    const size_t n = out_shape.size();
    std::vector<int64_t> st(n, 0);
    int64_t s = 1;
    for (size_t i = 0; i < shape.size(); ++i) {
        const size_t ri = shape.size() - 1 - i;
        const size_t oi = n - 1 - i;
        st[oi] = (shape[ri] == 1) ? 0 : s;
        s *= shape[ri];
    }
    return st;
}

template <typename T, typename F>
Tensor<T> broadcast_eval(const Tensor<T>& a, const Tensor<T>& b, F f) {
    const auto out_shape = broadcast_shape(a.shape(), b.shape());
    Tensor<T> out(out_shape);
    const int64_t n = out.numel();
    const T* ap = a.data();
    const T* bp = b.data();
    T* op = out.data();
    if (a.shape() == b.shape()) {
        for (int64_t i = 0; i < n; ++i) op[i] = f(ap[i], bp[i]);
        return out;
    }
    if (b.numel() > 0 && a.shape() == out_shape && n % b.numel() == 0) {
        // suffix broadcast (bias-style): check b's shape matches trailing dims
        bool suffix = true;
        for (size_t i = 0; i < b.shape().size(); ++i)
            if (b.shape()[b.shape().size() - 1 - i] != out_shape[out_shape.size() - 1 - i]) {
                suffix = false;
                break;
            }
        if (suffix) {
            const int64_t m = b.numel();
            for (int64_t i = 0; i < n; ++i) op[i] = f(ap[i], bp[i % m]);
            return out;
        }
    }
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    std::vector<int64_t> idx(out_shape.size(), 0);
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t oa = 0, ob = 0;
        for (size_t i = 0; i < out_shape.size(); ++i) {
            oa += idx[i] * sa[i];
            ob += idx[i] * sb[i];
        }
        op[flat] = f(ap[oa], bp[ob]);
        for (int i = static_cast<int>(out_shape.size()) - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return out;
}

// g scaled elementwise by `scale` evaluated over the broadcast space, reduced to `target`
template <typename T, typename F>
Tensor<T> broadcast_grad(const Tensor<T>& g, const Tensor<T>& a, const Tensor<T>& b,
                         const std::vector<int64_t>& target, F dscale) {
    Tensor<T> scaled(g.shape());
    const auto sa = broadcast_strides(a.shape(), g.shape());
    const auto sb = broadcast_strides(b.shape(), g.shape());
    const T* gp = g.data();
    const T* ap = a.data();
    const T* bp = b.data();
    T* sp = scaled.data();
    std::vector<int64_t> idx(g.shape().size(), 0);
    const int64_t n = g.numel();
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t oa = 0, ob = 0;
        for (size_t i = 0; i < g.shape().size(); ++i) {
            oa += idx[i] * sa[i];
            ob += idx[i] * sb[i];
        }
        sp[flat] = gp[flat] * dscale(ap[oa], bp[ob]);
        for (int i = static_cast<int>(g.shape().size()) - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < g.dim(i)) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return reduce_to(scaled, target);
}

}  // namespace ops_detail

// ---------------------------------------------------------------------------
// elementwise binary ops (NumPy-style broadcasting)
// ---------------------------------------------------------------------------

template <typename T>
Var<T> vadd(const Var<T>& a, const Var<T>& b) {
    Tensor<T> out = ops_detail::broadcast_eval(a.val(), b.val(), [](T x, T y) { return x + y; });
    auto an = a.node();
    auto bn = b.node();
    return make_op<T>(std::move(out), {a, b}, [an, bn](const Tensor<T>& g) {
        if (an->requires_grad) an->accum_grad(reduce_to(g, an->value.shape()));
        if (bn->requires_grad) bn->accum_grad(reduce_to(g, bn->value.shape()));
    });
}

template <typename T>
Var<T> vsub(const Var<T>& a, const Var<T>& b) {
    Tensor<T> out = ops_detail::broadcast_eval(a.val(), b.val(), [](T x, T y) { return x - y; });
    auto an = a.node();
    auto bn = b.node();
    return make_op<T>(std::move(out), {a, b}, [an, bn](const Tensor<T>& g) {
        if (an->requires_grad) an->accum_grad(reduce_to(g, an->value.shape()));
        if (bn->requires_grad) {
            Tensor<T> neg(g.shape());
            for (int64_t i = 0; i < g.numel(); ++i) neg[i] = -g[i];
            bn->accum_grad(reduce_to(neg, bn->value.shape()));
        }
    });
}

template <typename T>
Var<T> vmul(const Var<T>& a, const Var<T>& b) {
    Tensor<T> out = ops_detail::broadcast_eval(a.val(), b.val(), [](T x, T y) { return x * y; });
    auto an = a.node();
    auto bn = b.node();
    Tensor<T> av = a.val(), bv = b.val();
    return make_op<T>(std::move(out), {a, b}, [an, bn, av, bv](const Tensor<T>& g) {
        if (an->requires_grad)
            an->accum_grad(ops_detail::broadcast_grad(g, av, bv, av.shape(), [](T, T y) { return y; }));
        if (bn->requires_grad)
            bn->accum_grad(ops_detail::broadcast_grad(g, av, bv, bv.shape(), [](T x, T) { return x; }));
    });
}

template <typename T>
Var<T> vdiv(const Var<T>& a, const Var<T>& b) {
    Tensor<T> out = ops_detail::broadcast_eval(a.val(), b.val(), [](T x, T y) { return x / y; });
    auto an = a.node();
    auto bn = b.node();
    Tensor<T> av = a.val(), bv = b.val();
    return make_op<T>(std::move(out), {a, b}, [an, bn, av, bv](const Tensor<T>& g) {
        if (an->requires_grad)
            an->accum_grad(
                ops_detail::broadcast_grad(g, av, bv, av.shape(), [](T, T y) { return T(1) / y; }));
        if (bn->requires_grad)
            bn->accum_grad(ops_detail::broadcast_grad(g, av, bv, bv.shape(),
                                                      [](T x, T y) { return -x / (y * y); }));
    });
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return vadd(a, b); }
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return vsub(a, b); }
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return vmul(a, b); }
template <typename T>
Var<T> operator/(const Var<T>& a, const Var<T>& b) { return vdiv(a, b); }

// ---------------------------------------------------------------------------
// scalar and unary ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> mul_scalar(const Var<T>& x, T s) {
    Tensor<T> out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = x.val()[i] * s;
    auto xn = x.node();
    return make_op<T>(std::move(out), {x}, [xn, s](const Tensor<T>& g) {
        Tensor<T> gx(g.shape());
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * s;
        xn->accum_grad(gx);
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T s) {
    Tensor<T> out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = x.val()[i] + s;
    auto xn = x.node();
    return make_op<T>(std::move(out), {x}, [xn](const Tensor<T>& g) { xn->accum_grad(g); });
}

namespace ops_detail {
/// dydx(x, y) is the local derivative.
template <typename T, typename F, typename DF>
Var<T> unary_op(const Var<T>& x, F f, DF dydx) {
    Tensor<T> out(x.shape());
    const T* xp = x.val().data();
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = f(xp[i]);
    Tensor<T> xv = x.val(), yv = out;
    auto xn = x.node();
    return make_op<T>(std::move(out), {x}, [xn, xv, yv, dydx](const Tensor<T>& g) {
        Tensor<T> gx(g.shape());
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * dydx(xv[i], yv[i]);
        xn->accum_grad(gx);
    });
}
}  // namespace ops_detail

template <typename T>
Var<T> vneg(const Var<T>& x) {
    return mul_scalar(x, T(-1));
}
template <typename T>
Var<T> operator-(const Var<T>& x) { return vneg(x); }

template <typename T>
Var<T> vexp(const Var<T>& x) {
    return ops_detail::unary_op(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> vlog(const Var<T>& x) {
    return ops_detail::unary_op(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Var<T> vsqrt(const Var<T>& x) {
    return ops_detail::unary_op(x, [](T v) { return std::sqrt(v); },
                                [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Var<T> vsin(const Var<T>& x) {
    return ops_detail::unary_op(x, [](T v) { return std::sin(v); },
                                [](T v, T) { return std::cos(v); });
}

template <typename T>
Var<T> vcos(const Var<T>& x) {
    return ops_detail::unary_op(x, [](T v) { return std::cos(v); },
                                [](T v, T) { return -std::sin(v); });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    return ops_detail::unary_op(x, [](T v) { return v > T(0) ? v : T(0); },
                                [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    return ops_detail::unary_op(
        x,
        [](T v) { return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> vtanh(const Var<T>& x) {
    return ops_detail::unary_op(x, [](T v) { return std::tanh(v); },
                                [](T, T y) { return T(1) - y * y; });
}

/// Exact (erf-based) GELU.
template <typename T>
Var<T> gelu(const Var<T>& x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return ops_detail::unary_op(
        x,
        [](T v) { return T(0.5) * v * (T(1) + T(std::erf(static_cast<double>(v) * inv_sqrt2))); },
        [](T v, T) {
            const double vd = static_cast<double>(v);
            return T(0.5 * (1.0 + std::erf(vd * inv_sqrt2)) + vd * inv_sqrt2pi * std::exp(-0.5 * vd * vd));
        });
}

// ---------------------------------------------------------------------------
// matmul / bmm
// ---------------------------------------------------------------------------

/// a: [m,k], b: [k,n] -> [m,n]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    PTK_CHECK_SHAPE(a.val().ndim() == 2 && b.val().ndim() == 2 && a.dim(1) == b.dim(0),
                    "matmul shapes ", shape_str(a.shape()), " x ", shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    gemm(a.val().data(), b.val().data(), out.data(), m, k, n);
    Tensor<T> av = a.val(), bv = b.val();
    auto an = a.node();
    auto bn = b.node();
    return make_op<T>(std::move(out), {a, b}, [an, bn, av, bv, m, k, n](const Tensor<T>& g) {
        if (an->requires_grad) {
            Tensor<T> da({m, k});
            gemm(g.data(), bv.data(), da.data(), m, n, k, false, true);
            an->accum_grad(da);
        }
        if (bn->requires_grad) {
            Tensor<T> db({k, n});
            gemm(av.data(), g.data(), db.data(), k, m, n, true, false);
            bn->accum_grad(db);
        }
    });
}

/// a: [B,m,k], b: [B,k,n] -> [B,m,n]
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
    PTK_CHECK_SHAPE(a.val().ndim() == 3 && b.val().ndim() == 3 && a.dim(0) == b.dim(0) &&
                        a.dim(2) == b.dim(1),
                    "bmm shapes ", shape_str(a.shape()), " x ", shape_str(b.shape()));
    const int64_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    Tensor<T> out({B, m, n});
    for (int64_t i = 0; i < B; ++i)
        gemm(a.val().data() + i * m * k, b.val().data() + i * k * n, out.data() + i * m * n, m, k, n);
    Tensor<T> av = a.val(), bv = b.val();
    auto an = a.node();
    auto bn = b.node();
    return make_op<T>(std::move(out), {a, b}, [an, bn, av, bv, B, m, k, n](const Tensor<T>& g) {
        if (an->requires_grad) {
            Tensor<T> da({B, m, k});
            for (int64_t i = 0; i < B; ++i)
                gemm(g.data() + i * m * n, bv.data() + i * k * n, da.data() + i * m * k, m, n, k,
                     false, true);
            an->accum_grad(da);
        }
        if (bn->requires_grad) {
            Tensor<T> db({B, k, n});
            for (int64_t i = 0; i < B; ++i)
                gemm(av.data() + i * m * k, g.data() + i * m * n, db.data() + i * k * n, k, m, n,
                     true, false);
            bn->accum_grad(db);
        }
    });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& x, std::vector<int64_t> shape) {
    Tensor<T> out = x.val().clone().reshape(std::move(shape));
    auto xn = x.node();
    auto xshape = x.val().shape();
    return make_op<T>(std::move(out), {x}, [xn, xshape](const Tensor<T>& g) {
        xn->accum_grad(g.reshape(xshape));
    });
}

namespace ops_detail {
template <typename T>
Tensor<T> permute_tensor(const Tensor<T>& x, const std::vector<int>& perm) {
    const int nd = x.ndim();
    std::vector<int64_t> oshape(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) oshape[static_cast<size_t>(i)] = x.dim(perm[static_cast<size_t>(i)]);
    Tensor<T> out(oshape);
    std::vector<int64_t> xstride(static_cast<size_t>(nd), 1);
    for (int i = nd - 2; i >= 0; --i)
        xstride[static_cast<size_t>(i)] = xstride[static_cast<size_t>(i + 1)] * x.dim(i + 1);
    std::vector<int64_t> ostride_in_x(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) ostride_in_x[static_cast<size_t>(i)] = xstride[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
    const T* xp = x.data();
    T* op = out.data();
    const int64_t n = x.numel();
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t xoff = 0;
        for (int i = 0; i < nd; ++i) xoff += idx[static_cast<size_t>(i)] * ostride_in_x[static_cast<size_t>(i)];
        op[flat] = xp[xoff];
        for (int i = nd - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < oshape[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return out;
}
}  // namespace ops_detail

template <typename T>
Var<T> permute(const Var<T>& x, std::vector<int> perm) {
    PTK_CHECK_SHAPE(static_cast<int>(perm.size()) == x.val().ndim(), "permute arity mismatch");
    Tensor<T> out = ops_detail::permute_tensor(x.val(), perm);
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
    auto xn = x.node();
    return make_op<T>(std::move(out), {x}, [xn, inv](const Tensor<T>& g) {
        xn->accum_grad(ops_detail::permute_tensor(g, inv));
    });
}

/// Contiguous slice along `axis`.
template <typename T>
Var<T> slice(const Var<T>& x, int axis, int64_t start, int64_t len) {
    const int nd = x.val().ndim();
    if (axis < 0) axis += nd;
    PTK_CHECK_SHAPE(axis >= 0 && axis < nd && start >= 0 && start + len <= x.dim(axis),
                    "slice out of range");
    std::vector<int64_t> oshape = x.val().shape();
    oshape[static_cast<size_t>(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < nd; ++i) inner *= x.dim(i);
    const int64_t d = x.dim(axis);
    Tensor<T> out(oshape);
    const T* xp = x.val().data();
    T* op = out.data();
    for (int64_t o = 0; o < outer; ++o)
        std::copy(xp + (o * d + start) * inner, xp + (o * d + start + len) * inner,
                  op + o * len * inner);
    auto xn = x.node();
    auto xshape = x.val().shape();
    return make_op<T>(std::move(out), {x}, [xn, xshape, axis, start, len, outer, inner, d](const Tensor<T>& g) {
        Tensor<T> gx(xshape);
        T* gp = gx.data();
        const T* sp = g.data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(sp + o * len * inner, sp + (o + 1) * len * inner,
                      gp + (o * d + start) * inner);
        xn->accum_grad(gx);
    });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
    PTK_CHECK_SHAPE(!parts.empty(), "concat of nothing");
    const int nd = parts[0].val().ndim();
    if (axis < 0) axis += nd;
    std::vector<int64_t> oshape = parts[0].val().shape();
    int64_t total = 0;
    for (const auto& p : parts) {
        PTK_CHECK_SHAPE(p.val().ndim() == nd, "concat rank mismatch");
        for (int i = 0; i < nd; ++i)
            if (i != axis)
                PTK_CHECK_SHAPE(p.dim(i) == oshape[static_cast<size_t>(i)], "concat dim mismatch");
        total += p.dim(axis);
    }
    oshape[static_cast<size_t>(axis)] = total;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= oshape[static_cast<size_t>(i)];
    for (int i = axis + 1; i < nd; ++i) inner *= oshape[static_cast<size_t>(i)];
    Tensor<T> out(oshape);
    T* op = out.data();
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t d = p.dim(axis);
        const T* pp = p.val().data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pp + o * d * inner, pp + (o + 1) * d * inner, op + (o * total + off) * inner);
        off += d;
    }
    std::vector<std::shared_ptr<VarNode<T>>> nodes;
    std::vector<int64_t> dims;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        dims.push_back(p.dim(axis));
    }
    return make_op<T>(std::move(out), parts, [nodes, dims, outer, inner, total](const Tensor<T>& g) {
        const T* gp = g.data();
        int64_t off = 0;
        for (size_t pi = 0; pi < nodes.size(); ++pi) {
            const int64_t d = dims[pi];
            if (nodes[pi]->requires_grad) {
                std::vector<int64_t> pshape = nodes[pi]->value.shape();
                Tensor<T> gpart(pshape);
                T* dst = gpart.data();
                for (int64_t o = 0; o < outer; ++o)
                    std::copy(gp + (o * total + off) * inner, gp + (o * total + off + d) * inner,
                              dst + o * d * inner);
                nodes[pi]->accum_grad(gpart);
            }
            off += d;
        }
    });
}

/// Repeats x along a new leading axis: [sh...] -> [reps, sh...]
template <typename T>
Var<T> tile0(const Var<T>& x, int64_t reps) {
    std::vector<int64_t> oshape = x.val().shape();
    oshape.insert(oshape.begin(), reps);
    Tensor<T> out(oshape);
    const int64_t n = x.numel();
    for (int64_t r = 0; r < reps; ++r)
        std::copy(x.val().data(), x.val().data() + n, out.data() + r * n);
    auto xn = x.node();
    return make_op<T>(std::move(out), {x}, [xn, reps, n](const Tensor<T>& g) {
        Tensor<T> gx(xn->value.shape());
        T* dst = gx.data();
        const T* gp = g.data();
        for (int64_t r = 0; r < reps; ++r)
            for (int64_t i = 0; i < n; ++i) dst[i] += gp[r * n + i];
        xn->accum_grad(gx);
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum_all(const Var<T>& x) {
    T s = T(0);
    for (int64_t i = 0; i < x.numel(); ++i) s += x.val()[i];
    auto xn = x.node();
    return make_op<T>(Tensor<T>::scalar(s), {x}, [xn](const Tensor<T>& g) {
        Tensor<T> gx(xn->value.shape());
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] = g[0];
        xn->accum_grad(gx);
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
    return mul_scalar(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// softmax / layer norm
// ---------------------------------------------------------------------------

template <typename T>
Var<T> softmax_lastdim(const Var<T>& x) {
    const int64_t c = x.dim(-1);
    const int64_t rows = x.numel() / c;
    Tensor<T> out(x.shape());
    const T* xp = x.val().data();
    T* op = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = xp + r * c;
        T* yr = op + r * c;
        T mx = xr[0];
        for (int64_t i = 1; i < c; ++i) mx = std::max(mx, xr[i]);
        T denom = T(0);
        for (int64_t i = 0; i < c; ++i) denom += (yr[i] = std::exp(xr[i] - mx));
        const T inv = T(1) / denom;
        for (int64_t i = 0; i < c; ++i) yr[i] *= inv;
    }
    Tensor<T> yv = out;
    auto xn = x.node();
    return make_op<T>(std::move(out), {x}, [xn, yv, rows, c](const Tensor<T>& g) {
        Tensor<T> gx(yv.shape());
        const T* gp = g.data();
        const T* yp = yv.data();
        T* dp = gx.data();
        for (int64_t r = 0; r < rows; ++r) {
            const T* gr = gp + r * c;
            const T* yr = yp + r * c;
            T dot = T(0);
            for (int64_t i = 0; i < c; ++i) dot += gr[i] * yr[i];
            T* dr = dp + r * c;
            for (int64_t i = 0; i < c; ++i) dr[i] = yr[i] * (gr[i] - dot);
        }
        xn->accum_grad(gx);
    });
}

/// Normalizes over the last dim; gamma/beta have that dim's length.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
    const int64_t c = x.dim(-1);
    PTK_CHECK_SHAPE(gamma.numel() == c && beta.numel() == c, "layer_norm affine size mismatch");
    const int64_t rows = x.numel() / c;
    Tensor<T> out(x.shape());
    Tensor<T> xhat(x.shape());
    Tensor<T> inv_std({rows});
    const T* xp = x.val().data();
    const T* gp = gamma.val().data();
    const T* bp = beta.val().data();
    T* op = out.data();
    T* hp = xhat.data();
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = xp + r * c;
        T mean = T(0);
        for (int64_t i = 0; i < c; ++i) mean += xr[i];
        mean /= static_cast<T>(c);
        T var = T(0);
        for (int64_t i = 0; i < c; ++i) {
            const T d = xr[i] - mean;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T istd = T(1) / std::sqrt(var + eps);
        inv_std[r] = istd;
        for (int64_t i = 0; i < c; ++i) {
            const T h = (xr[i] - mean) * istd;
            hp[r * c + i] = h;
            op[r * c + i] = gp[i] * h + bp[i];
        }
    }
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    Tensor<T> gv = gamma.val();
    return make_op<T>(std::move(out), {x, gamma, beta},
                      [xn, gn, bn, gv, xhat, inv_std, rows, c](const Tensor<T>& g) {
        const T* gp = g.data();
        const T* hp = xhat.data();
        if (gn->requires_grad || bn->requires_grad) {
            Tensor<T> dgamma({c}), dbeta({c});
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t i = 0; i < c; ++i) {
                    dgamma[i] += gp[r * c + i] * hp[r * c + i];
                    dbeta[i] += gp[r * c + i];
                }
            if (gn->requires_grad) gn->accum_grad(dgamma);
            if (bn->requires_grad) bn->accum_grad(dbeta);
        }
        if (xn->requires_grad) {
            Tensor<T> gx(xn->value.shape());
            T* dp = gx.data();
            const T* gamp = gv.data();
            for (int64_t r = 0; r < rows; ++r) {
                T m1 = T(0), m2 = T(0);
                for (int64_t i = 0; i < c; ++i) {
                    const T gg = gp[r * c + i] * gamp[i];
                    m1 += gg;
                    m2 += gg * hp[r * c + i];
                }
                m1 /= static_cast<T>(c);
                m2 /= static_cast<T>(c);
                for (int64_t i = 0; i < c; ++i) {
                    const T gg = gp[r * c + i] * gamp[i];
                    dp[r * c + i] = (gg - m1 - hp[r * c + i] * m2) * inv_std[r];
                }
            }
            xn->accum_grad(gx);
        }
    });
}

// ---------------------------------------------------------------------------
// loss primitives
// ---------------------------------------------------------------------------

/// Huber on the Euclidean residual of 2-d predictions.
/// pred, target: [R,2]; returns [R]. r <= delta: r^2/2, else delta*(r - delta/2).
template <typename T>
Var<T> huber2(const Var<T>& pred, const Tensor<T>& target, T delta) {
    PTK_CHECK_SHAPE(pred.val().ndim() == 2 && pred.dim(1) == 2 && target.shape() == pred.shape(),
                    "huber2 expects [R,2] pred/target");
    const int64_t r = pred.dim(0);
    Tensor<T> out({r});
    const T* pp = pred.val().data();
    const T* tp = target.data();
    for (int64_t i = 0; i < r; ++i) {
        const T dx = pp[2 * i] - tp[2 * i];
        const T dy = pp[2 * i + 1] - tp[2 * i + 1];
        const T rr = std::sqrt(dx * dx + dy * dy);
        out[i] = rr <= delta ? T(0.5) * rr * rr : delta * (rr - T(0.5) * delta);
    }
    Tensor<T> pv = pred.val();
    auto pn = pred.node();
    return make_op<T>(std::move(out), {pred}, [pn, pv, target, delta, r](const Tensor<T>& g) {
        Tensor<T> gp({r, 2});
        const T* pp = pv.data();
        const T* tp = target.data();
        for (int64_t i = 0; i < r; ++i) {
            const T dx = pp[2 * i] - tp[2 * i];
            const T dy = pp[2 * i + 1] - tp[2 * i + 1];
            const T rr = std::sqrt(dx * dx + dy * dy);
            T sx, sy;
            if (rr <= delta) {
                sx = dx;
                sy = dy;
            } else {
                sx = delta * dx / rr;
                sy = delta * dy / rr;
            }
            gp[2 * i] = g[i] * sx;
            gp[2 * i + 1] = g[i] * sy;
        }
        pn->accum_grad(gp);
    });
}

/// Elementwise binary cross entropy on logits (numerically stable).
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets) {
    PTK_CHECK_SHAPE(logits.val().shape() == targets.shape(), "bce shape mismatch");
    Tensor<T> out(logits.shape());
    const T* xp = logits.val().data();
    const T* tp = targets.data();
    for (int64_t i = 0; i < out.numel(); ++i) {
        const T x = xp[i];
        out[i] = std::max(x, T(0)) - x * tp[i] + std::log1p(std::exp(-std::abs(x)));
    }
    Tensor<T> xv = logits.val();
    auto xn = logits.node();
    return make_op<T>(std::move(out), {logits}, [xn, xv, targets](const Tensor<T>& g) {
        Tensor<T> gx(xv.shape());
        for (int64_t i = 0; i < gx.numel(); ++i) {
            const T x = xv[i];
            const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
            gx[i] = g[i] * (s - targets[i]);
        }
        xn->accum_grad(gx);
    });
}

// ---------------------------------------------------------------------------
// Fourier displacement encoding
// ---------------------------------------------------------------------------

/// x: [..,2] -> [..,2+4*bands]. Layout per element:
///   [dx, dy, sin(f_b*dx), cos(f_b*dx) for b=0..B-1, sin(f_b*dy), cos(f_b*dy) for b=0..B-1]
/// with f_b = 2^b (geometric frequencies).
template <typename T>
Var<T> fourier_encode(const Var<T>& x, int bands) {
    PTK_CHECK_SHAPE(x.dim(-1) == 2, "fourier_encode expects trailing dim 2");
    const int64_t rows = x.numel() / 2;
    const int64_t width = 2 + 4 * static_cast<int64_t>(bands);
    std::vector<int64_t> oshape = x.val().shape();
    oshape.back() = width;
    Tensor<T> out(oshape);
    const T* xp = x.val().data();
    T* op = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const T dx = xp[2 * r], dy = xp[2 * r + 1];
        T* o = op + r * width;
        o[0] = dx;
        o[1] = dy;
        T f = T(1);
        for (int b = 0; b < bands; ++b, f *= T(2)) {
            o[2 + 2 * b] = std::sin(f * dx);
            o[2 + 2 * b + 1] = std::cos(f * dx);
            o[2 + 2 * bands + 2 * b] = std::sin(f * dy);
            o[2 + 2 * bands + 2 * b + 1] = std::cos(f * dy);
        }
    }
    Tensor<T> xv = x.val();
    auto xn = x.node();
    return make_op<T>(std::move(out), {x}, [xn, xv, bands, rows, width](const Tensor<T>& g) {
        Tensor<T> gx(xv.shape());
        const T* xp = xv.data();
        const T* gp = g.data();
        for (int64_t r = 0; r < rows; ++r) {
            const T dx = xp[2 * r], dy = xp[2 * r + 1];
            const T* gr = gp + r * width;
            T ax = gr[0], ay = gr[1];
            T f = T(1);
            for (int b = 0; b < bands; ++b, f *= T(2)) {
                ax += f * (std::cos(f * dx) * gr[2 + 2 * b] - std::sin(f * dx) * gr[2 + 2 * b + 1]);
                ay += f * (std::cos(f * dy) * gr[2 + 2 * bands + 2 * b] -
                           std::sin(f * dy) * gr[2 + 2 * bands + 2 * b + 1]);
            }
            gx[2 * r] = ax;
            gx[2 * r + 1] = ay;
        }
        xn->accum_grad(gx);
    });
}

/// Length of the fourier_encode output per 2-d displacement.
inline int64_t fourier_encode_dim(int bands) { return 2 + 4 * static_cast<int64_t>(bands); }

}  // namespace pointtrack
