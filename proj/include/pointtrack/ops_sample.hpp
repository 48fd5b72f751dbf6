#pragma once

#include "pointtrack/ops.hpp"

namespace pointtrack {

namespace sample_detail {

// Bilinear sample with border clamping on an NHWC map slice [h,w,d].
// Writes the d-vector; optionally returns the corner data needed for gradients.
template <typename T>
struct Corners {
    int64_t x0, x1, y0, y1;
    T tx, ty;
};

template <typename T>
Corners<T> corners_at(T xs, T ys, int64_t h, int64_t w) {
    const T fx = std::floor(xs), fy = std::floor(ys);
    Corners<T> c;
    c.tx = xs - fx;
    c.ty = ys - fy;
    const auto clamp = [](int64_t v, int64_t hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    const int64_t x0 = static_cast<int64_t>(fx), y0 = static_cast<int64_t>(fy);
    c.x0 = clamp(x0, w - 1);
    c.x1 = clamp(x0 + 1, w - 1);
    c.y0 = clamp(y0, h - 1);
    c.y1 = clamp(y0 + 1, h - 1);
    return c;
}

template <typename T>
void bilinear_at(const T* map, int64_t h, int64_t w, int64_t d, T xs, T ys, T* out) {
    const auto c = corners_at(xs, ys, h, w);
    const T w00 = (T(1) - c.tx) * (T(1) - c.ty), w10 = c.tx * (T(1) - c.ty);
    const T w01 = (T(1) - c.tx) * c.ty, w11 = c.tx * c.ty;
    const T* p00 = map + (c.y0 * w + c.x0) * d;
    const T* p10 = map + (c.y0 * w + c.x1) * d;
    const T* p01 = map + (c.y1 * w + c.x0) * d;
    const T* p11 = map + (c.y1 * w + c.x1) * d;
    for (int64_t i = 0; i < d; ++i) out[i] = w00 * p00[i] + w10 * p10[i] + w01 * p01[i] + w11 * p11[i];
}

// Accumulates gradients for one sample into the map gradient and returns
// (d loss / d xs, d loss / d ys) for the coordinate gradient.
template <typename T>
std::pair<T, T> bilinear_backward_at(const T* map, T* dmap, int64_t h, int64_t w, int64_t d, T xs,
                                     T ys, const T* gout) {
    const auto c = corners_at(xs, ys, h, w);
    const T w00 = (T(1) - c.tx) * (T(1) - c.ty), w10 = c.tx * (T(1) - c.ty);
    const T w01 = (T(1) - c.tx) * c.ty, w11 = c.tx * c.ty;
    const int64_t o00 = (c.y0 * w + c.x0) * d, o10 = (c.y0 * w + c.x1) * d;
    const int64_t o01 = (c.y1 * w + c.x0) * d, o11 = (c.y1 * w + c.x1) * d;
    T gx = T(0), gy = T(0);
    for (int64_t i = 0; i < d; ++i) {
        const T g = gout[i];
        if (dmap) {
            dmap[o00 + i] += w00 * g;
            dmap[o10 + i] += w10 * g;
            dmap[o01 + i] += w01 * g;
            dmap[o11 + i] += w11 * g;
        }
        const T f00 = map[o00 + i], f10 = map[o10 + i], f01 = map[o01 + i], f11 = map[o11 + i];
        gx += g * ((f10 - f00) * (T(1) - c.ty) + (f11 - f01) * c.ty);
        gy += g * ((f01 - f00) * (T(1) - c.tx) + (f11 - f10) * c.tx);
    }
    return {gx, gy};
}

inline int64_t nbhd_size(int delta) {
    const int64_t k = 2 * static_cast<int64_t>(delta) + 1;
    return k * k;
}

}  // namespace sample_detail

/// Samples (2*delta+1)^2 bilinear neighborhoods around scaled track points.
/// fmap: [T,h,w,d] (one pyramid scale, NHWC); coords: [N,T,2] pixel coordinates.
/// Sample position for offset (dx,dy): (x/divisor + dx, y/divisor + dy), border-clamped.
/// Offsets are enumerated row-major: index a = (dy+delta)*(2*delta+1) + (dx+delta).
/// Returns [N,T,K2,d] with K2 = (2*delta+1)^2.
template <typename T>
Var<T> sample_neighborhoods(const Var<T>& fmap, const Var<T>& coords, T divisor, int delta) {
    PTK_CHECK_SHAPE(fmap.val().ndim() == 4 && coords.val().ndim() == 3 && coords.dim(2) == 2,
                    "sample_neighborhoods expects fmap [T,h,w,d], coords [N,T,2]");
    const int64_t Tn = fmap.dim(0), h = fmap.dim(1), w = fmap.dim(2), d = fmap.dim(3);
    const int64_t N = coords.dim(0);
    PTK_CHECK_SHAPE(coords.dim(1) == Tn, "coords time dim must match fmap");
    const int64_t k = 2 * static_cast<int64_t>(delta) + 1;
    const int64_t K2 = k * k;
    Tensor<T> out({N, Tn, K2, d});
    const T* mp = fmap.val().data();
    const T* cp = coords.val().data();
    T* op = out.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n)
        for (int64_t t = 0; t < Tn; ++t) {
            const T xs = cp[(n * Tn + t) * 2] / divisor;
            const T ys = cp[(n * Tn + t) * 2 + 1] / divisor;
            const T* map = mp + t * h * w * d;
            T* dst = op + ((n * Tn + t) * K2) * d;
            for (int64_t dy = -delta; dy <= delta; ++dy)
                for (int64_t dx = -delta; dx <= delta; ++dx) {
                    sample_detail::bilinear_at(map, h, w, d, xs + static_cast<T>(dx),
                                               ys + static_cast<T>(dy), dst);
                    dst += d;
                }
        }
    auto mn = fmap.node();
    auto cn = coords.node();
    Tensor<T> mv = fmap.val(), cv = coords.val();
    return make_op<T>(std::move(out), {fmap, coords},
                      [mn, cn, mv, cv, divisor, delta, N, Tn, h, w, d, K2](const Tensor<T>& g) {
        Tensor<T> dmap;
        if (mn->requires_grad) dmap = Tensor<T>(mv.shape());
        Tensor<T> dcoords;
        if (cn->requires_grad) dcoords = Tensor<T>(cv.shape());
        const T* mp = mv.data();
        const T* cp = cv.data();
        const T* gp = g.data();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t t = 0; t < Tn; ++t) {
                const T xs = cp[(n * Tn + t) * 2] / divisor;
                const T ys = cp[(n * Tn + t) * 2 + 1] / divisor;
                const T* map = mp + t * h * w * d;
                T* dm = dmap.defined() ? dmap.data() + t * h * w * d : nullptr;
                const T* gr = gp + ((n * Tn + t) * K2) * d;
                T gx = T(0), gy = T(0);
                for (int64_t dy = -delta; dy <= delta; ++dy)
                    for (int64_t dx = -delta; dx <= delta; ++dx) {
                        const auto [ax, ay] = sample_detail::bilinear_backward_at(
                            map, dm, h, w, d, xs + static_cast<T>(dx), ys + static_cast<T>(dy), gr);
                        gx += ax;
                        gy += ay;
                        gr += d;
                    }
                if (dcoords.defined()) {
                    dcoords[(n * Tn + t) * 2] = gx / divisor;
                    dcoords[(n * Tn + t) * 2 + 1] = gy / divisor;
                }
            }
        if (dmap.defined()) mn->accum_grad(dmap);
        if (dcoords.defined()) cn->accum_grad(dcoords);
    });
}

/// Per-point query neighborhoods: frame index differs per point.
/// fmap: [T,h,w,d]; frame_ix: N entries; coords: [N,2]. Returns [N,K2,d].
template <typename T>
Var<T> sample_query_neighborhoods(const Var<T>& fmap, const std::vector<int64_t>& frame_ix,
                                  const Var<T>& coords, T divisor, int delta) {
    PTK_CHECK_SHAPE(fmap.val().ndim() == 4 && coords.val().ndim() == 2 && coords.dim(1) == 2,
                    "sample_query_neighborhoods expects fmap [T,h,w,d], coords [N,2]");
    const int64_t Tn = fmap.dim(0), h = fmap.dim(1), w = fmap.dim(2), d = fmap.dim(3);
    const int64_t N = coords.dim(0);
    PTK_CHECK_SHAPE(static_cast<int64_t>(frame_ix.size()) == N, "frame index count mismatch");
    for (int64_t t : frame_ix) PTK_CHECK_SHAPE(t >= 0 && t < Tn, "query frame out of range");
    const int64_t k = 2 * static_cast<int64_t>(delta) + 1;
    const int64_t K2 = k * k;
    Tensor<T> out({N, K2, d});
    const T* mp = fmap.val().data();
    const T* cp = coords.val().data();
    T* op = out.data();
    for (int64_t n = 0; n < N; ++n) {
        const T xs = cp[n * 2] / divisor;
        const T ys = cp[n * 2 + 1] / divisor;
        const T* map = mp + frame_ix[static_cast<size_t>(n)] * h * w * d;
        T* dst = op + n * K2 * d;
        for (int64_t dy = -delta; dy <= delta; ++dy)
            for (int64_t dx = -delta; dx <= delta; ++dx) {
                sample_detail::bilinear_at(map, h, w, d, xs + static_cast<T>(dx),
                                           ys + static_cast<T>(dy), dst);
                dst += d;
            }
    }
    auto mn = fmap.node();
    auto cn = coords.node();
    Tensor<T> mv = fmap.val(), cv = coords.val();
    return make_op<T>(std::move(out), {fmap, coords},
                      [mn, cn, mv, cv, frame_ix, divisor, delta, N, h, w, d, K2](const Tensor<T>& g) {
        Tensor<T> dmap;
        if (mn->requires_grad) dmap = Tensor<T>(mv.shape());
        Tensor<T> dcoords;
        if (cn->requires_grad) dcoords = Tensor<T>(cv.shape());
        const T* mp = mv.data();
        const T* cp = cv.data();
        const T* gp = g.data();
        for (int64_t n = 0; n < N; ++n) {
            const T xs = cp[n * 2] / divisor;
            const T ys = cp[n * 2 + 1] / divisor;
            const int64_t t = frame_ix[static_cast<size_t>(n)];
            const T* map = mp + t * h * w * d;
            T* dm = dmap.defined() ? dmap.data() + t * h * w * d : nullptr;
            const T* gr = gp + n * K2 * d;
            T gx = T(0), gy = T(0);
            for (int64_t dy = -delta; dy <= delta; ++dy)
                for (int64_t dx = -delta; dx <= delta; ++dx) {
                    const auto [ax, ay] = sample_detail::bilinear_backward_at(
                        map, dm, h, w, d, xs + static_cast<T>(dx), ys + static_cast<T>(dy), gr);
                    gx += ax;
                    gy += ay;
                    gr += d;
                }
            if (dcoords.defined()) {
                dcoords[n * 2] = gx / divisor;
                dcoords[n * 2 + 1] = gy / divisor;
            }
        }
        if (dmap.defined()) mn->accum_grad(dmap);
        if (dcoords.defined()) cn->accum_grad(dcoords);
    });
}

/// All pairwise inner products between query and track neighborhoods.
/// q: [N,K2,d], tr: [N,T,K2,d] -> [N,T,K2*K2] with out[n,t,a*K2+b] = <q[n,a], tr[n,t,b]>.
template <typename T>
Var<T> corr4d_batched(const Var<T>& q, const Var<T>& tr) {
    PTK_CHECK_SHAPE(q.val().ndim() == 3 && tr.val().ndim() == 4, "corr4d_batched rank mismatch");
    const int64_t N = q.dim(0), K2 = q.dim(1), d = q.dim(2);
    const int64_t Tn = tr.dim(1);
    PTK_CHECK_SHAPE(tr.dim(0) == N && tr.dim(2) == K2 && tr.dim(3) == d,
                    "corr4d_batched shapes ", shape_str(q.shape()), " vs ", shape_str(tr.shape()));
    Tensor<T> out({N, Tn, K2 * K2});
    const T* qp = q.val().data();
    const T* tp = tr.val().data();
    T* op = out.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n)
        for (int64_t t = 0; t < Tn; ++t)
            gemm(qp + n * K2 * d, tp + (n * Tn + t) * K2 * d, op + (n * Tn + t) * K2 * K2, K2, d,
                 K2, false, true);
    Tensor<T> qv = q.val(), tv = tr.val();
    auto qn = q.node();
    auto tn = tr.node();
    return make_op<T>(std::move(out), {q, tr}, [qn, tn, qv, tv, N, Tn, K2, d](const Tensor<T>& g) {
        const T* qp = qv.data();
        const T* tp = tv.data();
        const T* gp = g.data();
        if (qn->requires_grad) {
            Tensor<T> dq(qv.shape());
            for (int64_t n = 0; n < N; ++n)
                for (int64_t t = 0; t < Tn; ++t)
                    gemm(gp + (n * Tn + t) * K2 * K2, tp + (n * Tn + t) * K2 * d,
                         dq.data() + n * K2 * d, K2, K2, d, false, false, T(1));
            qn->accum_grad(dq);
        }
        if (tn->requires_grad) {
            Tensor<T> dt(tv.shape());
#pragma omp parallel for collapse(2) schedule(static)
            for (int64_t n = 0; n < N; ++n)
                for (int64_t t = 0; t < Tn; ++t)
                    gemm(gp + (n * Tn + t) * K2 * K2, qp + n * K2 * d,
                         dt.data() + (n * Tn + t) * K2 * d, K2, K2, d, true, false);
            tn->accum_grad(dt);
        }
    });
}

}  // namespace pointtrack
