#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "genconvit/ops.hpp"

namespace gcv {

namespace detail {

// col is (Cin * kh * kw, Ho * Wo); group g owns the row block starting at
// g * (Cin / groups) * kh * kw because input channels of a group are contiguous.
template <typename T>
void im2col(const T* x, i64 Cin, i64 H, i64 W, i64 kh, i64 kw, i64 stride, i64 pad, i64 Ho,
            i64 Wo, T* col) {
    const i64 N = Ho * Wo;
    for (i64 c = 0; c < Cin; ++c) {
        const T* plane = x + c * H * W;
        for (i64 i = 0; i < kh; ++i)
            for (i64 j = 0; j < kw; ++j) {
                T* row = col + ((c * kh + i) * kw + j) * N;
                for (i64 oh = 0; oh < Ho; ++oh) {
                    const i64 ih = oh * stride - pad + i;
                    T* dst = row + oh * Wo;
                    if (ih < 0 || ih >= H) {
                        std::memset(dst, 0, sizeof(T) * static_cast<size_t>(Wo));
                        continue;
                    }
                    const T* src = plane + ih * W;
                    for (i64 ow = 0; ow < Wo; ++ow) {
                        const i64 iw = ow * stride - pad + j;
                        dst[ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
                    }
                }
            }
    }
}

// scatter-add the column matrix back onto one image (inverse data flow of im2col)
template <typename T>
void col2im_add(const T* col, i64 Cin, i64 H, i64 W, i64 kh, i64 kw, i64 stride, i64 pad,
                i64 Ho, i64 Wo, T* gx) {
    const i64 N = Ho * Wo;
    for (i64 c = 0; c < Cin; ++c) {
        T* plane = gx + c * H * W;
        for (i64 i = 0; i < kh; ++i)
            for (i64 j = 0; j < kw; ++j) {
                const T* row = col + ((c * kh + i) * kw + j) * N;
                for (i64 oh = 0; oh < Ho; ++oh) {
                    const i64 ih = oh * stride - pad + i;
                    if (ih < 0 || ih >= H) continue;
                    T* dst = plane + ih * W;
                    const T* src = row + oh * Wo;
                    for (i64 ow = 0; ow < Wo; ++ow) {
                        const i64 iw = ow * stride - pad + j;
                        if (iw >= 0 && iw < W) dst[iw] += src[ow];
                    }
                }
            }
    }
}

}  // namespace detail

// x (B, Cin, H, W), w (Cout, Cin/groups, kh, kw), optional bias (Cout)
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, i64 stride,
                 i64 pad, i64 groups = 1) {
    check(x.shape.size() == 4, "conv2d: input must be (B, C, H, W)");
    check(w.shape.size() == 4, "conv2d: weight must be (Cout, Cin/groups, kh, kw)");
    check(stride >= 1 && pad >= 0 && groups >= 1, "conv2d: bad stride/pad/groups");
    const i64 B = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3];
    const i64 Cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    if (Cin % groups != 0 || Cout % groups != 0 || w.shape[1] != Cin / groups)
        fail_shape("conv2d: weight ", shape_str(w.shape), " does not match input ",
                   shape_str(x.shape), " with groups=", groups);
    const bool has_bias = b.store != nullptr;
    if (has_bias && (b.shape.size() != 1 || b.shape[0] != Cout))
        fail_shape("conv2d: bias ", shape_str(b.shape), " does not match weight ",
                   shape_str(w.shape));
    const i64 Ho = (H + 2 * pad - kh) / stride + 1;
    const i64 Wo = (W + 2 * pad - kw) / stride + 1;
    if (H + 2 * pad < kh || W + 2 * pad < kw || Ho <= 0 || Wo <= 0)
        fail_shape("conv2d: kernel ", shape_str(w.shape), " over input ", shape_str(x.shape),
                   " with stride=", stride, " pad=", pad, " yields an empty output");

    const i64 N = Ho * Wo;
    const i64 Kg = (Cin / groups) * kh * kw;  // contraction length per group
    const i64 Cog = Cout / groups;
    Tensor<T> y = Tensor<T>::zeros({B, Cout, Ho, Wo});
    const T* xp = x.ptr();
    const T* wp = w.ptr();
    T* yp = y.ptr();
    parallel_for(B, [&](i64 b0, i64 b1) {
        std::vector<T> col(static_cast<size_t>(Cin * kh * kw * N));
        for (i64 bi = b0; bi < b1; ++bi) {
            detail::im2col(xp + bi * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                           col.data());
            for (i64 g = 0; g < groups; ++g)
                gemm_nn(Cog, N, Kg, wp + g * Cog * Kg, col.data() + g * Kg * N,
                        yp + (bi * Cout + g * Cog) * N);
        }
    });
    if (has_bias) {
        const T* bp = b.ptr();
        for (i64 bi = 0; bi < B; ++bi)
            for (i64 c = 0; c < Cout; ++c) {
                T* row = yp + (bi * Cout + c) * N;
                const T bv = bp[c];
                for (i64 i = 0; i < N; ++i) row[i] += bv;
            }
    }

    Tape<T>* tp = has_bias ? tape_of(x, w, b) : tape_of(x, w);
    if (tp) {
        y.tape = tp;
        const int nx = x.node, nw = w.node, nb = has_bias ? b.node : -1;
        auto xd = x.store, wd = w.store;
        Shape xs = x.shape, ws = w.shape;
        y.node = tp->record(y.shape, [=](Tape<T>& t, const Tensor<T>& g) {
            const T* gp = g.ptr();
            if (nx >= 0) {
                Tensor<T> gx = Tensor<T>::zeros(xs);
                T* gxp = gx.ptr();
                parallel_for(B, [&](i64 b0, i64 b1) {
                    std::vector<T> gcol(static_cast<size_t>(Cin * kh * kw * N));
                    for (i64 bi = b0; bi < b1; ++bi) {
                        std::fill(gcol.begin(), gcol.end(), T(0));
                        for (i64 gi = 0; gi < groups; ++gi)
                            gemm_tn(Kg, N, Cog, wd->data() + gi * Cog * Kg,
                                    gp + (bi * Cout + gi * Cog) * N, gcol.data() + gi * Kg * N);
                        detail::col2im_add(gcol.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                                           gxp + bi * Cin * H * W);
                    }
                });
                t.accumulate(nx, std::move(gx));
            }
            if (nw >= 0) {
                Tensor<T> gw = Tensor<T>::zeros(ws);
                T* gwp = gw.ptr();
                std::vector<T> col(static_cast<size_t>(Cin * kh * kw * N));
                for (i64 bi = 0; bi < B; ++bi) {
                    detail::im2col(xd->data() + bi * Cin * H * W, Cin, H, W, kh, kw, stride,
                                   pad, Ho, Wo, col.data());
                    for (i64 gi = 0; gi < groups; ++gi)
                        gemm_nt(Cog, Kg, N, gp + (bi * Cout + gi * Cog) * N,
                                col.data() + gi * Kg * N, gwp + gi * Cog * Kg);
                }
                t.accumulate(nw, std::move(gw));
            }
            if (nb >= 0) {
                Tensor<T> gb = Tensor<T>::zeros({Cout});
                T* gbp = gb.ptr();
                for (i64 bi = 0; bi < B; ++bi)
                    for (i64 c = 0; c < Cout; ++c) {
                        const T* row = gp + (bi * Cout + c) * N;
                        T acc = T(0);
                        for (i64 i = 0; i < N; ++i) acc += row[i];
                        gbp[c] += acc;
                    }
                t.accumulate(nb, std::move(gb));
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, i64 stride, i64 pad, i64 groups = 1) {
    return conv2d(x, w, Tensor<T>{}, stride, pad, groups);
}

// x (B, Cin, H, W), w (Cin, Cout, kh, kw), optional bias (Cout), no padding;
// out (B, Cout, (H-1)*stride + kh, (W-1)*stride + kw). Each output pixel gathers
// its contributions, so the result is independent of thread partitioning.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           i64 stride) {
    check(x.shape.size() == 4, "conv_transpose2d: input must be (B, C, H, W)");
    check(w.shape.size() == 4, "conv_transpose2d: weight must be (Cin, Cout, kh, kw)");
    check(stride >= 1, "conv_transpose2d: bad stride");
    const i64 B = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3];
    const i64 Cout = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    if (w.shape[0] != Cin)
        fail_shape("conv_transpose2d: weight ", shape_str(w.shape), " does not match input ",
                   shape_str(x.shape));
    const bool has_bias = b.store != nullptr;
    if (has_bias && (b.shape.size() != 1 || b.shape[0] != Cout))
        fail_shape("conv_transpose2d: bias ", shape_str(b.shape), " does not match weight ",
                   shape_str(w.shape));
    const i64 Ho = (H - 1) * stride + kh;
    const i64 Wo = (W - 1) * stride + kw;

    Tensor<T> y = Tensor<T>::zeros({B, Cout, Ho, Wo});
    const T* xp = x.ptr();
    const T* wp = w.ptr();
    T* yp = y.ptr();
    parallel_for(B * Cout, [&](i64 p0, i64 p1) {
        for (i64 p = p0; p < p1; ++p) {
            const i64 bi = p / Cout, co = p % Cout;
            T* out = yp + p * Ho * Wo;
            const T bv = has_bias ? b.ptr()[co] : T(0);
            for (i64 oh = 0; oh < Ho; ++oh)
                for (i64 ow = 0; ow < Wo; ++ow) {
                    T acc = bv;
                    for (i64 i = 0; i < kh; ++i) {
                        const i64 hs = oh - i;
                        if (hs < 0 || hs % stride != 0) continue;
                        const i64 h = hs / stride;
                        if (h >= H) continue;
                        for (i64 j = 0; j < kw; ++j) {
                            const i64 wsrc = ow - j;
                            if (wsrc < 0 || wsrc % stride != 0) continue;
                            const i64 wi = wsrc / stride;
                            if (wi >= W) continue;
                            const T* xrow = xp + (bi * Cin * H + h) * W + wi;
                            const T* wrow = wp + (co * kh + i) * kw + j;
                            for (i64 ci = 0; ci < Cin; ++ci)
                                acc += xrow[ci * H * W] * wrow[ci * Cout * kh * kw];
                        }
                    }
                    out[oh * Wo + ow] = acc;
                }
        }
    });

    Tape<T>* tp = has_bias ? tape_of(x, w, b) : tape_of(x, w);
    if (tp) {
        y.tape = tp;
        const int nx = x.node, nw = w.node, nb = has_bias ? b.node : -1;
        auto xd = x.store, wd = w.store;
        Shape xs = x.shape, ws = w.shape;
        y.node = tp->record(y.shape, [=](Tape<T>& t, const Tensor<T>& g) {
            const T* gp = g.ptr();
            if (nx >= 0) {  // gx = full-correlation of g with w
                Tensor<T> gx = Tensor<T>::zeros(xs);
                T* gxp = gx.ptr();
                parallel_for(B * Cin, [&](i64 p0, i64 p1) {
                    for (i64 p = p0; p < p1; ++p) {
                        const i64 bi = p / Cin, ci = p % Cin;
                        T* out = gxp + p * H * W;
                        for (i64 h = 0; h < H; ++h)
                            for (i64 wi = 0; wi < W; ++wi) {
                                T acc = T(0);
                                for (i64 co = 0; co < Cout; ++co) {
                                    const T* gplane = gp + (bi * Cout + co) * Ho * Wo;
                                    const T* wrow = wd->data() + ((ci * Cout + co) * kh) * kw;
                                    for (i64 i = 0; i < kh; ++i)
                                        for (i64 j = 0; j < kw; ++j)
                                            acc += gplane[(h * stride + i) * Wo +
                                                          (wi * stride + j)] *
                                                   wrow[i * kw + j];
                                }
                                out[h * W + wi] = acc;
                            }
                    }
                });
                t.accumulate(nx, std::move(gx));
            }
            if (nw >= 0) {
                Tensor<T> gw = Tensor<T>::zeros(ws);
                T* gwp = gw.ptr();
                parallel_for(Cin, [&](i64 c0, i64 c1) {
                    for (i64 ci = c0; ci < c1; ++ci)
                        for (i64 co = 0; co < Cout; ++co)
                            for (i64 i = 0; i < kh; ++i)
                                for (i64 j = 0; j < kw; ++j) {
                                    T acc = T(0);
                                    for (i64 bi = 0; bi < B; ++bi) {
                                        const T* xplane = xd->data() + (bi * Cin + ci) * H * W;
                                        const T* gplane = gp + (bi * Cout + co) * Ho * Wo;
                                        for (i64 h = 0; h < H; ++h)
                                            for (i64 wi = 0; wi < W; ++wi)
                                                acc += xplane[h * W + wi] *
                                                       gplane[(h * stride + i) * Wo +
                                                              (wi * stride + j)];
                                    }
                                    gwp[((ci * Cout + co) * kh + i) * kw + j] = acc;
                                }
                });
                t.accumulate(nw, std::move(gw));
            }
            if (nb >= 0) {
                Tensor<T> gb = Tensor<T>::zeros({Cout});
                T* gbp = gb.ptr();
                for (i64 bi = 0; bi < B; ++bi)
                    for (i64 co = 0; co < Cout; ++co) {
                        const T* plane = gp + (bi * Cout + co) * Ho * Wo;
                        T acc = T(0);
                        for (i64 i = 0; i < Ho * Wo; ++i) acc += plane[i];
                        gbp[co] += acc;
                    }
                t.accumulate(nb, std::move(gb));
            }
        });
    }
    return y;
}

// Max pooling with no padding; ties resolve to the first element in row-major
// window order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, i64 k, i64 s) {
    check(x.shape.size() == 4, "maxpool2d: input must be (B, C, H, W)");
    check(k >= 1 && s >= 1, "maxpool2d: bad kernel/stride");
    const i64 B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (H < k || W < k)
        fail_shape("maxpool2d: window ", k, " exceeds input ", shape_str(x.shape));
    const i64 Ho = (H - k) / s + 1;
    const i64 Wo = (W - k) / s + 1;
    Tensor<T> y = Tensor<T>::zeros({B, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<i64>>(static_cast<size_t>(B * C * Ho * Wo));
    const T* xp = x.ptr();
    T* yp = y.ptr();
    i64* am = argmax->data();
    parallel_for(B * C, [&](i64 p0, i64 p1) {
        for (i64 p = p0; p < p1; ++p) {
            const T* plane = xp + p * H * W;
            T* out = yp + p * Ho * Wo;
            i64* amp = am + p * Ho * Wo;
            for (i64 oh = 0; oh < Ho; ++oh)
                for (i64 ow = 0; ow < Wo; ++ow) {
                    i64 best = (oh * s) * W + (ow * s);
                    T bv = plane[best];
                    for (i64 i = 0; i < k; ++i)
                        for (i64 j = 0; j < k; ++j) {
                            const i64 idx = (oh * s + i) * W + (ow * s + j);
                            if (plane[idx] > bv) {
                                bv = plane[idx];
                                best = idx;
                            }
                        }
                    out[oh * Wo + ow] = bv;
                    amp[oh * Wo + ow] = best;
                }
        }
    });
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        Shape xs = x.shape;
        y.node = x.tape->record(y.shape, [nx, xs, argmax, B, C, H, W, Ho,
                                          Wo](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> gx = Tensor<T>::zeros(xs);
            const T* gp = g.ptr();
            T* gxp = gx.ptr();
            const i64* am2 = argmax->data();
            parallel_for(B * C, [&](i64 p0, i64 p1) {
                for (i64 p = p0; p < p1; ++p) {
                    T* plane = gxp + p * H * W;
                    const T* go = gp + p * Ho * Wo;
                    const i64* amp = am2 + p * Ho * Wo;
                    for (i64 i = 0; i < Ho * Wo; ++i) plane[amp[i]] += go[i];
                }
            });
            t.accumulate(nx, std::move(gx));
        });
    }
    return y;
}

// Bilinear interpolation with half-pixel centers (align_corners = false).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, i64 Ho, i64 Wo) {
    check(x.shape.size() == 4, "resize_bilinear: input must be (B, C, H, W)");
    check(Ho >= 1 && Wo >= 1, "resize_bilinear: bad target size");
    const i64 B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const double sh = static_cast<double>(H) / static_cast<double>(Ho);
    const double sw = static_cast<double>(W) / static_cast<double>(Wo);

    struct Tap {
        i64 lo, hi;
        double w_hi;
    };
    std::vector<Tap> th(static_cast<size_t>(Ho)), tw(static_cast<size_t>(Wo));
    auto make_tap = [](i64 dst, double scl, i64 n) {
        double src = (static_cast<double>(dst) + 0.5) * scl - 0.5;
        if (src < 0) src = 0;
        if (src > static_cast<double>(n - 1)) src = static_cast<double>(n - 1);
        const i64 lo = static_cast<i64>(src);
        const i64 hi = std::min<i64>(lo + 1, n - 1);
        return Tap{lo, hi, src - static_cast<double>(lo)};
    };
    for (i64 i = 0; i < Ho; ++i) th[static_cast<size_t>(i)] = make_tap(i, sh, H);
    for (i64 i = 0; i < Wo; ++i) tw[static_cast<size_t>(i)] = make_tap(i, sw, W);

    Tensor<T> y = Tensor<T>::zeros({B, C, Ho, Wo});
    const T* xp = x.ptr();
    T* yp = y.ptr();
    parallel_for(B * C, [&](i64 p0, i64 p1) {
        for (i64 p = p0; p < p1; ++p) {
            const T* plane = xp + p * H * W;
            T* out = yp + p * Ho * Wo;
            for (i64 oh = 0; oh < Ho; ++oh) {
                const Tap& a = th[static_cast<size_t>(oh)];
                for (i64 ow = 0; ow < Wo; ++ow) {
                    const Tap& b = tw[static_cast<size_t>(ow)];
                    const double v00 = plane[a.lo * W + b.lo], v01 = plane[a.lo * W + b.hi];
                    const double v10 = plane[a.hi * W + b.lo], v11 = plane[a.hi * W + b.hi];
                    const double top = v00 + (v01 - v00) * b.w_hi;
                    const double bot = v10 + (v11 - v10) * b.w_hi;
                    out[oh * Wo + ow] = static_cast<T>(top + (bot - top) * a.w_hi);
                }
            }
        }
    });
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        Shape xs = x.shape;
        y.node = x.tape->record(y.shape, [nx, xs, th, tw, B, C, H, W, Ho,
                                          Wo](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> gx = Tensor<T>::zeros(xs);
            const T* gp = g.ptr();
            T* gxp = gx.ptr();
            parallel_for(B * C, [&](i64 p0, i64 p1) {
                for (i64 p = p0; p < p1; ++p) {
                    T* plane = gxp + p * H * W;
                    const T* go = gp + p * Ho * Wo;
                    for (i64 oh = 0; oh < Ho; ++oh) {
                        const Tap& a = th[static_cast<size_t>(oh)];
                        for (i64 ow = 0; ow < Wo; ++ow) {
                            const Tap& b = tw[static_cast<size_t>(ow)];
                            const double gv = go[oh * Wo + ow];
                            plane[a.lo * W + b.lo] +=
                                static_cast<T>(gv * (1 - a.w_hi) * (1 - b.w_hi));
                            plane[a.lo * W + b.hi] += static_cast<T>(gv * (1 - a.w_hi) * b.w_hi);
                            plane[a.hi * W + b.lo] += static_cast<T>(gv * a.w_hi * (1 - b.w_hi));
                            plane[a.hi * W + b.hi] += static_cast<T>(gv * a.w_hi * b.w_hi);
                        }
                    }
                }
            });
            t.accumulate(nx, std::move(gx));
        });
    }
    return y;
}

}  // namespace gcv
