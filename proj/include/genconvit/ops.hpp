#pragma once

#include <cmath>
#include <cstring>

#include "genconvit/tape.hpp"

namespace gcv {

// ---------------------------------------------------------------------------
// raw GEMM kernels (accumulate into C; caller zeroes first)
// ---------------------------------------------------------------------------

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(i64 M, i64 N, i64 K, const T* A, const T* B, T* C) {
    parallel_for(M, [&](i64 i0, i64 i1) {
        for (i64 i = i0; i < i1; ++i) {
            T* c = C + i * N;
            const T* a = A + i * K;
            for (i64 k = 0; k < K; ++k) {
                const T av = a[k];
                const T* b = B + k * N;
                for (i64 j = 0; j < N; ++j) c[j] += av * b[j];
            }
        }
    });
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(i64 M, i64 N, i64 K, const T* A, const T* B, T* C) {
    parallel_for(M, [&](i64 i0, i64 i1) {
        for (i64 i = i0; i < i1; ++i) {
            const T* a = A + i * K;
            T* c = C + i * N;
            for (i64 j = 0; j < N; ++j) {
                const T* b = B + j * K;
                T acc = T(0);
                for (i64 k = 0; k < K; ++k) acc += a[k] * b[k];
                c[j] += acc;
            }
        }
    });
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(i64 M, i64 N, i64 K, const T* A, const T* B, T* C) {
    parallel_for(M, [&](i64 i0, i64 i1) {
        for (i64 i = i0; i < i1; ++i) {
            T* c = C + i * N;
            for (i64 k = 0; k < K; ++k) {
                const T av = A[k * M + i];
                const T* b = B + k * N;
                for (i64 j = 0; j < N; ++j) c[j] += av * b[j];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// broadcasting
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const size_t n = std::max(a.size(), b.size());
    Shape out(n);
    for (size_t i = 0; i < n; ++i) {
        i64 da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        i64 db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        if (da != db && da != 1 && db != 1)
            fail_shape("cannot broadcast ", shape_str(a), " with ", shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// strides of `s` left-padded to rank `n`, with 0 on broadcast axes
inline Shape broadcast_strides(const Shape& s, size_t n) {
    Shape st = strides_of<int>(s);
    Shape out(n, 0);
    const size_t off = n - s.size();
    for (size_t i = 0; i < s.size(); ++i) out[off + i] = (s[i] == 1) ? 0 : st[i];
    return out;
}

namespace detail {

// Apply f(out_index, a_offset, b_offset) over the broadcast iteration space.
template <typename F>
void broadcast_iterate(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
    const size_t r = out.size();
    const i64 n = numel_of(out);
    Shape idx(r, 0);
    i64 oa = 0, ob = 0;
    for (i64 lin = 0; lin < n; ++lin) {
        f(lin, oa, ob);
        for (i64 d = static_cast<i64>(r) - 1; d >= 0; --d) {
            size_t du = static_cast<size_t>(d);
            if (++idx[du] < out[du]) {
                oa += sa[du];
                ob += sb[du];
                break;
            }
            oa -= sa[du] * (out[du] - 1);
            ob -= sb[du] * (out[du] - 1);
            idx[du] = 0;
        }
    }
}

// Sum g down to `shape` (inverse of broadcasting).
template <typename T>
Tensor<T> reduce_to_shape(const Tensor<T>& g, const Shape& shape) {
    if (g.shape == shape) return g;
    Tensor<T> out = Tensor<T>::zeros(shape);
    const Shape st = broadcast_strides(shape, g.shape.size());
    const Shape one(g.shape.size(), 0);
    T* o = out.ptr();
    const T* gp = g.ptr();
    broadcast_iterate(g.shape, st, one, [&](i64 lin, i64 oa, i64) { o[oa] += gp[lin]; });
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    Shape os = broadcast_shape(a.shape, b.shape);
    Tensor<T> y = Tensor<T>::zeros(os);
    T* yp = y.ptr();
    const T* ap = a.ptr();
    const T* bp = b.ptr();
    if (a.shape == b.shape) {
        const i64 n = y.numel();
        for (i64 i = 0; i < n; ++i) yp[i] = ap[i] + bp[i];
    } else {
        detail::broadcast_iterate(os, broadcast_strides(a.shape, os.size()),
                                  broadcast_strides(b.shape, os.size()),
                                  [&](i64 lin, i64 oa, i64 ob) { yp[lin] = ap[oa] + bp[ob]; });
    }
    Tape<T>* tp = tape_of(a, b);
    if (tp) {
        y.tape = tp;
        const int na = a.node, nb = b.node;
        Shape sa = a.shape, sb = b.shape;
        y.node = tp->record(y.shape, [na, nb, sa, sb](Tape<T>& t, const Tensor<T>& g) {
            if (na >= 0) t.accumulate(na, detail::reduce_to_shape(g, sa).clone());
            if (nb >= 0) t.accumulate(nb, detail::reduce_to_shape(g, sb).clone());
        });
    }
    return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    Shape os = broadcast_shape(a.shape, b.shape);
    Tensor<T> y = Tensor<T>::zeros(os);
    T* yp = y.ptr();
    const T* ap = a.ptr();
    const T* bp = b.ptr();
    const bool same = a.shape == b.shape;
    if (same) {
        const i64 n = y.numel();
        for (i64 i = 0; i < n; ++i) yp[i] = ap[i] * bp[i];
    } else {
        detail::broadcast_iterate(os, broadcast_strides(a.shape, os.size()),
                                  broadcast_strides(b.shape, os.size()),
                                  [&](i64 lin, i64 oa, i64 ob) { yp[lin] = ap[oa] * bp[ob]; });
    }
    Tape<T>* tp = tape_of(a, b);
    if (tp) {
        y.tape = tp;
        const int na = a.node, nb = b.node;
        auto ad = a.store, bd = b.store;
        Shape sa = a.shape, sb = b.shape;
        y.node = tp->record(y.shape, [na, nb, ad, bd, sa, sb, os](Tape<T>& t, const Tensor<T>& g) {
            const T* gp = g.ptr();
            const Shape sta = broadcast_strides(sa, os.size());
            const Shape stb = broadcast_strides(sb, os.size());
            if (na >= 0) {
                Tensor<T> ga = Tensor<T>::zeros(sa);
                T* gap = ga.ptr();
                detail::broadcast_iterate(
                    os, sta, stb, [&](i64 lin, i64 oa, i64 ob) { gap[oa] += gp[lin] * (*bd)[ob]; });
                t.accumulate(na, std::move(ga));
            }
            if (nb >= 0) {
                Tensor<T> gb = Tensor<T>::zeros(sb);
                T* gbp = gb.ptr();
                detail::broadcast_iterate(
                    os, sta, stb, [&](i64 lin, i64 oa, i64 ob) { gbp[ob] += gp[lin] * (*ad)[oa]; });
                t.accumulate(nb, std::move(gb));
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const i64 n = x.numel();
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 i = 0; i < n; ++i) yp[i] = xp[i] * c;
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        y.node = x.tape->record(y.shape, [nx, c](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> gx = Tensor<T>::zeros(g.shape);
            const T* gp = g.ptr();
            T* gxp = gx.ptr();
            for (i64 i = 0; i < gx.numel(); ++i) gxp[i] = gp[i] * c;
            t.accumulate(nx, std::move(gx));
        });
    }
    return y;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const i64 n = x.numel();
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 i = 0; i < n; ++i) yp[i] = xp[i] + c;
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        y.node = x.tape->record(
            y.shape, [nx](Tape<T>& t, const Tensor<T>& g) { t.accumulate(nx, g.clone()); });
    }
    return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return add(a, scale(b, T(-1)));
}

// ---------------------------------------------------------------------------
// elementwise nonlinearities
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const i64 n = x.numel();
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 i = 0; i < n; ++i) yp[i] = xp[i] > T(0) ? xp[i] : T(0);
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        auto xd = x.store;
        y.node = x.tape->record(y.shape, [nx, xd](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> gx = Tensor<T>::zeros(g.shape);
            const T* gp = g.ptr();
            T* gxp = gx.ptr();
            for (i64 i = 0; i < gx.numel(); ++i) gxp[i] = (*xd)[i] > T(0) ? gp[i] : T(0);
            t.accumulate(nx, std::move(gx));
        });
    }
    return y;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.01)) {
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const i64 n = x.numel();
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 i = 0; i < n; ++i) yp[i] = xp[i] > T(0) ? xp[i] : slope * xp[i];
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        auto xd = x.store;
        y.node = x.tape->record(y.shape, [nx, xd, slope](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> gx = Tensor<T>::zeros(g.shape);
            const T* gp = g.ptr();
            T* gxp = gx.ptr();
            for (i64 i = 0; i < gx.numel(); ++i)
                gxp[i] = (*xd)[i] > T(0) ? gp[i] : slope * gp[i];
            t.accumulate(nx, std::move(gx));
        });
    }
    return y;
}

// tanh-approximation GELU
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const i64 n = x.numel();
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 i = 0; i < n; ++i) {
        double v = static_cast<double>(xp[i]);
        double u = std::tanh(kC * (v + kA * v * v * v));
        yp[i] = static_cast<T>(0.5 * v * (1.0 + u));
    }
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        auto xd = x.store;
        y.node = x.tape->record(y.shape, [nx, xd](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> gx = Tensor<T>::zeros(g.shape);
            const T* gp = g.ptr();
            T* gxp = gx.ptr();
            for (i64 i = 0; i < gx.numel(); ++i) {
                double v = static_cast<double>((*xd)[i]);
                double inner = kC * (v + kA * v * v * v);
                double u = std::tanh(inner);
                double dinner = kC * (1.0 + 3.0 * kA * v * v);
                double dydx = 0.5 * (1.0 + u) + 0.5 * v * (1.0 - u * u) * dinner;
                gxp[i] = static_cast<T>(static_cast<double>(gp[i]) * dydx);
            }
            t.accumulate(nx, std::move(gx));
        });
    }
    return y;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const i64 n = x.numel();
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 i = 0; i < n; ++i) {
        double v = static_cast<double>(xp[i]);
        yp[i] = static_cast<T>(v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                      : std::exp(v) / (1.0 + std::exp(v)));
    }
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        auto yd = y.store;
        y.node = x.tape->record(y.shape, [nx, yd](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> gx = Tensor<T>::zeros(g.shape);
            const T* gp = g.ptr();
            T* gxp = gx.ptr();
            for (i64 i = 0; i < gx.numel(); ++i) {
                const T s = (*yd)[i];
                gxp[i] = gp[i] * s * (T(1) - s);
            }
            t.accumulate(nx, std::move(gx));
        });
    }
    return y;
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& x) {
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const i64 n = x.numel();
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 i = 0; i < n; ++i) yp[i] = static_cast<T>(std::exp(static_cast<double>(xp[i])));
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        auto yd = y.store;
        y.node = x.tape->record(y.shape, [nx, yd](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> gx = Tensor<T>::zeros(g.shape);
            const T* gp = g.ptr();
            T* gxp = gx.ptr();
            for (i64 i = 0; i < gx.numel(); ++i) gxp[i] = gp[i] * (*yd)[i];
            t.accumulate(nx, std::move(gx));
        });
    }
    return y;
}

enum class Activation { kRelu, kLeakyRelu, kGelu };

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind, T slope = T(0.01)) {
    switch (kind) {
        case Activation::kRelu: return relu(x);
        case Activation::kLeakyRelu: return leaky_relu(x, slope);
        case Activation::kGelu: return gelu(x);
    }
    throw Error("unknown activation");
}

// ---------------------------------------------------------------------------
// structure: reshape / permute / concat
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel_of(shape) != x.numel())
        fail_shape("reshape ", shape_str(x.shape), " -> ", shape_str(shape),
                   " changes element count");
    Tensor<T> y;
    y.shape = std::move(shape);
    y.store = x.store;  // same data
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        Shape xs = x.shape;
        y.node = x.tape->record(y.shape, [nx, xs](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> gx;
            gx.shape = xs;
            gx.store = g.store;
            t.accumulate(nx, std::move(gx));
        });
    }
    return y;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
    const size_t r = x.shape.size();
    check(perm.size() == r, "permute: rank mismatch");
    Shape os(r);
    for (size_t i = 0; i < r; ++i) os[i] = x.shape[static_cast<size_t>(perm[i])];
    Tensor<T> y = Tensor<T>::zeros(os);
    const Shape xst = strides_of<int>(x.shape);
    Shape pst(r);  // stride in x for each output axis
    for (size_t i = 0; i < r; ++i) pst[i] = xst[static_cast<size_t>(perm[i])];
    const T* xp = x.ptr();
    T* yp = y.ptr();
    const i64 n = y.numel();
    Shape idx(r, 0);
    i64 off = 0;
    for (i64 lin = 0; lin < n; ++lin) {
        yp[lin] = xp[off];
        for (i64 d = static_cast<i64>(r) - 1; d >= 0; --d) {
            size_t du = static_cast<size_t>(d);
            if (++idx[du] < os[du]) {
                off += pst[du];
                break;
            }
            off -= pst[du] * (os[du] - 1);
            idx[du] = 0;
        }
    }
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        std::vector<int> inv(r);
        for (size_t i = 0; i < r; ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
        y.node = x.tape->record(y.shape, [nx, inv](Tape<T>& t, const Tensor<T>& g) {
            t.accumulate(nx, permute(g, inv));
        });
    }
    return y;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    check(!parts.empty(), "concat of zero tensors");
    const size_t r = parts[0].shape.size();
    Shape os = parts[0].shape;
    i64 total = 0;
    for (const auto& p : parts) {
        check(p.shape.size() == r, "concat: rank mismatch");
        for (size_t d = 0; d < r; ++d)
            if (static_cast<int>(d) != axis && p.shape[d] != os[d])
                fail_shape("concat: ", shape_str(p.shape), " vs ", shape_str(os), " on axis ",
                           axis);
        total += p.shape[static_cast<size_t>(axis)];
    }
    os[static_cast<size_t>(axis)] = total;
    Tensor<T> y = Tensor<T>::zeros(os);

    i64 outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= os[static_cast<size_t>(d)];
    for (size_t d = static_cast<size_t>(axis) + 1; d < r; ++d) inner *= os[d];
    T* yp = y.ptr();
    i64 off_axis = 0;
    for (const auto& p : parts) {
        const i64 pa = p.shape[static_cast<size_t>(axis)];
        const T* pp = p.ptr();
        for (i64 o = 0; o < outer; ++o)
            std::memcpy(yp + (o * total + off_axis) * inner, pp + o * pa * inner,
                        sizeof(T) * static_cast<size_t>(pa * inner));
        off_axis += pa;
    }

    Tape<T>* tp = nullptr;
    for (const auto& p : parts)
        if (p.tape) {
            check(!tp || tp == p.tape, "operands recorded on different tapes");
            tp = p.tape;
        }
    if (tp) {
        y.tape = tp;
        std::vector<int> nodes;
        std::vector<i64> sizes;
        for (const auto& p : parts) {
            nodes.push_back(p.node);
            sizes.push_back(p.shape[static_cast<size_t>(axis)]);
        }
        y.node =
            tp->record(y.shape, [nodes, sizes, outer, inner, total, os, axis](
                                    Tape<T>& t, const Tensor<T>& g) {
                const T* gp = g.ptr();
                i64 off = 0;
                for (size_t k = 0; k < nodes.size(); ++k) {
                    if (nodes[k] >= 0) {
                        Shape ps = os;
                        ps[static_cast<size_t>(axis)] = sizes[k];
                        Tensor<T> gk = Tensor<T>::zeros(ps);
                        T* gkp = gk.ptr();
                        for (i64 o = 0; o < outer; ++o)
                            std::memcpy(gkp + o * sizes[k] * inner,
                                        gp + (o * total + off) * inner,
                                        sizeof(T) * static_cast<size_t>(sizes[k] * inner));
                        t.accumulate(nodes[k], std::move(gk));
                    }
                    off += sizes[k];
                }
            });
    }
    return y;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, int axis) {
    const size_t r = x.shape.size();
    check(axis >= 0 && static_cast<size_t>(axis) < r, "sum_axis: bad axis");
    Shape os;
    for (size_t d = 0; d < r; ++d)
        if (static_cast<int>(d) != axis) os.push_back(x.shape[d]);
    if (os.empty()) os.push_back(1);
    i64 outer = 1, inner = 1;
    const i64 n_ax = x.shape[static_cast<size_t>(axis)];
    for (int d = 0; d < axis; ++d) outer *= x.shape[static_cast<size_t>(d)];
    for (size_t d = static_cast<size_t>(axis) + 1; d < r; ++d) inner *= x.shape[d];
    Tensor<T> y = Tensor<T>::zeros(os);
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 o = 0; o < outer; ++o)
        for (i64 a = 0; a < n_ax; ++a) {
            const T* src = xp + (o * n_ax + a) * inner;
            T* dst = yp + o * inner;
            for (i64 i = 0; i < inner; ++i) dst[i] += src[i];
        }
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        Shape xs = x.shape;
        y.node = x.tape->record(
            y.shape, [nx, xs, outer, inner, n_ax](Tape<T>& t, const Tensor<T>& g) {
                Tensor<T> gx = Tensor<T>::zeros(xs);
                const T* gp = g.ptr();
                T* gxp = gx.ptr();
                for (i64 o = 0; o < outer; ++o)
                    for (i64 a = 0; a < n_ax; ++a)
                        std::memcpy(gxp + (o * n_ax + a) * inner, gp + o * inner,
                                    sizeof(T) * static_cast<size_t>(inner));
                t.accumulate(nx, std::move(gx));
            });
    }
    return y;
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, int axis) {
    return scale(sum_axis(x, axis), T(1) / static_cast<T>(x.shape[static_cast<size_t>(axis)]));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    Tensor<T> y = Tensor<T>::zeros({1});
    const T* xp = x.ptr();
    T acc = T(0);
    for (i64 i = 0; i < x.numel(); ++i) acc += xp[i];
    (*y.store)[0] = acc;
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        Shape xs = x.shape;
        y.node = x.tape->record(y.shape, [nx, xs](Tape<T>& t, const Tensor<T>& g) {
            t.accumulate(nx, Tensor<T>::full(xs, g.item()));
        });
    }
    return y;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

// y[..., o] = sum_d x[..., d] * w[o, d] + b[o]; bias optional (empty tensor).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    check(w.shape.size() == 2, "linear: weight must be 2-d");
    const i64 din = w.shape[1], dout = w.shape[0];
    if (x.shape.empty() || x.shape.back() != din)
        fail_shape("linear: input ", shape_str(x.shape), " does not match weight ",
                   shape_str(w.shape));
    const bool has_bias = b.store != nullptr;
    if (has_bias && (b.shape.size() != 1 || b.shape[0] != dout))
        fail_shape("linear: bias ", shape_str(b.shape), " does not match weight ",
                   shape_str(w.shape));
    const i64 m = x.numel() / din;
    Shape os = x.shape;
    os.back() = dout;
    Tensor<T> y = Tensor<T>::zeros(os);
    gemm_nt(m, dout, din, x.ptr(), w.ptr(), y.ptr());
    if (has_bias) {
        T* yp = y.ptr();
        const T* bp = b.ptr();
        for (i64 i = 0; i < m; ++i)
            for (i64 o = 0; o < dout; ++o) yp[i * dout + o] += bp[o];
    }
    Tape<T>* tp = has_bias ? tape_of(x, w, b) : tape_of(x, w);
    if (tp) {
        y.tape = tp;
        const int nx = x.node, nw = w.node, nb = has_bias ? b.node : -1;
        auto xd = x.store, wd = w.store;
        Shape xs = x.shape;
        y.node = tp->record(y.shape, [nx, nw, nb, xd, wd, xs, m, din, dout](
                                         Tape<T>& t, const Tensor<T>& g) {
            const T* gp = g.ptr();
            if (nx >= 0) {
                Tensor<T> gx = Tensor<T>::zeros(xs);
                gemm_nn(m, din, dout, gp, wd->data(), gx.ptr());
                t.accumulate(nx, std::move(gx));
            }
            if (nw >= 0) {
                Tensor<T> gw = Tensor<T>::zeros({dout, din});
                gemm_tn(dout, din, m, gp, xd->data(), gw.ptr());
                t.accumulate(nw, std::move(gw));
            }
            if (nb >= 0) {
                Tensor<T> gb = Tensor<T>::zeros({dout});
                T* gbp = gb.ptr();
                for (i64 i = 0; i < m; ++i)
                    for (i64 o = 0; o < dout; ++o) gbp[o] += gp[i * dout + o];
                t.accumulate(nb, std::move(gb));
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w) {
    return linear(x, w, Tensor<T>{});
}

// Batched matmul: a is (G, M, K), b is (G, K, N), or (G, N, K) with trans_b.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_b = false) {
    check(a.shape.size() == 3 && b.shape.size() == 3, "bmm: operands must be 3-d");
    const i64 G = a.shape[0], M = a.shape[1], K = a.shape[2];
    const i64 N = trans_b ? b.shape[1] : b.shape[2];
    const i64 kb = trans_b ? b.shape[2] : b.shape[1];
    if (b.shape[0] != G || kb != K)
        fail_shape("bmm: ", shape_str(a.shape), " incompatible with ", shape_str(b.shape),
                   trans_b ? " (trans_b)" : "");
    Tensor<T> y = Tensor<T>::zeros({G, M, N});
    for (i64 g = 0; g < G; ++g) {
        const T* ap = a.ptr() + g * M * K;
        const T* bp = b.ptr() + g * K * N;
        T* yp = y.ptr() + g * M * N;
        if (trans_b)
            gemm_nt(M, N, K, ap, bp, yp);
        else
            gemm_nn(M, N, K, ap, bp, yp);
    }
    Tape<T>* tp = tape_of(a, b);
    if (tp) {
        y.tape = tp;
        const int na = a.node, nb = b.node;
        auto ad = a.store, bd = b.store;
        y.node = tp->record(y.shape, [na, nb, ad, bd, G, M, N, K, trans_b](
                                         Tape<T>& t, const Tensor<T>& g) {
            const T* gp = g.ptr();
            if (na >= 0) {
                Tensor<T> ga = Tensor<T>::zeros({G, M, K});
                for (i64 i = 0; i < G; ++i) {
                    // d a = g * op(b)^T
                    if (trans_b)
                        gemm_nn(M, K, N, gp + i * M * N, bd->data() + i * N * K,
                                ga.ptr() + i * M * K);
                    else
                        gemm_nt(M, K, N, gp + i * M * N, bd->data() + i * K * N,
                                ga.ptr() + i * M * K);
                }
                t.accumulate(na, std::move(ga));
            }
            if (nb >= 0) {
                Tensor<T> gb =
                    Tensor<T>::zeros(trans_b ? Shape{G, N, K} : Shape{G, K, N});
                for (i64 i = 0; i < G; ++i) {
                    if (trans_b)  // d b = g^T * a
                        gemm_tn(N, K, M, gp + i * M * N, ad->data() + i * M * K,
                                gb.ptr() + i * N * K);
                    else  // d b = a^T * g
                        gemm_tn(K, N, M, ad->data() + i * M * K, gp + i * M * N,
                                gb.ptr() + i * K * N);
                }
                t.accumulate(nb, std::move(gb));
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// softmax & losses
// ---------------------------------------------------------------------------

// softmax over the last axis, computed with max subtraction
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
    const i64 cols = x.shape.back();
    const i64 rows = x.numel() / cols;
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 r = 0; r < rows; ++r) {
        const T* xi = xp + r * cols;
        T* yi = yp + r * cols;
        T mx = xi[0];
        for (i64 c = 1; c < cols; ++c) mx = std::max(mx, xi[c]);
        double denom = 0;
        for (i64 c = 0; c < cols; ++c) {
            double e = std::exp(static_cast<double>(xi[c] - mx));
            yi[c] = static_cast<T>(e);
            denom += e;
        }
        for (i64 c = 0; c < cols; ++c) yi[c] = static_cast<T>(yi[c] / denom);
    }
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        auto yd = y.store;
        y.node = x.tape->record(y.shape, [nx, yd, rows, cols](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> gx = Tensor<T>::zeros(g.shape);
            const T* gp = g.ptr();
            T* gxp = gx.ptr();
            for (i64 r = 0; r < rows; ++r) {
                const T* yi = yd->data() + r * cols;
                const T* gi = gp + r * cols;
                T dot = T(0);
                for (i64 c = 0; c < cols; ++c) dot += gi[c] * yi[c];
                T* go = gxp + r * cols;
                for (i64 c = 0; c < cols; ++c) go[c] = yi[c] * (gi[c] - dot);
            }
            t.accumulate(nx, std::move(gx));
        });
    }
    return y;
}

// mean negative log-softmax of the true class; logits (B, C), labels in [0, C)
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    check(logits.shape.size() == 2, "cross_entropy: logits must be (B, C)");
    const i64 B = logits.shape[0], C = logits.shape[1];
    check(static_cast<i64>(labels.size()) == B, "cross_entropy: batch/label count mismatch");
    for (int l : labels)
        if (l < 0 || l >= C)
            throw Error("cross_entropy: label " + std::to_string(l) + " out of range [0, " +
                        std::to_string(C) + ")");
    Tensor<T> y = Tensor<T>::zeros({1});
    auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(B * C));
    const T* lp = logits.ptr();
    double loss = 0;
    for (i64 b = 0; b < B; ++b) {
        const T* row = lp + b * C;
        T mx = row[0];
        for (i64 c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double denom = 0;
        for (i64 c = 0; c < C; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
        const double lse = static_cast<double>(mx) + std::log(denom);
        loss += lse - static_cast<double>(row[labels[static_cast<size_t>(b)]]);
        for (i64 c = 0; c < C; ++c)
            (*probs)[static_cast<size_t>(b * C + c)] =
                static_cast<T>(std::exp(static_cast<double>(row[c]) - lse));
    }
    (*y.store)[0] = static_cast<T>(loss / static_cast<double>(B));
    if (logits.tape) {
        y.tape = logits.tape;
        const int nx = logits.node;
        y.node = logits.tape->record(
            y.shape, [nx, probs, labels, B, C](Tape<T>& t, const Tensor<T>& g) {
                const T gs = g.item() / static_cast<T>(B);
                Tensor<T> gx = Tensor<T>::zeros({B, C});
                T* gxp = gx.ptr();
                for (i64 b = 0; b < B; ++b)
                    for (i64 c = 0; c < C; ++c) {
                        T p = (*probs)[static_cast<size_t>(b * C + c)];
                        if (c == labels[static_cast<size_t>(b)]) p -= T(1);
                        gxp[b * C + c] = gs * p;
                    }
                t.accumulate(nx, std::move(gx));
            });
    }
    return y;
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape)
        fail_shape("mse: shape mismatch ", shape_str(a.shape), " vs ", shape_str(b.shape));
    const i64 n = a.numel();
    Tensor<T> y = Tensor<T>::zeros({1});
    const T* ap = a.ptr();
    const T* bp = b.ptr();
    double acc = 0;
    for (i64 i = 0; i < n; ++i) {
        const double d = static_cast<double>(ap[i]) - static_cast<double>(bp[i]);
        acc += d * d;
    }
    (*y.store)[0] = static_cast<T>(acc / static_cast<double>(n));
    Tape<T>* tp = tape_of(a, b);
    if (tp) {
        y.tape = tp;
        const int na = a.node, nb = b.node;
        auto ad = a.store, bd = b.store;
        Shape s = a.shape;
        y.node = tp->record(y.shape, [na, nb, ad, bd, s, n](Tape<T>& t, const Tensor<T>& g) {
            const T gs = g.item() * T(2) / static_cast<T>(n);
            if (na >= 0) {
                Tensor<T> ga = Tensor<T>::zeros(s);
                T* gp = ga.ptr();
                for (i64 i = 0; i < n; ++i) gp[i] = gs * ((*ad)[i] - (*bd)[i]);
                t.accumulate(na, std::move(ga));
            }
            if (nb >= 0) {
                Tensor<T> gb = Tensor<T>::zeros(s);
                T* gp = gb.ptr();
                for (i64 i = 0; i < n; ++i) gp[i] = gs * ((*bd)[i] - (*ad)[i]);
                t.accumulate(nb, std::move(gb));
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// row gather (relative-position bias lookup)
// ---------------------------------------------------------------------------

// out[i, :] = table[idx[i], :]
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<i64>& idx) {
    check(table.shape.size() == 2, "gather_rows: table must be 2-d");
    const i64 R = table.shape[0], H = table.shape[1];
    const i64 M = static_cast<i64>(idx.size());
    for (i64 i : idx) check(i >= 0 && i < R, "gather_rows: index out of range");
    Tensor<T> y = Tensor<T>::zeros({M, H});
    const T* tp_ = table.ptr();
    T* yp = y.ptr();
    for (i64 i = 0; i < M; ++i)
        std::memcpy(yp + i * H, tp_ + idx[static_cast<size_t>(i)] * H,
                    sizeof(T) * static_cast<size_t>(H));
    if (table.tape) {
        y.tape = table.tape;
        const int nt = table.node;
        y.node = table.tape->record(y.shape, [nt, idx, R, H, M](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T> gt = Tensor<T>::zeros({R, H});
            const T* gp = g.ptr();
            T* gtp = gt.ptr();
            for (i64 i = 0; i < M; ++i) {
                T* dst = gtp + idx[static_cast<size_t>(i)] * H;
                const T* src = gp + i * H;
                for (i64 h = 0; h < H; ++h) dst[h] += src[h];
            }
            t.accumulate(nt, std::move(gt));
        });
    }
    return y;
}

}  // namespace gcv
