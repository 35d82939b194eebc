#pragma once

#include <cmath>
#include <vector>

#include "genconvit/ops.hpp"

namespace gcv {

// Batch normalization over (B, H, W) per channel of an NCHW tensor. In training
// mode batch statistics are used and `running_mean` / `running_var` (plain,
// untaped tensors) are updated in place with the unbiased variance; in eval mode
// the running statistics are used.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                      T momentum = T(0.1), T eps = T(1e-5)) {
    check(x.shape.size() == 4, "batchnorm2d: input must be (B, C, H, W)");
    const i64 B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (gamma.shape != Shape{C} || beta.shape != Shape{C} || running_mean.shape != Shape{C} ||
        running_var.shape != Shape{C})
        fail_shape("batchnorm2d: parameter shape does not match ", C, " channels (input ",
                   shape_str(x.shape), ")");
    const i64 HW = H * W;
    const i64 n = B * HW;
    if (training && n <= 1)
        throw NumericError("batchnorm2d: variance is undefined over a single element per "
                           "channel (input " +
                           shape_str(x.shape) + ")");

    auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(C));
    auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(C));
    const T* xp = x.ptr();
    if (training) {
        parallel_for(C, [&](i64 c0, i64 c1) {
            for (i64 c = c0; c < c1; ++c) {
                double s = 0;
                for (i64 b = 0; b < B; ++b) {
                    const T* p = xp + (b * C + c) * HW;
                    for (i64 i = 0; i < HW; ++i) s += p[i];
                }
                const double m = s / static_cast<double>(n);
                double v = 0;
                for (i64 b = 0; b < B; ++b) {
                    const T* p = xp + (b * C + c) * HW;
                    for (i64 i = 0; i < HW; ++i) {
                        const double d = p[i] - m;
                        v += d * d;
                    }
                }
                v /= static_cast<double>(n);
                (*mean)[static_cast<size_t>(c)] = static_cast<T>(m);
                (*invstd)[static_cast<size_t>(c)] =
                    static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
            }
        });
        T* rm = running_mean.ptr();
        T* rv = running_var.ptr();
        for (i64 c = 0; c < C; ++c) {
            const size_t cu = static_cast<size_t>(c);
            const double is = (*invstd)[cu];
            const double var = 1.0 / (is * is) - static_cast<double>(eps);
            const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
            rm[c] = (T(1) - momentum) * rm[c] + momentum * (*mean)[cu];
            rv[c] = (T(1) - momentum) * rv[c] + momentum * static_cast<T>(unbiased);
        }
    } else {
        const T* rm = running_mean.ptr();
        const T* rv = running_var.ptr();
        for (i64 c = 0; c < C; ++c) {
            (*mean)[static_cast<size_t>(c)] = rm[c];
            (*invstd)[static_cast<size_t>(c)] = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>(rv[c]) + static_cast<double>(eps)));
        }
    }

    Tensor<T> y = Tensor<T>::zeros(x.shape);
    T* yp = y.ptr();
    const T* gp_ = gamma.ptr();
    const T* bp_ = beta.ptr();
    parallel_for(B * C, [&](i64 p0, i64 p1) {
        for (i64 p = p0; p < p1; ++p) {
            const i64 c = p % C;
            const size_t cu = static_cast<size_t>(c);
            const T* src = xp + p * HW;
            T* dst = yp + p * HW;
            const T m = (*mean)[cu], is = (*invstd)[cu], ga = gp_[c], be = bp_[c];
            for (i64 i = 0; i < HW; ++i) dst[i] = ga * (src[i] - m) * is + be;
        }
    });

    Tape<T>* tp = tape_of(x, gamma, beta);
    if (tp) {
        y.tape = tp;
        const int nx = x.node, ng = gamma.node, nb = beta.node;
        auto xd = x.store, gd = gamma.store;
        Shape xs = x.shape;
        y.node = tp->record(y.shape, [=](Tape<T>& t, const Tensor<T>& g) {
            const T* gp = g.ptr();
            if (ng >= 0 || nb >= 0) {
                Tensor<T> ggamma = Tensor<T>::zeros({C});
                Tensor<T> gbeta = Tensor<T>::zeros({C});
                T* ggp = ggamma.ptr();
                T* gbp = gbeta.ptr();
                parallel_for(C, [&](i64 c0, i64 c1) {
                    for (i64 c = c0; c < c1; ++c) {
                        const size_t cu = static_cast<size_t>(c);
                        const T m = (*mean)[cu], is = (*invstd)[cu];
                        double sg = 0, sgx = 0;
                        for (i64 b = 0; b < B; ++b) {
                            const T* go = gp + (b * C + c) * HW;
                            const T* xr = xd->data() + (b * C + c) * HW;
                            for (i64 i = 0; i < HW; ++i) {
                                sg += go[i];
                                sgx += static_cast<double>(go[i]) * ((xr[i] - m) * is);
                            }
                        }
                        ggp[c] = static_cast<T>(sgx);
                        gbp[c] = static_cast<T>(sg);
                    }
                });
                if (ng >= 0) t.accumulate(ng, std::move(ggamma));
                if (nb >= 0) t.accumulate(nb, std::move(gbeta));
            }
            if (nx >= 0) {
                Tensor<T> gx = Tensor<T>::zeros(xs);
                T* gxp = gx.ptr();
                if (training) {
                    parallel_for(C, [&](i64 c0, i64 c1) {
                        for (i64 c = c0; c < c1; ++c) {
                            const size_t cu = static_cast<size_t>(c);
                            const T m = (*mean)[cu], is = (*invstd)[cu];
                            const T ga = (*gd)[static_cast<size_t>(c)];
                            double sd = 0, sdx = 0;  // sums of dxhat and dxhat*xhat
                            for (i64 b = 0; b < B; ++b) {
                                const T* go = gp + (b * C + c) * HW;
                                const T* xr = xd->data() + (b * C + c) * HW;
                                for (i64 i = 0; i < HW; ++i) {
                                    const double dxh = static_cast<double>(go[i]) * ga;
                                    sd += dxh;
                                    sdx += dxh * ((xr[i] - m) * is);
                                }
                            }
                            sd /= static_cast<double>(n);
                            sdx /= static_cast<double>(n);
                            for (i64 b = 0; b < B; ++b) {
                                const T* go = gp + (b * C + c) * HW;
                                const T* xr = xd->data() + (b * C + c) * HW;
                                T* gxr = gxp + (b * C + c) * HW;
                                for (i64 i = 0; i < HW; ++i) {
                                    const double xh = (xr[i] - m) * is;
                                    const double dxh = static_cast<double>(go[i]) * ga;
                                    gxr[i] = static_cast<T>((dxh - sd - xh * sdx) * is);
                                }
                            }
                        }
                    });
                } else {
                    parallel_for(B * C, [&](i64 p0, i64 p1) {
                        for (i64 p = p0; p < p1; ++p) {
                            const i64 c = p % C;
                            const T k = (*gd)[static_cast<size_t>(c)] *
                                        (*invstd)[static_cast<size_t>(c)];
                            const T* go = gp + p * HW;
                            T* gxr = gxp + p * HW;
                            for (i64 i = 0; i < HW; ++i) gxr[i] = go[i] * k;
                        }
                    });
                }
                t.accumulate(nx, std::move(gx));
            }
        });
    }
    return y;
}

// Layer normalization over the last axis; gamma/beta have that axis's length.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    T eps = T(1e-6)) {
    check(!x.shape.empty(), "layernorm: scalar input");
    const i64 D = x.shape.back();
    if (gamma.shape != Shape{D} || beta.shape != Shape{D})
        fail_shape("layernorm: gamma/beta must be (", D, ") for input ", shape_str(x.shape));
    const i64 rows = x.numel() / D;

    auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
    auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const T* xp = x.ptr();
    const T* gp_ = gamma.ptr();
    const T* bp_ = beta.ptr();
    T* yp = y.ptr();
    parallel_for(rows, [&](i64 r0, i64 r1) {
        for (i64 r = r0; r < r1; ++r) {
            const T* xi = xp + r * D;
            double s = 0;
            for (i64 d = 0; d < D; ++d) s += xi[d];
            const double m = s / static_cast<double>(D);
            double v = 0;
            for (i64 d = 0; d < D; ++d) {
                const double dv = xi[d] - m;
                v += dv * dv;
            }
            const double is = 1.0 / std::sqrt(v / static_cast<double>(D) +
                                              static_cast<double>(eps));
            (*mean)[static_cast<size_t>(r)] = static_cast<T>(m);
            (*invstd)[static_cast<size_t>(r)] = static_cast<T>(is);
            T* yi = yp + r * D;
            for (i64 d = 0; d < D; ++d)
                yi[d] = gp_[d] * static_cast<T>((xi[d] - m) * is) + bp_[d];
        }
    });

    Tape<T>* tp = tape_of(x, gamma, beta);
    if (tp) {
        y.tape = tp;
        const int nx = x.node, ng = gamma.node, nb = beta.node;
        auto xd = x.store, gd = gamma.store;
        Shape xs = x.shape;
        y.node = tp->record(y.shape, [=](Tape<T>& t, const Tensor<T>& g) {
            const T* gp = g.ptr();
            if (ng >= 0 || nb >= 0) {
                Tensor<T> ggamma = Tensor<T>::zeros({D});
                Tensor<T> gbeta = Tensor<T>::zeros({D});
                T* ggp = ggamma.ptr();
                T* gbp = gbeta.ptr();
                for (i64 r = 0; r < rows; ++r) {
                    const size_t ru = static_cast<size_t>(r);
                    const T m = (*mean)[ru], is = (*invstd)[ru];
                    const T* go = gp + r * D;
                    const T* xi = xd->data() + r * D;
                    for (i64 d = 0; d < D; ++d) {
                        ggp[d] += go[d] * ((xi[d] - m) * is);
                        gbp[d] += go[d];
                    }
                }
                if (ng >= 0) t.accumulate(ng, std::move(ggamma));
                if (nb >= 0) t.accumulate(nb, std::move(gbeta));
            }
            if (nx >= 0) {
                Tensor<T> gx = Tensor<T>::zeros(xs);
                T* gxp = gx.ptr();
                parallel_for(rows, [&](i64 r0, i64 r1) {
                    for (i64 r = r0; r < r1; ++r) {
                        const size_t ru = static_cast<size_t>(r);
                        const T m = (*mean)[ru], is = (*invstd)[ru];
                        const T* go = gp + r * D;
                        const T* xi = xd->data() + r * D;
                        double sd = 0, sdx = 0;
                        for (i64 d = 0; d < D; ++d) {
                            const double dxh =
                                static_cast<double>(go[d]) * (*gd)[static_cast<size_t>(d)];
                            sd += dxh;
                            sdx += dxh * ((xi[d] - m) * is);
                        }
                        sd /= static_cast<double>(D);
                        sdx /= static_cast<double>(D);
                        T* gxr = gxp + r * D;
                        for (i64 d = 0; d < D; ++d) {
                            const double xh = (xi[d] - m) * is;
                            const double dxh =
                                static_cast<double>(go[d]) * (*gd)[static_cast<size_t>(d)];
                            gxr[d] = static_cast<T>((dxh - sd - xh * sdx) * is);
                        }
                    }
                });
                t.accumulate(nx, std::move(gx));
            }
        });
    }
    return y;
}

// Layer normalization over the channel axis of an NCHW tensor.
template <typename T>
Tensor<T> layernorm_cf(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       T eps = T(1e-6)) {
    check(x.shape.size() == 4, "layernorm_cf: input must be (B, C, H, W)");
    const i64 B = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
    if (gamma.shape != Shape{C} || beta.shape != Shape{C})
        fail_shape("layernorm_cf: gamma/beta must be (", C, ") for input ", shape_str(x.shape));
    const i64 rows = B * HW;  // one normalization per (b, h, w)

    auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
    auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const T* xp = x.ptr();
    const T* gp_ = gamma.ptr();
    const T* bp_ = beta.ptr();
    T* yp = y.ptr();
    parallel_for(rows, [&](i64 r0, i64 r1) {
        for (i64 r = r0; r < r1; ++r) {
            const i64 b = r / HW, s = r % HW;
            const T* xi = xp + b * C * HW + s;
            double mm = 0;
            for (i64 c = 0; c < C; ++c) mm += xi[c * HW];
            mm /= static_cast<double>(C);
            double v = 0;
            for (i64 c = 0; c < C; ++c) {
                const double dv = xi[c * HW] - mm;
                v += dv * dv;
            }
            const double is = 1.0 / std::sqrt(v / static_cast<double>(C) +
                                              static_cast<double>(eps));
            (*mean)[static_cast<size_t>(r)] = static_cast<T>(mm);
            (*invstd)[static_cast<size_t>(r)] = static_cast<T>(is);
            T* yi = yp + b * C * HW + s;
            for (i64 c = 0; c < C; ++c)
                yi[c * HW] = gp_[c] * static_cast<T>((xi[c * HW] - mm) * is) + bp_[c];
        }
    });

    Tape<T>* tp = tape_of(x, gamma, beta);
    if (tp) {
        y.tape = tp;
        const int nx = x.node, ng = gamma.node, nb = beta.node;
        auto xd = x.store, gd = gamma.store;
        Shape xs = x.shape;
        y.node = tp->record(y.shape, [=](Tape<T>& t, const Tensor<T>& g) {
            const T* gp = g.ptr();
            if (ng >= 0 || nb >= 0) {
                Tensor<T> ggamma = Tensor<T>::zeros({C});
                Tensor<T> gbeta = Tensor<T>::zeros({C});
                T* ggp = ggamma.ptr();
                T* gbp = gbeta.ptr();
                for (i64 r = 0; r < rows; ++r) {
                    const i64 b = r / HW, s = r % HW;
                    const size_t ru = static_cast<size_t>(r);
                    const T m = (*mean)[ru], is = (*invstd)[ru];
                    const T* go = gp + b * C * HW + s;
                    const T* xi = xd->data() + b * C * HW + s;
                    for (i64 c = 0; c < C; ++c) {
                        ggp[c] += go[c * HW] * ((xi[c * HW] - m) * is);
                        gbp[c] += go[c * HW];
                    }
                }
                if (ng >= 0) t.accumulate(ng, std::move(ggamma));
                if (nb >= 0) t.accumulate(nb, std::move(gbeta));
            }
            if (nx >= 0) {
                Tensor<T> gx = Tensor<T>::zeros(xs);
                T* gxp = gx.ptr();
                parallel_for(rows, [&](i64 r0, i64 r1) {
                    for (i64 r = r0; r < r1; ++r) {
                        const i64 b = r / HW, s = r % HW;
                        const size_t ru = static_cast<size_t>(r);
                        const T m = (*mean)[ru], is = (*invstd)[ru];
                        const T* go = gp + b * C * HW + s;
                        const T* xi = xd->data() + b * C * HW + s;
                        double sd = 0, sdx = 0;
                        for (i64 c = 0; c < C; ++c) {
                            const double dxh = static_cast<double>(go[c * HW]) *
                                               (*gd)[static_cast<size_t>(c)];
                            sd += dxh;
                            sdx += dxh * ((xi[c * HW] - m) * is);
                        }
                        sd /= static_cast<double>(C);
                        sdx /= static_cast<double>(C);
                        T* gxr = gxp + b * C * HW + s;
                        for (i64 c = 0; c < C; ++c) {
                            const double xh = (xi[c * HW] - m) * is;
                            const double dxh = static_cast<double>(go[c * HW]) *
                                               (*gd)[static_cast<size_t>(c)];
                            gxr[c * HW] = static_cast<T>((dxh - sd - xh * sdx) * is);
                        }
                    }
                });
                t.accumulate(nx, std::move(gx));
            }
        });
    }
    return y;
}

}  // namespace gcv
