#pragma once

#include <cstring>

#include "genconvit/ops.hpp"

namespace gcv {

// Spatial helpers on (B, H, W, C) activations.

// out[b, h, w, c] = x[b, (h - sh) mod H, (w - sw) mod W, c]
template <typename T>
Tensor<T> roll_hw(const Tensor<T>& x, i64 sh, i64 sw) {
    check(x.shape.size() == 4, "roll_hw: expected (B, H, W, C)");
    const i64 B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    const auto wrap = [](i64 v, i64 n) { return ((v % n) + n) % n; };
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 b = 0; b < B; ++b)
        for (i64 h = 0; h < H; ++h) {
            const i64 sh_src = wrap(h - sh, H);
            for (i64 w = 0; w < W; ++w) {
                const i64 sw_src = wrap(w - sw, W);
                std::memcpy(yp + ((b * H + h) * W + w) * C,
                            xp + ((b * H + sh_src) * W + sw_src) * C,
                            sizeof(T) * static_cast<size_t>(C));
            }
        }
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        y.node = x.tape->record(y.shape, [nx, sh, sw](Tape<T>& t, const Tensor<T>& g) {
            t.accumulate(nx, roll_hw(g, -sh, -sw));
        });
    }
    return y;
}

// zero-pad bottom/right to (H + ph, W + pw)
template <typename T>
Tensor<T> pad_hw(const Tensor<T>& x, i64 ph, i64 pw) {
    check(x.shape.size() == 4, "pad_hw: expected (B, H, W, C)");
    check(ph >= 0 && pw >= 0, "pad_hw: negative padding");
    if (ph == 0 && pw == 0) return x;
    const i64 B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    Tensor<T> y = Tensor<T>::zeros({B, H + ph, W + pw, C});
    const T* xp = x.ptr();
    T* yp = y.ptr();
    const i64 Wo = W + pw;
    for (i64 b = 0; b < B; ++b)
        for (i64 h = 0; h < H; ++h)
            std::memcpy(yp + ((b * (H + ph) + h) * Wo) * C, xp + ((b * H + h) * W) * C,
                        sizeof(T) * static_cast<size_t>(W * C));
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        y.node = x.tape->record(y.shape, [nx, H, W](Tape<T>& t, const Tensor<T>& g) {
            t.accumulate(nx, crop_hw(g, H, W));
        });
    }
    return y;
}

// keep the top-left (H, W) region
template <typename T>
Tensor<T> crop_hw(const Tensor<T>& x, i64 H, i64 W) {
    check(x.shape.size() == 4, "crop_hw: expected (B, H, W, C)");
    const i64 B = x.shape[0], Hi = x.shape[1], Wi = x.shape[2], C = x.shape[3];
    check(H <= Hi && W <= Wi, "crop_hw: region larger than input");
    if (H == Hi && W == Wi) return x;
    Tensor<T> y = Tensor<T>::zeros({B, H, W, C});
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 b = 0; b < B; ++b)
        for (i64 h = 0; h < H; ++h)
            std::memcpy(yp + ((b * H + h) * W) * C, xp + ((b * Hi + h) * Wi) * C,
                        sizeof(T) * static_cast<size_t>(W * C));
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        const i64 ph = Hi - H, pw = Wi - W;
        y.node = x.tape->record(y.shape, [nx, ph, pw](Tape<T>& t, const Tensor<T>& g) {
            t.accumulate(nx, pad_hw(g, ph, pw));
        });
    }
    return y;
}

// (B, H, W, C) -> (B * nh * nw, win * win, C); H and W must be multiples of win
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, i64 win) {
    check(x.shape.size() == 4, "window_partition: expected (B, H, W, C)");
    const i64 B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    if (H % win != 0 || W % win != 0)
        fail_shape("window_partition: ", shape_str(x.shape), " not divisible by window ", win);
    const i64 nh = H / win, nw = W / win;
    Tensor<T> y = Tensor<T>::zeros({B * nh * nw, win * win, C});
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 b = 0; b < B; ++b)
        for (i64 wh = 0; wh < nh; ++wh)
            for (i64 ww = 0; ww < nw; ++ww) {
                T* dst = yp + ((b * nh + wh) * nw + ww) * win * win * C;
                for (i64 r = 0; r < win; ++r)
                    std::memcpy(dst + r * win * C,
                                xp + ((b * H + wh * win + r) * W + ww * win) * C,
                                sizeof(T) * static_cast<size_t>(win * C));
            }
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        y.node = x.tape->record(y.shape, [nx, win, B, H, W](Tape<T>& t, const Tensor<T>& g) {
            t.accumulate(nx, window_reverse(g, win, B, H, W));
        });
    }
    return y;
}

// inverse of window_partition
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& x, i64 win, i64 B, i64 H, i64 W) {
    check(x.shape.size() == 3, "window_reverse: expected (nWin, win*win, C)");
    const i64 nh = H / win, nw = W / win;
    const i64 C = x.shape[2];
    if (x.shape[0] != B * nh * nw || x.shape[1] != win * win)
        fail_shape("window_reverse: ", shape_str(x.shape), " does not fold to (", B, ", ", H,
                   ", ", W, ", ", C, ") with window ", win);
    Tensor<T> y = Tensor<T>::zeros({B, H, W, C});
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (i64 b = 0; b < B; ++b)
        for (i64 wh = 0; wh < nh; ++wh)
            for (i64 ww = 0; ww < nw; ++ww) {
                const T* src = xp + ((b * nh + wh) * nw + ww) * win * win * C;
                for (i64 r = 0; r < win; ++r)
                    std::memcpy(yp + ((b * H + wh * win + r) * W + ww * win) * C,
                                src + r * win * C, sizeof(T) * static_cast<size_t>(win * C));
            }
    if (x.tape) {
        y.tape = x.tape;
        const int nx = x.node;
        y.node = x.tape->record(y.shape, [nx, win](Tape<T>& t, const Tensor<T>& g) {
            t.accumulate(nx, window_partition(g, win));
        });
    }
    return y;
}

}  // namespace gcv
