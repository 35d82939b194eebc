#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "common.hpp"

namespace gcv::data {

using u8 = std::uint8_t;

// 8-bit interleaved image, row-major, c channels per pixel (RGB when c == 3).
struct Image {
    i64 w = 0;
    i64 h = 0;
    i64 c = 3;
    std::vector<u8> pix;

    Image() = default;
    Image(i64 w_, i64 h_, i64 c_ = 3) : w(w_), h(h_), c(c_), pix(static_cast<size_t>(w_ * h_ * c_), 0) {}

    u8& at(i64 x, i64 y, i64 ch) { return pix[static_cast<size_t>((y * w + x) * c + ch)]; }
    u8 at(i64 x, i64 y, i64 ch) const { return pix[static_cast<size_t>((y * w + x) * c + ch)]; }
    i64 numel() const { return w * h * c; }

    bool operator==(const Image& o) const {
        return w == o.w && h == o.h && c == o.c && pix == o.pix;
    }
};

inline u8 clamp_u8(double v) {
    return static_cast<u8>(std::clamp(std::lround(v), 0l, 255l));
}

// Reflect index into [0, n) without repeating the border sample (…2 1 | 0 1 2 … n-1 | n-2 n-3…).
inline i64 reflect101(i64 i, i64 n) {
    if (n == 1) return 0;
    const i64 period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

// Bilinear sample with reflect-101 border handling; x, y in pixel coordinates.
inline double sample_bilinear(const Image& img, double x, double y, i64 ch) {
    const i64 x0 = static_cast<i64>(std::floor(x));
    const i64 y0 = static_cast<i64>(std::floor(y));
    const double fx = x - static_cast<double>(x0);
    const double fy = y - static_cast<double>(y0);
    const i64 xa = reflect101(x0, img.w), xb = reflect101(x0 + 1, img.w);
    const i64 ya = reflect101(y0, img.h), yb = reflect101(y0 + 1, img.h);
    const double v00 = img.at(xa, ya, ch), v10 = img.at(xb, ya, ch);
    const double v01 = img.at(xa, yb, ch), v11 = img.at(xb, yb, ch);
    return (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
}

}  // namespace gcv::data
