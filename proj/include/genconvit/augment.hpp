#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "common.hpp"
#include "image.hpp"
#include "rng.hpp"

namespace gcv::data {

// Parameter ranges follow the usual albumentations-style defaults; each range
// is sampled uniformly when the transform fires.
struct AugmentConfig {
    double rate = 0.9;    // probability that a sample is augmented at all
    double p_each = 0.5;  // per-transform inclusion probability once augmenting

    double noise_var_lo = 10.0, noise_var_hi = 50.0;
    double shift_limit = 0.0625, scale_limit = 0.1, rotate_limit = 45.0;
    double clahe_clip_lo = 1.0, clahe_clip_hi = 4.0;
    i64 clahe_tiles = 8;
    double sharpen_alpha_lo = 0.2, sharpen_alpha_hi = 0.5;
    double sharpen_light_lo = 0.5, sharpen_light_hi = 1.0;
    double emboss_alpha_lo = 0.2, emboss_alpha_hi = 0.5;
    double emboss_strength_lo = 0.2, emboss_strength_hi = 0.7;
    double brightness_limit = 0.2, contrast_limit = 0.2;
    double hue_limit = 20.0, sat_limit = 30.0, val_limit = 20.0;

    void validate() const {
        if (rate < 0 || rate > 1) throw ConfigError("augment rate must lie in [0,1]");
        if (p_each < 0 || p_each > 1) throw ConfigError("augment p_each must lie in [0,1]");
        if (clahe_tiles <= 0) throw ConfigError("augment clahe_tiles must be positive");
    }
};

namespace aug {

// 90-degree counter-clockwise rotation; swaps dimensions.
inline Image rot90(const Image& in) {
    Image out(in.h, in.w, in.c);
    for (i64 y = 0; y < out.h; ++y)
        for (i64 x = 0; x < out.w; ++x)
            for (i64 ch = 0; ch < in.c; ++ch) out.at(x, y, ch) = in.at(in.w - 1 - y, x, ch);
    return out;
}

inline Image rot180(const Image& in) {
    Image out(in.w, in.h, in.c);
    for (i64 y = 0; y < in.h; ++y)
        for (i64 x = 0; x < in.w; ++x)
            for (i64 ch = 0; ch < in.c; ++ch)
                out.at(x, y, ch) = in.at(in.w - 1 - x, in.h - 1 - y, ch);
    return out;
}

// k quarter turns. Odd k on a non-square image would change the dimensions,
// which augmented samples must preserve, so it degrades to the nearest even turn.
inline Image rotate90(const Image& in, i64 k) {
    k = ((k % 4) + 4) % 4;
    if (in.w != in.h && (k % 2) == 1) k = (k + 1) % 4;
    Image out = in;
    for (i64 i = 0; i < k; ++i) out = rot90(out);
    return out;
}

inline Image transpose(const Image& in) {
    if (in.w != in.h) return in;  // dimension-preserving contract
    Image out(in.w, in.h, in.c);
    for (i64 y = 0; y < in.h; ++y)
        for (i64 x = 0; x < in.w; ++x)
            for (i64 ch = 0; ch < in.c; ++ch) out.at(x, y, ch) = in.at(y, x, ch);
    return out;
}

inline Image hflip(const Image& in) {
    Image out(in.w, in.h, in.c);
    for (i64 y = 0; y < in.h; ++y)
        for (i64 x = 0; x < in.w; ++x)
            for (i64 ch = 0; ch < in.c; ++ch) out.at(x, y, ch) = in.at(in.w - 1 - x, y, ch);
    return out;
}

inline Image vflip(const Image& in) {
    Image out(in.w, in.h, in.c);
    for (i64 y = 0; y < in.h; ++y)
        for (i64 x = 0; x < in.w; ++x)
            for (i64 ch = 0; ch < in.c; ++ch) out.at(x, y, ch) = in.at(x, in.h - 1 - y, ch);
    return out;
}

inline Image gauss_noise(const Image& in, double sigma, Rng& rng) {
    Image out(in.w, in.h, in.c);
    for (size_t i = 0; i < in.pix.size(); ++i)
        out.pix[i] = clamp_u8(static_cast<double>(in.pix[i]) + normal(rng) * sigma);
    return out;
}

// Inverse-mapped affine warp: rotate by `deg` around the center, scale, then
// translate by (shift_x, shift_y) fractions of the image size.
inline Image shift_scale_rotate(const Image& in, double shift_x, double shift_y, double scale,
                                double deg) {
    Image out(in.w, in.h, in.c);
    const double th = deg * 3.14159265358979323846 / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const double cx = (static_cast<double>(in.w) - 1) / 2.0;
    const double cy = (static_cast<double>(in.h) - 1) / 2.0;
    const double tx = shift_x * static_cast<double>(in.w);
    const double ty = shift_y * static_cast<double>(in.h);
    for (i64 y = 0; y < in.h; ++y)
        for (i64 x = 0; x < in.w; ++x) {
            const double dx = static_cast<double>(x) - cx - tx;
            const double dy = static_cast<double>(y) - cy - ty;
            const double sx = (c * dx + s * dy) / scale + cx;
            const double sy = (-s * dx + c * dy) / scale + cy;
            for (i64 ch = 0; ch < in.c; ++ch)
                out.at(x, y, ch) = clamp_u8(sample_bilinear(in, sx, sy, ch));
        }
    return out;
}

namespace detail {

inline void rgb_to_ycbcr(double r, double g, double b, double& y, double& cb, double& cr) {
    y = 0.299 * r + 0.587 * g + 0.114 * b;
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
}

inline void ycbcr_to_rgb(double y, double cb, double cr, double& r, double& g, double& b) {
    r = y + 1.402 * (cr - 128.0);
    g = y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0);
    b = y + 1.772 * (cb - 128.0);
}

// Clipped-histogram equalization LUT for one tile.
inline std::array<u8, 256> clahe_lut(const std::array<i64, 256>& hist, i64 npix, double clip) {
    std::array<i64, 256> h = hist;
    const i64 limit = std::max<i64>(1, static_cast<i64>(clip * static_cast<double>(npix) / 256.0));
    i64 excess = 0;
    for (auto& v : h)
        if (v > limit) {
            excess += v - limit;
            v = limit;
        }
    const i64 bonus = excess / 256;
    i64 rem = excess % 256;
    for (i64 i = 0; i < 256; ++i) {
        h[static_cast<size_t>(i)] += bonus;
        if (i < rem) ++h[static_cast<size_t>(i)];
    }
    std::array<u8, 256> lut{};
    i64 cum = 0;
    for (i64 i = 0; i < 256; ++i) {
        cum += h[static_cast<size_t>(i)];
        lut[static_cast<size_t>(i)] = clamp_u8(static_cast<double>(cum) * 255.0 / static_cast<double>(npix));
    }
    return lut;
}

}  // namespace detail

// Contrast-limited adaptive histogram equalization on the luma channel, with
// bilinear interpolation between neighbouring tile mappings.
inline Image clahe(const Image& in, double clip, i64 tiles) {
    const i64 tw = std::max<i64>(1, (in.w + tiles - 1) / tiles);
    const i64 th = std::max<i64>(1, (in.h + tiles - 1) / tiles);
    const i64 nx = (in.w + tw - 1) / tw;
    const i64 ny = (in.h + th - 1) / th;

    std::vector<u8> luma(static_cast<size_t>(in.w * in.h));
    for (i64 y = 0; y < in.h; ++y)
        for (i64 x = 0; x < in.w; ++x) {
            double yy, cb, cr;
            detail::rgb_to_ycbcr(in.at(x, y, 0), in.at(x, y, 1), in.at(x, y, 2), yy, cb, cr);
            luma[static_cast<size_t>(y * in.w + x)] = clamp_u8(yy);
        }

    std::vector<std::array<u8, 256>> luts(static_cast<size_t>(nx * ny));
    for (i64 ty = 0; ty < ny; ++ty)
        for (i64 tx = 0; tx < nx; ++tx) {
            const i64 x0 = tx * tw, x1 = std::min(in.w, x0 + tw);
            const i64 y0 = ty * th, y1 = std::min(in.h, y0 + th);
            std::array<i64, 256> hist{};
            for (i64 y = y0; y < y1; ++y)
                for (i64 x = x0; x < x1; ++x) ++hist[luma[static_cast<size_t>(y * in.w + x)]];
            luts[static_cast<size_t>(ty * nx + tx)] =
                detail::clahe_lut(hist, (x1 - x0) * (y1 - y0), clip);
        }

    Image out(in.w, in.h, in.c);
    for (i64 y = 0; y < in.h; ++y)
        for (i64 x = 0; x < in.w; ++x) {
            // Position among tile centers.
            const double gx = (static_cast<double>(x) + 0.5) / static_cast<double>(tw) - 0.5;
            const double gy = (static_cast<double>(y) + 0.5) / static_cast<double>(th) - 0.5;
            const i64 tx0 = std::clamp<i64>(static_cast<i64>(std::floor(gx)), 0, nx - 1);
            const i64 ty0 = std::clamp<i64>(static_cast<i64>(std::floor(gy)), 0, ny - 1);
            const i64 tx1 = std::min(tx0 + 1, nx - 1);
            const i64 ty1 = std::min(ty0 + 1, ny - 1);
            const double fx = std::clamp(gx - static_cast<double>(tx0), 0.0, 1.0);
            const double fy = std::clamp(gy - static_cast<double>(ty0), 0.0, 1.0);

            const u8 v = luma[static_cast<size_t>(y * in.w + x)];
            const double m00 = luts[static_cast<size_t>(ty0 * nx + tx0)][v];
            const double m10 = luts[static_cast<size_t>(ty0 * nx + tx1)][v];
            const double m01 = luts[static_cast<size_t>(ty1 * nx + tx0)][v];
            const double m11 = luts[static_cast<size_t>(ty1 * nx + tx1)][v];
            const double eq = (1 - fy) * ((1 - fx) * m00 + fx * m10) + fy * ((1 - fx) * m01 + fx * m11);

            double yy, cb, cr, r, g, b;
            detail::rgb_to_ycbcr(in.at(x, y, 0), in.at(x, y, 1), in.at(x, y, 2), yy, cb, cr);
            detail::ycbcr_to_rgb(eq, cb, cr, r, g, b);
            out.at(x, y, 0) = clamp_u8(r);
            out.at(x, y, 1) = clamp_u8(g);
            out.at(x, y, 2) = clamp_u8(b);
        }
    return out;
}

inline Image convolve3x3(const Image& in, const std::array<double, 9>& k) {
    Image out(in.w, in.h, in.c);
    for (i64 y = 0; y < in.h; ++y)
        for (i64 x = 0; x < in.w; ++x)
            for (i64 ch = 0; ch < in.c; ++ch) {
                double acc = 0;
                for (i64 dy = -1; dy <= 1; ++dy)
                    for (i64 dx = -1; dx <= 1; ++dx)
                        acc += k[static_cast<size_t>((dy + 1) * 3 + dx + 1)] *
                               in.at(reflect101(x + dx, in.w), reflect101(y + dy, in.h), ch);
                out.at(x, y, ch) = clamp_u8(acc);
            }
    return out;
}

// Blend of identity and a Laplacian-style sharpening kernel.
inline Image sharpen(const Image& in, double alpha, double lightness) {
    std::array<double, 9> k{};
    for (auto& v : k) v = -alpha;
    k[4] = (1.0 - alpha) + alpha * (8.0 + lightness);
    return convolve3x3(in, k);
}

// Blend of identity and a diagonal emboss kernel.
inline Image emboss(const Image& in, double alpha, double strength) {
    const std::array<double, 9> e{-1.0 - strength, -strength, 0.0, -strength, 1.0,
                                  strength,        0.0,       strength, 1.0 + strength};
    std::array<double, 9> k{};
    for (size_t i = 0; i < 9; ++i) k[i] = alpha * e[i];
    k[4] = (1.0 - alpha) + alpha * e[4];
    return convolve3x3(in, k);
}

inline Image brightness_contrast(const Image& in, double alpha, double beta) {
    Image out(in.w, in.h, in.c);
    for (size_t i = 0; i < in.pix.size(); ++i)
        out.pix[i] = clamp_u8(static_cast<double>(in.pix[i]) * alpha + beta * 255.0);
    return out;
}

namespace detail {

// OpenCV-style HSV with H in [0, 180) and S, V in [0, 255].
inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx <= 0 ? 0 : d / mx * 255.0;
    if (d <= 0) {
        h = 0;
        return;
    }
    double deg;
    if (mx == r)
        deg = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
    else if (mx == g)
        deg = 60.0 * ((b - r) / d + 2.0);
    else
        deg = 60.0 * ((r - g) / d + 4.0);
    h = deg / 2.0;
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double deg = h * 2.0;
    const double sat = s / 255.0;
    const double c = v * sat;
    const double hp = deg / 60.0;
    const double xx = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    if (hp < 1) {
        r1 = c; g1 = xx;
    } else if (hp < 2) {
        r1 = xx; g1 = c;
    } else if (hp < 3) {
        g1 = c; b1 = xx;
    } else if (hp < 4) {
        g1 = xx; b1 = c;
    } else if (hp < 5) {
        r1 = xx; b1 = c;
    } else {
        r1 = c; b1 = xx;
    }
    const double m = v - c;
    r = r1 + m;
    g = g1 + m;
    b = b1 + m;
}

}  // namespace detail

inline Image hue_saturation_value(const Image& in, double dh, double ds, double dv) {
    Image out(in.w, in.h, in.c);
    for (i64 y = 0; y < in.h; ++y)
        for (i64 x = 0; x < in.w; ++x) {
            double h, s, v;
            detail::rgb_to_hsv(in.at(x, y, 0), in.at(x, y, 1), in.at(x, y, 2), h, s, v);
            h = std::fmod(h + dh + 180.0, 180.0);
            s = std::clamp(s + ds, 0.0, 255.0);
            v = std::clamp(v + dv, 0.0, 255.0);
            double r, g, b;
            detail::hsv_to_rgb(h, s, v, r, g, b);
            out.at(x, y, 0) = clamp_u8(r);
            out.at(x, y, 1) = clamp_u8(g);
            out.at(x, y, 2) = clamp_u8(b);
        }
    return out;
}

}  // namespace aug

// Applies the transform stack in a fixed order. One outer draw decides whether
// the sample is augmented at all; each transform then fires independently.
// rate == 0 returns the input bitwise unchanged.
inline Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    if (img.c != 3) throw DataError("augment: expected RGB image");
    if (!bernoulli(rng, cfg.rate)) return img;

    Image out = img;
    if (bernoulli(rng, cfg.p_each)) out = aug::rotate90(out, uniform_int(rng, 0, 3));
    if (bernoulli(rng, cfg.p_each)) out = aug::transpose(out);
    if (bernoulli(rng, cfg.p_each)) out = aug::hflip(out);
    if (bernoulli(rng, cfg.p_each)) out = aug::vflip(out);
    if (bernoulli(rng, cfg.p_each)) {
        const double sigma = std::sqrt(uniform(rng, cfg.noise_var_lo, cfg.noise_var_hi));
        out = aug::gauss_noise(out, sigma, rng);
    }
    if (bernoulli(rng, cfg.p_each)) {
        const double sx = uniform(rng, -cfg.shift_limit, cfg.shift_limit);
        const double sy = uniform(rng, -cfg.shift_limit, cfg.shift_limit);
        const double sc = 1.0 + uniform(rng, -cfg.scale_limit, cfg.scale_limit);
        const double deg = uniform(rng, -cfg.rotate_limit, cfg.rotate_limit);
        out = aug::shift_scale_rotate(out, sx, sy, sc, deg);
    }
    if (bernoulli(rng, cfg.p_each))
        out = aug::clahe(out, uniform(rng, cfg.clahe_clip_lo, cfg.clahe_clip_hi), cfg.clahe_tiles);
    if (bernoulli(rng, cfg.p_each)) {
        const double a = uniform(rng, cfg.sharpen_alpha_lo, cfg.sharpen_alpha_hi);
        const double l = uniform(rng, cfg.sharpen_light_lo, cfg.sharpen_light_hi);
        out = aug::sharpen(out, a, l);
    }
    if (bernoulli(rng, cfg.p_each)) {
        const double a = uniform(rng, cfg.emboss_alpha_lo, cfg.emboss_alpha_hi);
        const double s = uniform(rng, cfg.emboss_strength_lo, cfg.emboss_strength_hi);
        out = aug::emboss(out, a, s);
    }
    if (bernoulli(rng, cfg.p_each)) {
        const double a = 1.0 + uniform(rng, -cfg.contrast_limit, cfg.contrast_limit);
        const double b = uniform(rng, -cfg.brightness_limit, cfg.brightness_limit);
        out = aug::brightness_contrast(out, a, b);
    }
    if (bernoulli(rng, cfg.p_each)) {
        const double dh = uniform(rng, -cfg.hue_limit, cfg.hue_limit);
        const double ds = uniform(rng, -cfg.sat_limit, cfg.sat_limit);
        const double dv = uniform(rng, -cfg.val_limit, cfg.val_limit);
        out = aug::hue_saturation_value(out, dh, ds, dv);
    }
    return out;
}

}  // namespace gcv::data
