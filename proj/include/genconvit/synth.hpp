#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "common.hpp"
#include "image.hpp"
#include "imageio.hpp"
#include "rng.hpp"

namespace gcv::data {

namespace synth {

constexpr u64 kVidKey = 0x766964;    // per-video pose/lighting stream
constexpr u64 kFrameKey = 0x66726d;  // per-frame jitter stream
constexpr u64 kFakeKey = 0x666b76;   // per-video manipulation stream

// Per-video face pose, lighting and palette.
struct FaceParams {
    double cx, cy;          // face center in pixels
    double rx, ry;          // ellipse radii in pixels
    double rot;             // head tilt in radians
    double lx, ly;          // light direction (unit)
    double skin[3];
    double bg_top[3], bg_bot[3];
    double eye_dx, eye_dy;  // eye centers in normalized face coords
    double eye_ru, eye_rv;  // eye radii in normalized face coords
    double mouth_dy, mouth_ru, mouth_rv;
    double eye_col[3], mouth_col[3];
};

inline FaceParams draw_face_params(u64 seed, i64 video, i64 size) {
    Rng rng = make_rng(seed, kVidKey, static_cast<u64>(video));
    const double s = static_cast<double>(size);
    FaceParams p{};
    p.cx = s * (0.50 + uniform(rng, -0.04, 0.04));
    p.cy = s * (0.52 + uniform(rng, -0.04, 0.04));
    p.rx = s * (0.26 + uniform(rng, -0.03, 0.03));
    p.ry = p.rx * (1.30 + uniform(rng, -0.10, 0.10));
    p.rot = uniform(rng, -0.12, 0.12);
    const double la = uniform(rng, 0.0, 2.0 * 3.14159265358979323846);
    p.lx = std::cos(la);
    p.ly = std::sin(la);
    p.skin[0] = 205 + uniform(rng, -25, 25);
    p.skin[1] = 165 + uniform(rng, -25, 25);
    p.skin[2] = 140 + uniform(rng, -22, 22);
    for (int c = 0; c < 3; ++c) p.bg_top[c] = 60 + uniform(rng, -35, 35);
    for (int c = 0; c < 3; ++c) p.bg_bot[c] = p.bg_top[c] + uniform(rng, -20, 20);
    p.eye_dx = 0.42 + uniform(rng, -0.04, 0.04);
    p.eye_dy = -(0.24 + uniform(rng, -0.04, 0.04));
    p.eye_ru = 0.15 + uniform(rng, -0.02, 0.02);
    p.eye_rv = p.eye_ru * 0.62;
    p.mouth_dy = 0.46 + uniform(rng, -0.05, 0.05);
    p.mouth_ru = 0.40 + uniform(rng, -0.06, 0.06);
    p.mouth_rv = 0.09 + uniform(rng, -0.02, 0.02);
    for (int c = 0; c < 3; ++c) p.eye_col[c] = 32 + uniform(rng, -8, 8);
    p.mouth_col[0] = 125 + uniform(rng, -15, 15);
    p.mouth_col[1] = 45 + uniform(rng, -10, 10);
    p.mouth_col[2] = 50 + uniform(rng, -10, 10);
    return p;
}

// Frame-to-frame motion applied on top of the per-video pose.
struct FrameJitter {
    double dcx, dcy, drad, drot, dlight, dbright;
};

inline double smoothstep(double hi, double lo, double x) {
    const double t = std::clamp((x - hi) / (lo - hi), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// Renders one frame. The per-pixel grain consumes one draw per pixel from rng,
// so callers must pass a freshly keyed per-frame engine.
inline Image render_face(i64 size, const FaceParams& p, const FrameJitter& j, Rng& rng) {
    const double cx = p.cx + j.dcx, cy = p.cy + j.dcy;
    const double rx = p.rx * j.drad, ry = p.ry * j.drad;
    const double rot = p.rot + j.drot;
    const double c = std::cos(rot), s = std::sin(rot);
    const double ca = std::cos(j.dlight), sa = std::sin(j.dlight);
    const double lx = p.lx * ca - p.ly * sa, ly = p.lx * sa + p.ly * ca;
    const double gain = 1.0 + j.dbright / 255.0;

    Image img(size, size, 3);
    for (i64 y = 0; y < size; ++y)
        for (i64 x = 0; x < size; ++x) {
            const double ty = static_cast<double>(y) / static_cast<double>(size - 1);
            double col[3];
            for (int ch = 0; ch < 3; ++ch)
                col[ch] = p.bg_top[ch] + (p.bg_bot[ch] - p.bg_top[ch]) * ty;

            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double u = (c * dx + s * dy) / rx;
            const double v = (-s * dx + c * dy) / ry;
            const double dist = std::sqrt(u * u + v * v);
            const double edge = 2.0 / rx;  // soft rim about two pixels wide
            const double face_a = smoothstep(1.0 + edge, 1.0 - edge, dist);

            if (face_a > 0) {
                const double shade =
                    std::clamp(0.82 + 0.22 * (u * lx + v * ly) - 0.10 * dist * dist, 0.25, 1.15);
                double fc[3];
                for (int ch = 0; ch < 3; ++ch) fc[ch] = p.skin[ch] * shade;

                for (double sx : {-1.0, 1.0}) {
                    const double eu = (u - sx * p.eye_dx) / p.eye_ru;
                    const double ev = (v - p.eye_dy) / p.eye_rv;
                    const double ea = smoothstep(1.15, 0.85, std::sqrt(eu * eu + ev * ev));
                    for (int ch = 0; ch < 3; ++ch) fc[ch] += (p.eye_col[ch] - fc[ch]) * ea;
                }
                {
                    const double mu = u / p.mouth_ru;
                    const double mv = (v - p.mouth_dy) / p.mouth_rv;
                    const double ma = smoothstep(1.15, 0.85, std::sqrt(mu * mu + mv * mv));
                    for (int ch = 0; ch < 3; ++ch) fc[ch] += (p.mouth_col[ch] - fc[ch]) * ma;
                }
                for (int ch = 0; ch < 3; ++ch) col[ch] += (fc[ch] - col[ch]) * face_a;
            }

            const double grain = uniform(rng, -2.0, 2.0);
            for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = clamp_u8(col[ch] * gain + grain);
        }
    return img;
}

inline Image render_real_frame(u64 seed, i64 video, i64 frame, i64 size) {
    const FaceParams p = draw_face_params(seed, video, size);
    Rng rng = make_rng(seed, kFrameKey, static_cast<u64>(video), static_cast<u64>(frame));
    FrameJitter j{};
    j.dcx = uniform(rng, -1.5, 1.5);
    j.dcy = uniform(rng, -1.5, 1.5);
    j.drad = 1.0 + uniform(rng, -0.01, 0.01);
    j.drot = uniform(rng, -0.02, 0.02);
    j.dlight = uniform(rng, -0.06, 0.06);
    j.dbright = uniform(rng, -5.0, 5.0);
    return render_face(size, p, j, rng);
}

// Localized manipulation near the face center: a radial warp blended into the
// original, a box blur over the warped zone, and a small brightness shift.
struct FakeParams {
    double wx, wy;     // warp center in pixels
    double radius;     // affected radius in pixels
    double amp;        // peak displacement in pixels
    double dirx, diry; // displacement direction (unit)
    double blur_mix;
    double dbright;
};

inline FakeParams draw_fake_params(u64 seed, i64 video, i64 size, const FaceParams& face) {
    Rng rng = make_rng(seed, kFakeKey, static_cast<u64>(video));
    const double s = static_cast<double>(size);
    FakeParams f{};
    f.wx = face.cx + uniform(rng, -0.05, 0.05) * s;
    f.wy = face.cy + uniform(rng, -0.02, 0.08) * s;
    f.radius = s * (0.24 + uniform(rng, -0.06, 0.06));
    f.amp = 0.05 * s + uniform(rng, 0.0, 0.04 * s);
    const double a = uniform(rng, 0.0, 2.0 * 3.14159265358979323846);
    f.dirx = std::cos(a);
    f.diry = std::sin(a);
    f.blur_mix = 0.8 + uniform(rng, 0.0, 0.2);
    f.dbright = (bernoulli(rng, 0.5) ? 1.0 : -1.0) * uniform(rng, 6.0, 14.0);
    return f;
}

inline Image apply_fake_artifact(const Image& real, const FakeParams& f, double amp_scale) {
    const double amp = f.amp * amp_scale;
    Image warped(real.w, real.h, real.c);
    for (i64 y = 0; y < real.h; ++y)
        for (i64 x = 0; x < real.w; ++x) {
            const double dx = static_cast<double>(x) - f.wx;
            const double dy = static_cast<double>(y) - f.wy;
            const double dist = std::sqrt(dx * dx + dy * dy);
            const double m = smoothstep(f.radius, 0.55 * f.radius, dist);
            if (m <= 0) {
                for (i64 ch = 0; ch < 3; ++ch) warped.at(x, y, ch) = real.at(x, y, ch);
                continue;
            }
            const double bump = std::sin(3.14159265358979323846 * std::min(dist / f.radius, 1.0));
            const double ox = amp * bump * m * f.dirx;
            const double oy = amp * bump * m * f.diry;
            for (i64 ch = 0; ch < 3; ++ch) {
                const double w = sample_bilinear(real, static_cast<double>(x) - ox,
                                                 static_cast<double>(y) - oy, ch);
                const double base = real.at(x, y, ch);
                warped.at(x, y, ch) = clamp_u8(base + (w - base) * m);
            }
        }

    Image out = warped;
    for (i64 y = 0; y < real.h; ++y)
        for (i64 x = 0; x < real.w; ++x) {
            const double dx = static_cast<double>(x) - f.wx;
            const double dy = static_cast<double>(y) - f.wy;
            const double dist = std::sqrt(dx * dx + dy * dy);
            const double m = smoothstep(f.radius, 0.55 * f.radius, dist);
            if (m <= 0) continue;
            for (i64 ch = 0; ch < 3; ++ch) {
                double acc = 0;
                for (i64 by = -2; by <= 2; ++by)
                    for (i64 bx = -2; bx <= 2; ++bx)
                        acc += warped.at(reflect101(x + bx, real.w), reflect101(y + by, real.h), ch);
                acc /= 25.0;
                const double base = warped.at(x, y, ch);
                const double blurred = base + (acc - base) * f.blur_mix * m;
                out.at(x, y, ch) = clamp_u8(blurred + f.dbright * m);
            }
        }
    return out;
}

inline Image render_fake_frame(u64 seed, i64 video, i64 frame, i64 size) {
    const Image real = render_real_frame(seed, video, frame, size);
    const FaceParams face = draw_face_params(seed, video, size);
    const FakeParams f = draw_fake_params(seed, video, size, face);
    Rng rng = make_rng(seed, kFakeKey, static_cast<u64>(video), static_cast<u64>(frame));
    const double amp_scale = 1.0 + uniform(rng, -0.1, 0.1);
    return apply_fake_artifact(real, f, amp_scale);
}

inline std::string video_name(char prefix, i64 i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%c%04d", prefix, static_cast<int>(i));
    return buf;
}

inline std::string frame_name(i64 i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "f%03d.png", static_cast<int>(i));
    return buf;
}

}  // namespace synth

// Generates n_videos real videos (r0000…) and n_videos manipulated counterparts
// (f0000…), frames_per_video frames each, under out_root/{real,fake}/<id>/.
// Fake video i is derived from real video i's frames plus a localized artifact,
// so the pair's mean absolute difference stays small but nonzero. Everything is
// a pure function of (seed, video, frame), hence bitwise reproducible.
inline void gen_synthetic(i64 n_videos, i64 frames_per_video, u64 seed,
                          const std::string& out_root, i64 size = 224) {
    if (n_videos <= 0) throw ConfigError("gen_synthetic: need at least one video per class");
    if (frames_per_video <= 0) throw ConfigError("gen_synthetic: need at least one frame per video");
    if (size < 32) throw ConfigError("gen_synthetic: image size must be at least 32");

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(out_root) / "real", ec);
    if (ec) throw IoError("cannot create output directory: " + out_root + ": " + ec.message());
    fs::create_directories(fs::path(out_root) / "fake", ec);
    if (ec) throw IoError("cannot create output directory: " + out_root + ": " + ec.message());

    for (i64 v = 0; v < n_videos; ++v) {
        const fs::path rdir = fs::path(out_root) / "real" / synth::video_name('r', v);
        const fs::path fdir = fs::path(out_root) / "fake" / synth::video_name('f', v);
        fs::create_directories(rdir, ec);
        if (ec) throw IoError("cannot create video directory: " + rdir.string());
        fs::create_directories(fdir, ec);
        if (ec) throw IoError("cannot create video directory: " + fdir.string());
        for (i64 f = 0; f < frames_per_video; ++f) {
            write_png((rdir / synth::frame_name(f)).string(),
                      synth::render_real_frame(seed, v, f, size));
            write_png((fdir / synth::frame_name(f)).string(),
                      synth::render_fake_frame(seed, v, f, size));
        }
    }
}

// Mean absolute pixel difference between two equally sized images.
inline double mean_abs_diff(const Image& a, const Image& b) {
    if (a.w != b.w || a.h != b.h || a.c != b.c)
        throw ShapeError("mean_abs_diff: image sizes differ");
    double acc = 0;
    for (size_t i = 0; i < a.pix.size(); ++i)
        acc += std::fabs(static_cast<double>(a.pix[i]) - static_cast<double>(b.pix[i]));
    return acc / static_cast<double>(a.pix.size());
}

}  // namespace gcv::data
