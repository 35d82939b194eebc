#pragma once

#include <string>
#include <utility>
#include <vector>

#include "genconvit/config.hpp"
#include "genconvit/conv.hpp"
#include "genconvit/init.hpp"
#include "genconvit/norm.hpp"
#include "genconvit/ops.hpp"
#include "genconvit/rng.hpp"

namespace gcv::gen {

// Convolutional autoencoder. Encoder: five [conv3x3 s1 p1 -> relu -> maxpool
// 2/2] stages, so a HxH input leaves a widths[4] x H/32 x H/32 code. Decoder:
// five transposed convs (k2 s2) mirroring the widths back to RGB, sigmoid out.
template <typename T>
struct Ae {
    std::vector<Tensor<T>> enc_w, enc_b;
    std::vector<Tensor<T>> dec_w, dec_b;

    static Ae make(const ModelConfig& cfg, Rng& rng) {
        Ae m;
        const auto& w = cfg.ae.widths;
        i64 prev = 3;
        for (size_t i = 0; i < w.size(); ++i) {
            m.enc_w.push_back(Tensor<T>::zeros({w[i], prev, 3, 3}));
            m.enc_b.push_back(Tensor<T>::zeros({w[i]}));
            kaiming_uniform(m.enc_w.back(), rng);
            prev = w[i];
        }
        for (size_t i = 0; i < w.size(); ++i) {
            const i64 cin = w[w.size() - 1 - i];
            const i64 cout = i + 1 < w.size() ? w[w.size() - 2 - i] : 3;
            m.dec_w.push_back(Tensor<T>::zeros({cin, cout, 2, 2}));
            m.dec_b.push_back(Tensor<T>::zeros({cout}));
            kaiming_uniform(m.dec_w.back(), rng);
        }
        return m;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        for (size_t i = 0; i < enc_w.size(); ++i) {
            const std::string s = prefix + "enc" + std::to_string(i);
            f(s + ".w", enc_w[i], true);
            f(s + ".b", enc_b[i], true);
        }
        for (size_t i = 0; i < dec_w.size(); ++i) {
            const std::string s = prefix + "dec" + std::to_string(i);
            f(s + ".w", dec_w[i], true);
            f(s + ".b", dec_b[i], true);
        }
    }

    Tensor<T> encode(const Tensor<T>& x) const {
        Tensor<T> h = x;
        for (size_t i = 0; i < enc_w.size(); ++i)
            h = maxpool2d(relu(conv2d(h, enc_w[i], enc_b[i], 1, 1)), 2, 2);
        return h;
    }

    Tensor<T> decode(const Tensor<T>& z) const {
        Tensor<T> h = z;
        for (size_t i = 0; i < dec_w.size(); ++i) {
            h = conv_transpose2d(h, dec_w[i], dec_b[i], 2);
            h = i + 1 < dec_w.size() ? relu(h) : sigmoid(h);
        }
        return h;
    }

    Tensor<T> forward(const Tensor<T>& x) const { return decode(encode(x)); }
};

// Convolutional VAE. Encoder: four [conv3x3 s2 p1 -> batchnorm -> leaky relu]
// stages, flattened into linear mu/logvar heads. Decoder: linear back to a
// dec_widths[0] x image/32 x image/32 seed, then four transposed convs (k2 s2)
// ending in sigmoid, so the reconstruction is image/2 x image/2 RGB.
template <typename T>
struct Vae {
    i64 image = 0;
    std::vector<Tensor<T>> enc_w, enc_b;
    std::vector<Tensor<T>> bn_g, bn_b, bn_rm, bn_rv;
    Tensor<T> mu_w, mu_b, logvar_w, logvar_b;
    Tensor<T> fc_w, fc_b;
    std::vector<Tensor<T>> dec_w, dec_b;

    static Vae make(const ModelConfig& cfg, Rng& rng) {
        Vae m;
        m.image = cfg.image;
        const auto& ew = cfg.vae.enc_widths;
        i64 prev = 3;
        for (size_t i = 0; i < ew.size(); ++i) {
            m.enc_w.push_back(Tensor<T>::zeros({ew[i], prev, 3, 3}));
            m.enc_b.push_back(Tensor<T>::zeros({ew[i]}));
            kaiming_uniform(m.enc_w.back(), rng);
            m.bn_g.push_back(Tensor<T>::full({ew[i]}, T(1)));
            m.bn_b.push_back(Tensor<T>::zeros({ew[i]}));
            m.bn_rm.push_back(Tensor<T>::zeros({ew[i]}));
            m.bn_rv.push_back(Tensor<T>::full({ew[i]}, T(1)));
            prev = ew[i];
        }
        const i64 grid16 = cfg.image / 16;
        const i64 flat = ew.back() * grid16 * grid16;
        m.mu_w = Tensor<T>::zeros({cfg.vae.latent, flat});
        m.mu_b = Tensor<T>::zeros({cfg.vae.latent});
        m.logvar_w = Tensor<T>::zeros({cfg.vae.latent, flat});
        m.logvar_b = Tensor<T>::zeros({cfg.vae.latent});
        kaiming_uniform(m.mu_w, rng);
        kaiming_uniform(m.logvar_w, rng);
        m.fc_w = Tensor<T>::zeros({cfg.vae.latent, cfg.vae.latent});
        m.fc_b = Tensor<T>::zeros({cfg.vae.latent});
        kaiming_uniform(m.fc_w, rng);
        const auto& dw = cfg.vae.dec_widths;
        for (size_t i = 0; i < dw.size(); ++i) {
            const i64 cout = i + 1 < dw.size() ? dw[i + 1] : 3;
            m.dec_w.push_back(Tensor<T>::zeros({dw[i], cout, 2, 2}));
            m.dec_b.push_back(Tensor<T>::zeros({cout}));
            kaiming_uniform(m.dec_w.back(), rng);
        }
        return m;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        for (size_t i = 0; i < enc_w.size(); ++i) {
            const std::string s = prefix + "enc" + std::to_string(i);
            f(s + ".w", enc_w[i], true);
            f(s + ".b", enc_b[i], true);
            f(s + ".bn.g", bn_g[i], true);
            f(s + ".bn.b", bn_b[i], true);
            f(s + ".bn.rm", bn_rm[i], false);
            f(s + ".bn.rv", bn_rv[i], false);
        }
        f(prefix + "mu.w", mu_w, true);
        f(prefix + "mu.b", mu_b, true);
        f(prefix + "logvar.w", logvar_w, true);
        f(prefix + "logvar.b", logvar_b, true);
        f(prefix + "fc.w", fc_w, true);
        f(prefix + "fc.b", fc_b, true);
        for (size_t i = 0; i < dec_w.size(); ++i) {
            const std::string s = prefix + "dec" + std::to_string(i);
            f(s + ".w", dec_w[i], true);
            f(s + ".b", dec_b[i], true);
        }
    }

    std::pair<Tensor<T>, Tensor<T>> encode(const Tensor<T>& x, bool training) {
        Tensor<T> h = x;
        for (size_t i = 0; i < enc_w.size(); ++i) {
            h = conv2d(h, enc_w[i], enc_b[i], 2, 1);
            h = batchnorm2d(h, bn_g[i], bn_b[i], bn_rm[i], bn_rv[i], training);
            h = leaky_relu(h);
        }
        h = reshape(h, {h.shape[0], h.numel() / h.shape[0]});
        return {linear(h, mu_w, mu_b), linear(h, logvar_w, logvar_b)};
    }

    Tensor<T> decode(const Tensor<T>& z) const {
        const i64 seed_grid = image / 32;
        Tensor<T> h = linear(z, fc_w, fc_b);
        h = reshape(h, {h.shape[0], dec_w[0].shape[0], seed_grid, seed_grid});
        for (size_t i = 0; i < dec_w.size(); ++i) {
            h = conv_transpose2d(h, dec_w[i], dec_b[i], 2);
            h = i + 1 < dec_w.size() ? leaky_relu(h) : sigmoid(h);
        }
        return h;
    }
};

// z = mu + exp(0.5 * logvar) * eps, differentiable in mu and logvar.
template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar,
                         const Tensor<T>& eps) {
    if (mu.shape != logvar.shape || mu.shape != eps.shape)
        fail_shape("reparameterize: mu ", shape_str(mu.shape), ", logvar ",
                   shape_str(logvar.shape), ", eps ", shape_str(eps.shape),
                   " must match");
    return add(mu, mul(exp_op(scale(logvar, T(0.5))), eps));
}

// Standard-normal noise for training; zeros give the deterministic mean path.
template <typename T>
Tensor<T> sample_eps(const Shape& shape, Rng& rng) {
    Tensor<T> e = Tensor<T>::zeros(shape);
    T* p = e.ptr();
    for (i64 i = 0; i < e.numel(); ++i) p[i] = static_cast<T>(normal(rng));
    return e;
}

}  // namespace gcv::gen
