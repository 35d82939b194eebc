#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "genconvit/backbone.hpp"
#include "genconvit/config.hpp"
#include "genconvit/generative.hpp"

namespace gcv::net {

// Network A: autoencoder reconstruction feeds the second feature tower, and
// the classifier reads both towers' features. Gradients reach the AE through
// the latent tower; the only training signal is cross-entropy.
template <typename T>
struct NetworkA {
    gen::Ae<T> ae;
    vit::Tower<T> img, lat;
    Tensor<T> head_w, head_b;

    static NetworkA make(const ModelConfig& cfg, Rng& rng) {
        NetworkA n;
        n.ae = gen::Ae<T>::make(cfg, rng);
        n.img = vit::Tower<T>::make(cfg.backbone, cfg.image, rng);
        n.lat = vit::Tower<T>::make(cfg.backbone, cfg.image, rng);
        n.head_w = Tensor<T>::zeros({cfg.classes, 2 * cfg.backbone.head_out});
        n.head_b = Tensor<T>::zeros({cfg.classes});
        kaiming_uniform(n.head_w, rng);
        return n;
    }

    template <typename F>
    void visit(const std::string& p, F&& f) {
        ae.visit(p + "ae.", f);
        img.visit(p + "img.", f);
        lat.visit(p + "lat.", f);
        f(p + "head.w", head_w, true);
        f(p + "head.b", head_b, true);
    }

    struct Out {
        Tensor<T> logits, recon;
    };

    Out forward(const Tensor<T>& x) const {
        Out o;
        o.recon = ae.forward(x);
        Tensor<T> fi = img.forward(x);
        Tensor<T> fl = lat.forward(o.recon);
        o.logits = linear(concat(std::vector<Tensor<T>>{fi, fl}, 1), head_w, head_b);
        return o;
    }
};

// Network B: VAE reconstruction (half resolution, upsampled back) feeds the
// second tower; trained with cross-entropy plus weighted reconstruction MSE
// (and optional KL).
template <typename T>
struct NetworkB {
    gen::Vae<T> vae;
    vit::Tower<T> img, lat;
    Tensor<T> head_w, head_b;

    static NetworkB make(const ModelConfig& cfg, Rng& rng) {
        NetworkB n;
        n.vae = gen::Vae<T>::make(cfg, rng);
        n.img = vit::Tower<T>::make(cfg.backbone, cfg.image, rng);
        n.lat = vit::Tower<T>::make(cfg.backbone, cfg.image, rng);
        n.head_w = Tensor<T>::zeros({cfg.classes, 2 * cfg.backbone.head_out});
        n.head_b = Tensor<T>::zeros({cfg.classes});
        kaiming_uniform(n.head_w, rng);
        return n;
    }

    template <typename F>
    void visit(const std::string& p, F&& f) {
        vae.visit(p + "vae.", f);
        img.visit(p + "img.", f);
        lat.visit(p + "lat.", f);
        f(p + "head.w", head_w, true);
        f(p + "head.b", head_b, true);
    }

    struct Out {
        Tensor<T> logits, recon, mu, logvar;
    };

    // eps supplies the reparameterization noise; an empty tensor means the
    // deterministic mean path (inference).
    Out forward(const Tensor<T>& x, bool training, const Tensor<T>& eps) {
        Out o;
        auto [mu, logvar] = vae.encode(x, training);
        o.mu = mu;
        o.logvar = logvar;
        Tensor<T> z = eps.store ? gen::reparameterize(mu, logvar, eps) : mu;
        o.recon = vae.decode(z);
        Tensor<T> up = resize_bilinear(o.recon, x.shape[2], x.shape[3]);
        Tensor<T> fi = img.forward(x);
        Tensor<T> fl = lat.forward(up);
        o.logits = linear(concat(std::vector<Tensor<T>>{fi, fl}, 1), head_w, head_b);
        return o;
    }

    Out forward(const Tensor<T>& x) { return forward(x, false, Tensor<T>{}); }
};

template <typename T>
struct GenConViT {
    NetworkA<T> a;
    NetworkB<T> b;

    static GenConViT make(const ModelConfig& cfg, u64 seed) {
        cfg.validate();
        GenConViT m;
        Rng rng = make_rng(seed, 0x6e6574);
        m.a = NetworkA<T>::make(cfg, rng);
        m.b = NetworkB<T>::make(cfg, rng);
        return m;
    }

    template <typename F>
    void visit(const std::string& p, F&& f) {
        a.visit(p + "a.", f);
        b.visit(p + "b.", f);
    }
};

template <typename T, typename Model>
i64 param_count(Model& m, bool trainable_only = true) {
    i64 n = 0;
    m.visit("", [&](const std::string&, Tensor<T>& t, bool trainable) {
        if (trainable || !trainable_only) n += t.numel();
    });
    return n;
}

template <typename T>
Tensor<T> loss_a(const Tensor<T>& logits, const std::vector<int>& labels) {
    return cross_entropy(logits, labels);
}

template <typename T>
struct LossB {
    Tensor<T> total, ce, rec, kl;
};

// CE + lambda * MSE(recon, half-size input in [0,1]) + beta * KL. The input
// arrives normalized, so the reconstruction target is mapped back to [0,1]
// before comparing against the sigmoid output.
template <typename T>
LossB<T> loss_b(const typename NetworkB<T>::Out& out,
                const std::vector<int>& labels, const Tensor<T>& x,
                const ModelConfig& cfg) {
    LossB<T> l;
    l.ce = cross_entropy(out.logits, labels);
    Tensor<T> target = resize_bilinear(x, x.shape[2] / 2, x.shape[3] / 2);
    target = add_scalar(scale(target, static_cast<T>(cfg.norm_std)),
                        static_cast<T>(cfg.norm_mean));
    l.rec = mse(out.recon, target);
    Tensor<T> term = sub(add_scalar(out.logvar, T(1)),
                         add(mul(out.mu, out.mu), exp_op(out.logvar)));
    l.kl = scale(mean_all(sum_axis(term, 1)), T(-0.5));
    l.total = add(l.ce, scale(l.rec, static_cast<T>(cfg.lambda_recon)));
    if (cfg.beta_kl != 0.0)
        l.total = add(l.total, scale(l.kl, static_cast<T>(cfg.beta_kl)));
    return l;
}

template <typename T>
struct VideoPrediction {
    double score = 0;
    bool fake = false;
    i64 frames_used = 0;
    std::vector<double> frame_probs;  // per frame: network A first, then B
};

namespace detail {

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, i64 begin, i64 count) {
    const i64 row = x.numel() / x.shape[0];
    Shape s = x.shape;
    s[0] = count;
    std::vector<T> out(x.ptr() + begin * row, x.ptr() + (begin + count) * row);
    return Tensor<T>::of(s, std::move(out));
}

template <typename T>
void fake_probs(const Tensor<T>& logits, std::vector<double>& sink) {
    Tensor<T> p = softmax(logits);
    const i64 c = p.shape.back();
    for (i64 i = 0; i < p.shape[0]; ++i)
        sink.push_back(static_cast<double>(p.ptr()[i * c + 1]));
}

}  // namespace detail

// Frame-ensemble video verdict: every frame is scored by both networks (mean
// latent path, no sampling) and the video score is the arithmetic mean of all
// per-frame fake probabilities. Summation runs over a sorted copy so the
// score is bitwise independent of frame order and batch partitioning.
template <typename T>
VideoPrediction<T> predict_video(NetworkA<T>& a, NetworkB<T>& b,
                                 const Tensor<T>& frames, i64 batch = 0) {
    check(frames.shape.size() == 4, "predict: frames must be (N, 3, H, W)");
    const i64 n = frames.shape[0];
    if (n == 0) throw DataError("predict: no frames given");
    if (batch <= 0) batch = n;
    VideoPrediction<T> out;
    out.frames_used = n;
    for (i64 at = 0; at < n; at += batch) {
        const i64 take = std::min(batch, n - at);
        Tensor<T> chunk = detail::slice_rows(frames, at, take);
        detail::fake_probs(a.forward(chunk).logits, out.frame_probs);
    }
    for (i64 at = 0; at < n; at += batch) {
        const i64 take = std::min(batch, n - at);
        Tensor<T> chunk = detail::slice_rows(frames, at, take);
        detail::fake_probs(b.forward(chunk).logits, out.frame_probs);
    }
    std::vector<double> sorted = out.frame_probs;
    std::sort(sorted.begin(), sorted.end());
    double sum = 0;
    for (double p : sorted) sum += p;
    out.score = sum / static_cast<double>(sorted.size());
    out.fake = out.score >= 0.5;
    return out;
}

}  // namespace gcv::net
