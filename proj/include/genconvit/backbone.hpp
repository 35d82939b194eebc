#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "genconvit/config.hpp"
#include "genconvit/conv.hpp"
#include "genconvit/init.hpp"
#include "genconvit/norm.hpp"
#include "genconvit/ops.hpp"
#include "genconvit/rng.hpp"
#include "genconvit/window.hpp"

namespace gcv::vit {

// Depthwise 7x7 -> layernorm -> 1x1 expand x4 -> gelu -> 1x1 project, with a
// residual skip. The final projection starts at zero so a fresh block is the
// identity map.
template <typename T>
struct ConvNextBlock {
    i64 dim = 0;
    Tensor<T> dw_w, dw_b, ln_g, ln_b, pw1_w, pw1_b, pw2_w, pw2_b;

    static ConvNextBlock make(i64 dim, Rng& rng) {
        ConvNextBlock b;
        b.dim = dim;
        b.dw_w = Tensor<T>::zeros({dim, 1, 7, 7});
        b.dw_b = Tensor<T>::zeros({dim});
        kaiming_uniform(b.dw_w, rng);
        b.ln_g = Tensor<T>::full({dim}, T(1));
        b.ln_b = Tensor<T>::zeros({dim});
        b.pw1_w = Tensor<T>::zeros({4 * dim, dim});
        b.pw1_b = Tensor<T>::zeros({4 * dim});
        kaiming_uniform(b.pw1_w, rng);
        b.pw2_w = Tensor<T>::zeros({dim, 4 * dim});
        b.pw2_b = Tensor<T>::zeros({dim});
        return b;
    }

    template <typename F>
    void visit(const std::string& p, F&& f) {
        f(p + ".dw.w", dw_w, true);
        f(p + ".dw.b", dw_b, true);
        f(p + ".ln.g", ln_g, true);
        f(p + ".ln.b", ln_b, true);
        f(p + ".pw1.w", pw1_w, true);
        f(p + ".pw1.b", pw1_b, true);
        f(p + ".pw2.w", pw2_w, true);
        f(p + ".pw2.b", pw2_b, true);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> h = conv2d(x, dw_w, dw_b, 1, 3, dim);
        h = permute(h, {0, 2, 3, 1});
        h = layernorm(h, ln_g, ln_b);
        h = linear(h, pw1_w, pw1_b);
        h = gelu(h);
        h = linear(h, pw2_w, pw2_b);
        h = permute(h, {0, 3, 1, 2});
        return add(x, h);
    }
};

// Patch stem plus downsampling stages of ConvNextBlocks; NCHW in, NCHW out.
template <typename T>
struct ConvNext {
    i64 stem_stride = 4;
    Tensor<T> stem_w, stem_b, stem_ln_g, stem_ln_b;
    std::vector<std::vector<ConvNextBlock<T>>> stages;
    struct Down {
        Tensor<T> ln_g, ln_b, w, b;
    };
    std::vector<Down> downs;

    static ConvNext make(const BackboneConfig& cfg, Rng& rng) {
        ConvNext m;
        m.stem_stride = cfg.stem;
        const auto& w = cfg.widths;
        m.stem_w = Tensor<T>::zeros({w[0], 3, cfg.stem, cfg.stem});
        m.stem_b = Tensor<T>::zeros({w[0]});
        kaiming_uniform(m.stem_w, rng);
        m.stem_ln_g = Tensor<T>::full({w[0]}, T(1));
        m.stem_ln_b = Tensor<T>::zeros({w[0]});
        for (size_t s = 0; s < w.size(); ++s) {
            std::vector<ConvNextBlock<T>> blocks;
            for (i64 d = 0; d < cfg.depths[s]; ++d)
                blocks.push_back(ConvNextBlock<T>::make(w[s], rng));
            m.stages.push_back(std::move(blocks));
            if (s + 1 < w.size()) {
                Down dn;
                dn.ln_g = Tensor<T>::full({w[s]}, T(1));
                dn.ln_b = Tensor<T>::zeros({w[s]});
                dn.w = Tensor<T>::zeros({w[s + 1], w[s], 2, 2});
                dn.b = Tensor<T>::zeros({w[s + 1]});
                kaiming_uniform(dn.w, rng);
                m.downs.push_back(std::move(dn));
            }
        }
        return m;
    }

    template <typename F>
    void visit(const std::string& p, F&& f) {
        f(p + "stem.w", stem_w, true);
        f(p + "stem.b", stem_b, true);
        f(p + "stem.ln.g", stem_ln_g, true);
        f(p + "stem.ln.b", stem_ln_b, true);
        for (size_t s = 0; s < stages.size(); ++s)
            for (size_t b = 0; b < stages[s].size(); ++b)
                stages[s][b].visit(
                    p + "s" + std::to_string(s) + ".b" + std::to_string(b), f);
        for (size_t d = 0; d < downs.size(); ++d) {
            const std::string s = p + "down" + std::to_string(d);
            f(s + ".ln.g", downs[d].ln_g, true);
            f(s + ".ln.b", downs[d].ln_b, true);
            f(s + ".w", downs[d].w, true);
            f(s + ".b", downs[d].b, true);
        }
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> h = conv2d(x, stem_w, stem_b, stem_stride, 0);
        h = layernorm_cf(h, stem_ln_g, stem_ln_b);
        for (size_t s = 0; s < stages.size(); ++s) {
            if (s > 0) {
                const Down& d = downs[s - 1];
                h = conv2d(layernorm_cf(h, d.ln_g, d.ln_b), d.w, d.b, 2, 0);
            }
            for (const auto& b : stages[s]) h = b.forward(h);
        }
        return h;
    }
};

// 1x1 conv projection of a feature map into a token sequence (B, h*w, embed).
template <typename T>
struct HybridEmbed {
    Tensor<T> w, b;

    static HybridEmbed make(i64 in_dim, i64 embed_dim, Rng& rng) {
        HybridEmbed m;
        m.w = Tensor<T>::zeros({embed_dim, in_dim, 1, 1});
        m.b = Tensor<T>::zeros({embed_dim});
        kaiming_uniform(m.w, rng);
        return m;
    }

    template <typename F>
    void visit(const std::string& p, F&& f) {
        f(p + "w", w, true);
        f(p + "b", b, true);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> h = conv2d(x, w, b, 1, 0);
        const i64 B = h.shape[0], D = h.shape[1], n = h.shape[2] * h.shape[3];
        return permute(reshape(h, {B, D, n}), {0, 2, 1});
    }
};

// Multi-head attention inside non-overlapping win x win windows, with learned
// relative-position bias and an additive mask that hides padded cells and,
// for shifted blocks, pairs that wrapped around the cyclic roll.
template <typename T>
struct SwinBlock {
    i64 dim = 0, heads = 0, grid = 0, win = 0, shift = 0, padded = 0;
    Tensor<T> ln1_g, ln1_b;
    Tensor<T> q_w, q_b, k_w, k_b, v_w, v_b, proj_w, proj_b;
    Tensor<T> bias_table;  // ((2win-1)^2, heads), zero-initialized
    Tensor<T> ln2_g, ln2_b;
    Tensor<T> mlp1_w, mlp1_b, mlp2_w, mlp2_b;
    std::vector<i64> rel_index;
    Tensor<T> mask;  // (nW, n, n) of {0, -100}, empty when unused

    static SwinBlock make(i64 dim, i64 heads, i64 grid, i64 window, bool shifted,
                          Rng& rng) {
        check(dim % heads == 0, "window attention: dim must be divisible by heads");
        SwinBlock s;
        s.dim = dim;
        s.heads = heads;
        s.grid = grid;
        s.win = std::min(window, grid);
        s.padded = (grid + s.win - 1) / s.win * s.win;
        s.shift = (shifted && grid > s.win) ? s.win / 2 : 0;
        auto lin = [&](i64 dout, i64 din, Tensor<T>& w, Tensor<T>& b) {
            w = Tensor<T>::zeros({dout, din});
            b = Tensor<T>::zeros({dout});
            kaiming_uniform(w, rng);
        };
        s.ln1_g = Tensor<T>::full({dim}, T(1));
        s.ln1_b = Tensor<T>::zeros({dim});
        lin(dim, dim, s.q_w, s.q_b);
        lin(dim, dim, s.k_w, s.k_b);
        lin(dim, dim, s.v_w, s.v_b);
        lin(dim, dim, s.proj_w, s.proj_b);
        const i64 span = 2 * s.win - 1;
        s.bias_table = Tensor<T>::zeros({span * span, heads});
        s.ln2_g = Tensor<T>::full({dim}, T(1));
        s.ln2_b = Tensor<T>::zeros({dim});
        lin(4 * dim, dim, s.mlp1_w, s.mlp1_b);
        lin(dim, 4 * dim, s.mlp2_w, s.mlp2_b);
        const i64 n = s.win * s.win;
        s.rel_index.resize(n * n);
        for (i64 i = 0; i < n; ++i)
            for (i64 j = 0; j < n; ++j) {
                const i64 dy = i / s.win - j / s.win + s.win - 1;
                const i64 dx = i % s.win - j % s.win + s.win - 1;
                s.rel_index[i * n + j] = dy * span + dx;
            }
        if (s.shift > 0 || s.padded != grid) s.mask = s.make_mask();
        return s;
    }

    // Cells are labelled by the standard three-slice zones of the padded grid
    // (boundaries at padded-win and padded-shift per axis); cells whose rolled
    // content is padding get a label of their own. Two cells may attend only
    // when their labels agree.
    Tensor<T> make_mask() const {
        const i64 P = padded, n = win * win, nw = (P / win) * (P / win);
        auto zone = [&](i64 p) -> i64 {
            if (shift == 0) return 0;
            if (p < P - win) return 0;
            return p < P - shift ? 1 : 2;
        };
        std::vector<i64> lab(P * P);
        for (i64 h = 0; h < P; ++h)
            for (i64 w = 0; w < P; ++w) {
                const bool pad_cell =
                    (h + shift) % P >= grid || (w + shift) % P >= grid;
                lab[h * P + w] = pad_cell ? 9 : zone(h) * 3 + zone(w);
            }
        Tensor<T> m = Tensor<T>::zeros({nw, n, n});
        T* mp = m.ptr();
        const i64 per_row = P / win;
        for (i64 wdx = 0; wdx < nw; ++wdx) {
            const i64 wh = wdx / per_row * win, ww = wdx % per_row * win;
            for (i64 i = 0; i < n; ++i)
                for (i64 j = 0; j < n; ++j) {
                    const i64 li = lab[(wh + i / win) * P + ww + i % win];
                    const i64 lj = lab[(wh + j / win) * P + ww + j % win];
                    mp[(wdx * n + i) * n + j] = li == lj ? T(0) : T(-100);
                }
        }
        return m;
    }

    template <typename F>
    void visit(const std::string& p, F&& f) {
        f(p + ".ln1.g", ln1_g, true);
        f(p + ".ln1.b", ln1_b, true);
        f(p + ".q.w", q_w, true);
        f(p + ".q.b", q_b, true);
        f(p + ".k.w", k_w, true);
        f(p + ".k.b", k_b, true);
        f(p + ".v.w", v_w, true);
        f(p + ".v.b", v_b, true);
        f(p + ".proj.w", proj_w, true);
        f(p + ".proj.b", proj_b, true);
        f(p + ".bias", bias_table, true);
        f(p + ".ln2.g", ln2_g, true);
        f(p + ".ln2.b", ln2_b, true);
        f(p + ".mlp1.w", mlp1_w, true);
        f(p + ".mlp1.b", mlp1_b, true);
        f(p + ".mlp2.w", mlp2_w, true);
        f(p + ".mlp2.b", mlp2_b, true);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const i64 B = x.shape[0], N = x.shape[1], D = x.shape[2];
        check(N == grid * grid && D == dim, "window attention: unexpected token shape");
        Tensor<T> h = layernorm(x, ln1_g, ln1_b);
        h = reshape(h, {B, grid, grid, D});
        if (padded != grid) h = pad_hw(h, padded - grid, padded - grid);
        if (shift > 0) h = roll_hw(h, -shift, -shift);
        Tensor<T> wins = window_partition(h, win);
        const i64 G = wins.shape[0], n = win * win, dh = D / heads;
        auto split = [&](Tensor<T> t) {
            return reshape(permute(reshape(std::move(t), {G, n, heads, dh}),
                                   {0, 2, 1, 3}),
                           {G * heads, n, dh});
        };
        Tensor<T> q = split(linear(wins, q_w, q_b));
        Tensor<T> k = split(linear(wins, k_w, k_b));
        Tensor<T> v = split(linear(wins, v_w, v_b));
        const T sc = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
        Tensor<T> attn = bmm(scale(q, sc), k, true);
        Tensor<T> bias = reshape(
            permute(reshape(gather_rows(bias_table, rel_index), {n, n, heads}),
                    {2, 0, 1}),
            {1, heads, n, n});
        attn = add(reshape(attn, {G, heads, n, n}), bias);
        if (mask.store) {
            const i64 nw = mask.shape[0];
            attn = add(reshape(attn, {B, nw, heads, n, n}),
                       reshape(mask, {1, nw, 1, n, n}));
        }
        attn = softmax(reshape(attn, {G * heads, n, n}));
        Tensor<T> o = bmm(attn, v);
        o = reshape(permute(reshape(o, {G, heads, n, dh}), {0, 2, 1, 3}), {G, n, D});
        o = linear(o, proj_w, proj_b);
        h = window_reverse(o, win, B, padded, padded);
        if (shift > 0) h = roll_hw(h, shift, shift);
        if (padded != grid) h = crop_hw(h, grid, grid);
        Tensor<T> y = add(x, reshape(h, {B, N, D}));
        Tensor<T> m = linear(
            gelu(linear(layernorm(y, ln2_g, ln2_b), mlp1_w, mlp1_b)), mlp2_w,
            mlp2_b);
        return add(y, m);
    }
};

// Concatenate each 2x2 token neighborhood (4C), layernorm, project to 2C.
template <typename T>
struct PatchMerge {
    i64 dim = 0;
    Tensor<T> ln_g, ln_b, w;

    static PatchMerge make(i64 dim, Rng& rng) {
        PatchMerge m;
        m.dim = dim;
        m.ln_g = Tensor<T>::full({4 * dim}, T(1));
        m.ln_b = Tensor<T>::zeros({4 * dim});
        m.w = Tensor<T>::zeros({2 * dim, 4 * dim});
        kaiming_uniform(m.w, rng);
        return m;
    }

    template <typename F>
    void visit(const std::string& p, F&& f) {
        f(p + ".ln.g", ln_g, true);
        f(p + ".ln.b", ln_b, true);
        f(p + ".w", w, true);
    }

    Tensor<T> forward(const Tensor<T>& x, i64 grid) const {
        if (grid % 2 != 0)
            fail_shape("patch merge: grid ", std::to_string(grid), " must be even");
        const i64 B = x.shape[0], C = x.shape[2];
        Tensor<T> h = reshape(x, {B, grid / 2, 2, grid / 2, 2, C});
        h = permute(h, {0, 1, 3, 2, 4, 5});
        h = reshape(h, {B, (grid / 2) * (grid / 2), 4 * C});
        h = layernorm(h, ln_g, ln_b);
        return linear(h, w);
    }
};

// One full branch: ConvNext features -> token projection -> windowed
// attention blocks (merging while the grid outgrows the window) -> mean-token
// classifier head.
template <typename T>
struct Tower {
    i64 image = 0, grid = 0, final_dim = 0;
    ConvNext<T> cnx;
    HybridEmbed<T> embed;
    std::vector<SwinBlock<T>> blocks;
    std::vector<std::optional<PatchMerge<T>>> merges;
    Tensor<T> head_ln_g, head_ln_b, head_w, head_b;

    static Tower make(const BackboneConfig& cfg, i64 image, Rng& rng) {
        Tower t;
        t.image = image;
        t.cnx = ConvNext<T>::make(cfg, rng);
        t.embed = HybridEmbed<T>::make(cfg.widths.back(), cfg.embed_dim, rng);
        const i64 halvings = static_cast<i64>(cfg.depths.size()) - 1;
        t.grid = image / cfg.stem / (i64(1) << halvings);
        check(t.grid >= 1, "backbone: image too small for the stage count");
        i64 g = t.grid, d = cfg.embed_dim, h = cfg.heads;
        for (i64 i = 0; i < cfg.swin_depth; ++i) {
            t.blocks.push_back(
                SwinBlock<T>::make(d, h, g, cfg.window, i % 2 == 1, rng));
            if (i + 1 < cfg.swin_depth && i % 2 == 1 && g > cfg.window) {
                if (g % 2 != 0)
                    fail_shape("backbone: cannot merge odd grid ", std::to_string(g));
                t.merges.emplace_back(PatchMerge<T>::make(d, rng));
                g /= 2;
                d *= 2;
                h *= 2;
            } else {
                t.merges.emplace_back(std::nullopt);
            }
        }
        t.final_dim = d;
        t.head_ln_g = Tensor<T>::full({d}, T(1));
        t.head_ln_b = Tensor<T>::zeros({d});
        t.head_w = Tensor<T>::zeros({cfg.head_out, d});
        t.head_b = Tensor<T>::zeros({cfg.head_out});
        kaiming_uniform(t.head_w, rng);
        return t;
    }

    template <typename F>
    void visit(const std::string& p, F&& f) {
        cnx.visit(p + "cnx.", f);
        embed.visit(p + "embed.", f);
        for (size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].visit(p + "swin" + std::to_string(i), f);
            if (merges[i])
                merges[i]->visit(p + "merge" + std::to_string(i), f);
        }
        f(p + "head.ln.g", head_ln_g, true);
        f(p + "head.ln.b", head_ln_b, true);
        f(p + "head.w", head_w, true);
        f(p + "head.b", head_b, true);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> h = embed.forward(cnx.forward(x));
        i64 g = grid;
        for (size_t i = 0; i < blocks.size(); ++i) {
            h = blocks[i].forward(h);
            if (merges[i]) {
                h = merges[i]->forward(h, g);
                g /= 2;
            }
        }
        h = layernorm(h, head_ln_g, head_ln_b);
        h = mean_axis(h, 1);
        return linear(h, head_w, head_b);
    }
};

}  // namespace gcv::vit
