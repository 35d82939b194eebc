#pragma once

#include <cmath>
#include <map>
#include <string>

#include "genconvit/tape.hpp"

namespace gcv {

// Adam with coupled L2 weight decay (decay is added to the gradient before the
// moment updates) and bias-corrected moments.
template <typename T>
struct Adam {
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0);
    i64 step_count = 0;
    std::map<std::string, Tensor<T>> m, v;

    // Model must provide visit(prefix, f) with f(name, Tensor&, trainable).
    template <typename Model>
    void step(Model& model, Tape<T>& tape) {
        ++step_count;
        const double bc1 = 1.0 - std::pow(static_cast<double>(beta1),
                                          static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(static_cast<double>(beta2),
                                          static_cast<double>(step_count));
        model.visit("", [&](const std::string& name, Tensor<T>& p, bool trainable) {
            if (!trainable) return;
            Tensor<T> g = tape.grad(p);
            const T* gp = g.ptr();
            const i64 n = p.numel();
            for (i64 i = 0; i < n; ++i)
                if (!std::isfinite(static_cast<double>(gp[i])))
                    throw NumericError("non-finite gradient in " + name);
            auto mit = m.find(name);
            if (mit == m.end()) {
                mit = m.emplace(name, Tensor<T>::zeros(p.shape)).first;
                v.emplace(name, Tensor<T>::zeros(p.shape));
            }
            Tensor<T>& mt = mit->second;
            Tensor<T>& vt = v.at(name);
            if (mt.shape != p.shape)
                fail_shape("optimizer state for ", name, " has shape ", shape_str(mt.shape),
                           " but the parameter is ", shape_str(p.shape));
            T* mp = mt.ptr();
            T* vp = vt.ptr();
            T* pp = p.ptr();
            for (i64 i = 0; i < n; ++i) {
                const T gi = gp[i] + weight_decay * pp[i];
                mp[i] = beta1 * mp[i] + (T(1) - beta1) * gi;
                vp[i] = beta2 * vp[i] + (T(1) - beta2) * gi * gi;
                const double mhat = static_cast<double>(mp[i]) / bc1;
                const double vhat = static_cast<double>(vp[i]) / bc2;
                pp[i] -= static_cast<T>(static_cast<double>(lr) * mhat /
                                        (std::sqrt(vhat) + static_cast<double>(eps)));
            }
            p.tape = nullptr;
            p.node = -1;
        });
    }
};

// Register every trainable parameter of a model as a tape leaf. Parameters
// still pointing at a previous (dead) tape are detached first.
template <typename T, typename Model>
void watch_params(Model& model, Tape<T>& tape) {
    model.visit("", [&](const std::string&, Tensor<T>& p, bool trainable) {
        if (!trainable) return;
        if (p.tape != &tape) {
            p.tape = nullptr;
            p.node = -1;
        }
        tape.watch(p);
    });
}

// Drop any tape association from every parameter (e.g. before inference).
template <typename T, typename Model>
void detach_params(Model& model) {
    model.visit("", [&](const std::string&, Tensor<T>& p, bool) {
        p.tape = nullptr;
        p.node = -1;
    });
}

}  // namespace gcv
