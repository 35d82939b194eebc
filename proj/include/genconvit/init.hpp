#pragma once

#include <cmath>

#include "genconvit/rng.hpp"
#include "genconvit/tensor.hpp"

namespace gcv {

template <typename T>
void fill_uniform(Tensor<T>& t, T lo, T hi, Rng& rng) {
    T* p = t.ptr();
    for (i64 i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(uniform(rng, lo, hi));
}

// He-style uniform initialization with bound = sqrt(6 / fan), where
// fan = numel / leading axis (the per-unit input count for conv and linear
// layouts, and the usual substitute for transposed-conv layouts).
template <typename T>
void kaiming_uniform(Tensor<T>& w, Rng& rng) {
    check(!w.shape.empty() && w.shape[0] > 0, "kaiming_uniform: empty weight");
    const i64 fan_in = w.numel() / w.shape[0];
    check(fan_in > 0, "kaiming_uniform: zero fan-in");
    const T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    fill_uniform(w, -bound, bound, rng);
}

}  // namespace gcv
