#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "genconvit/common.hpp"

namespace gcv {

template <typename T>
class Tape;

// Dense row-major tensor. Storage is shared between views (reshape is free);
// ops never mutate their inputs. `tape`/`node` link the value into a gradient
// tape; a tensor with tape == nullptr is detached and never receives gradients.
template <typename T>
struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<T>> store;
    Tape<T>* tape = nullptr;
    int node = -1;

    Tensor() = default;

    static Tensor zeros(Shape s) {
        Tensor t;
        t.shape = std::move(s);
        t.store = std::make_shared<std::vector<T>>(static_cast<size_t>(numel_of(t.shape)), T(0));
        return t;
    }

    static Tensor full(Shape s, T v) {
        Tensor t = zeros(std::move(s));
        std::fill(t.store->begin(), t.store->end(), v);
        return t;
    }

    static Tensor scalar(T v) { return full({1}, v); }

    static Tensor of(Shape s, std::vector<T> values) {
        if (numel_of(s) != static_cast<i64>(values.size()))
            fail_shape("tensor init: shape ", shape_str(s), " expects ", numel_of(s),
                       " values, got ", values.size());
        Tensor t;
        t.shape = std::move(s);
        t.store = std::make_shared<std::vector<T>>(std::move(values));
        return t;
    }

    i64 numel() const { return store ? static_cast<i64>(store->size()) : 0; }
    i64 ndim() const { return static_cast<i64>(shape.size()); }
    i64 size(i64 axis) const { return shape[static_cast<size_t>(axis)]; }

    T* ptr() { return store->data(); }
    const T* ptr() const { return store->data(); }

    T item() const {
        if (numel() != 1) fail_shape("item() on non-scalar tensor of shape ", shape_str(shape));
        return (*store)[0];
    }

    Tensor detached() const {
        Tensor t = *this;
        t.tape = nullptr;
        t.node = -1;
        return t;
    }

    Tensor clone() const {
        Tensor t;
        t.shape = shape;
        t.store = std::make_shared<std::vector<T>>(*store);
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t;
        t.shape = shape;
        t.store = std::make_shared<std::vector<U>>(store->size());
        for (size_t i = 0; i < store->size(); ++i) (*t.store)[i] = static_cast<U>((*store)[i]);
        return t;
    }
};

template <typename T>
inline Shape strides_of(const Shape& s) {
    Shape st(s.size());
    i64 acc = 1;
    for (i64 i = static_cast<i64>(s.size()) - 1; i >= 0; --i) {
        st[static_cast<size_t>(i)] = acc;
        acc *= s[static_cast<size_t>(i)];
    }
    return st;
}

}  // namespace gcv
