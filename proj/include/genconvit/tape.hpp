#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "genconvit/tensor.hpp"

namespace gcv {

// Reverse-mode gradient tape. Nodes are appended in forward execution order;
// backward() walks them once in reverse, pushing vector-Jacobian products into
// the input accumulators. A node's upstream buffer is released as soon as it
// has been consumed, so only leaf gradients survive the sweep.
template <typename T>
class Tape {
public:
    struct Node {
        Shape shape;
        std::function<void(Tape&, const Tensor<T>&)> backward;  // null for leaves
    };

    void watch(Tensor<T>& t) {
        if (t.tape == this && t.node >= 0) return;
        check(t.tape == nullptr, "tensor already watched by another tape");
        check(!consumed_, "tape already consumed by backward()");
        t.tape = this;
        t.node = record(t.shape, nullptr);
    }

    int record(const Shape& shape, std::function<void(Tape&, const Tensor<T>&)> backward) {
        check(!consumed_, "tape already consumed by backward()");
        nodes_.push_back(Node{shape, std::move(backward)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    void accumulate(int node, Tensor<T>&& g) {
        Tensor<T>& slot = grads_[static_cast<size_t>(node)];
        if (!slot.store) {
            slot = std::move(g);
            return;
        }
        T* a = slot.ptr();
        const T* b = g.ptr();
        const i64 n = slot.numel();
        for (i64 i = 0; i < n; ++i) a[i] += b[i];
    }

    void backward(const Tensor<T>& loss) {
        if (loss.numel() != 1)
            fail_shape("backward() needs a scalar loss, got shape ", shape_str(loss.shape));
        check(loss.tape == this && loss.node >= 0, "loss is not connected to this tape");
        check(!consumed_, "tape already consumed by backward()");
        consumed_ = true;
        grads_.assign(nodes_.size(), Tensor<T>{});
        grads_[static_cast<size_t>(loss.node)] = Tensor<T>::scalar(T(1));
        for (int i = loss.node; i >= 0; --i) {
            Node& nd = nodes_[static_cast<size_t>(i)];
            Tensor<T>& g = grads_[static_cast<size_t>(i)];
            if (!g.store) continue;
            if (nd.backward) {
                nd.backward(*this, g);
                g = Tensor<T>{};  // upstream buffer no longer needed
            }
        }
    }

    // Gradient of a watched tensor; an all-zero tensor marks parameters the
    // loss never reached.
    Tensor<T> grad(const Tensor<T>& t) const {
        check(t.tape == this && t.node >= 0, "grad() of a tensor not on this tape");
        check(consumed_, "grad() before backward()");
        const Tensor<T>& g = grads_[static_cast<size_t>(t.node)];
        if (!g.store) return Tensor<T>::zeros(t.shape);
        return g;
    }

    bool grad_defined(const Tensor<T>& t) const {
        check(t.tape == this && t.node >= 0, "grad_defined() of a tensor not on this tape");
        return consumed_ && grads_[static_cast<size_t>(t.node)].store != nullptr;
    }

    size_t size() const { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;
    bool consumed_ = false;
};

// Shared helpers for op implementations.

template <typename T>
inline Tape<T>* tape_of(const Tensor<T>& a) {
    return a.tape;
}

template <typename T>
inline Tape<T>* tape_of(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.tape && b.tape) check(a.tape == b.tape, "operands recorded on different tapes");
    return a.tape ? a.tape : b.tape;
}

template <typename T>
inline Tape<T>* tape_of(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& c) {
    Tape<T>* t = tape_of(a, b);
    if (t && c.tape) check(t == c.tape, "operands recorded on different tapes");
    return t ? t : c.tape;
}

}  // namespace gcv
