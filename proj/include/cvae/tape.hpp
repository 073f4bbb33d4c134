#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cvae/tensor.hpp"

namespace cvae {

/// Trainable tensor with an accumulated gradient buffer.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param(std::string n, std::vector<int> shape)
        : name(std::move(n)), value(shape), grad(shape) {}

    void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// One value in the computation graph. Nodes are owned by the Tape and live
/// until the tape is destroyed; backward closures accumulate into parents.
struct Node {
    Tensor val;
    Tensor grad;  // allocated only when requires_grad
    bool requires_grad = false;
    std::function<void(Node&)> backward;
};

using Var = Node*;

/// Reverse-mode autodiff tape. A fresh tape is built per forward pass; calling
/// backward() walks nodes in reverse creation order.
class Tape {
public:
    Var alloc(Tensor val, bool requires_grad);
    Var constant(Tensor val) { return alloc(std::move(val), false); }
    Var constant_scalar(double v) { return alloc(Tensor::scalar(v), false); }

    /// Leaf for a parameter: copies the value in, and on backward adds the
    /// node gradient into p.grad.
    Var leaf(Param& p);

    /// Read-only leaf (no gradient accumulation).
    Var value_leaf(const Param& p) { return constant(p.value); }

    void backward(Var loss);

    size_t node_count() const { return nodes_.size(); }

private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

// ---- elementwise ----
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var neg(Tape& t, Var a);
Var scale(Tape& t, Var a, double c);
Var add_scalar(Tape& t, Var a, double c);
Var exp_(Tape& t, Var a);
Var log_(Tape& t, Var a);
Var square(Tape& t, Var a);
Var tanh_(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var elu(Tape& t, Var a);
/// m * tanh(x / m): smooth squashing into (-m, m), identity-like near 0.
Var scaled_tanh(Tape& t, Var a, double m);
/// Hard clamp; gradient passes only where the input is strictly inside.
Var clamp(Tape& t, Var a, double lo, double hi);

// ---- reductions / shape ----
Var sum_all(Tape& t, Var a);   // -> [1]
Var mean_all(Tape& t, Var a);  // -> [1]
Var sum_cols(Tape& t, Var a);  // [N,M] -> [N]
Var reshape(Tape& t, Var a, std::vector<int> shape);
Var slice_cols(Tape& t, Var a, int start, int len);   // [N,M] -> [N,len]
Var concat_cols(Tape& t, Var a, Var b);               // [N,M1],[N,M2] -> [N,M1+M2]
/// Stops gradient: a constant copy of the value.
Var detach(Tape& t, Var a);

// ---- image ops ----
/// [N,A] -> [N,A,H,W], each attribute broadcast to a constant plane.
Var broadcast_planes(Tape& t, Var y, int h, int w);
Var concat_channels(Tape& t, Var a, Var b);  // [N,C1,H,W],[N,C2,H,W]

// ---- linear algebra / conv ----
/// x:[N,I], w:[O,I], b:[O] -> [N,O]
Var linear(Tape& t, Var x, Var w, Var b);
/// x:[N,Ci,H,W], w:[Co,Ci,kh,kw], b:[Co]; zero padding.
Var conv2d(Tape& t, Var x, Var w, Var b, int sh, int sw, int ph, int pw);
/// x:[N,Ci,H,W], w:[Ci,Co,kh,kw], b:[Co]; output (H-1)*sh - 2ph + kh + oph.
Var conv_transpose2d(Tape& t, Var x, Var w, Var b, int sh, int sw, int ph,
                     int pw, int oph, int opw);

}  // namespace cvae
