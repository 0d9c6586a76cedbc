// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "nbfusion/tensor.hpp"

namespace nbf {

using GradMap = std::map<std::string, Tensor>;
using ParamMap = std::map<std::string, Tensor>;

// Reverse-mode tape over a fixed set of primitives. Ops record their inputs
// and a backward closure at execution time; backward() replays the records
// in reverse and returns one gradient per registered parameter.
//
// The op set is exactly what the fusion models need; there is no control-flow
// differentiation and no broadcasting beyond bias addition.
class Tape {
public:
    struct Var {
        std::size_t id = static_cast<std::size_t>(-1);
    };

    // Leaves. input() takes part in forward only; param() additionally
    // registers the node under a unique name for gradient collection.
    Var input(Tensor v);
    Var param(const std::string& name, const Tensor& v);

    // x rank-1 [n] -> W.x + b, or x rank-2 [B x n] -> row-wise with bias broadcast.
    Var affine(Var x, Var w, Var b);

    Var matmul(Var a, Var b);     // [n x k].[k x m]
    Var matmul_nt(Var a, Var b);  // [n x k].[m x k]^T

    Var add(Var a, Var b);        // same shape
    Var add_row_vector(Var x, Var v);  // x [B x d] + v [d] broadcast over rows
    Var scale(Var x, double c);
    Var one_minus(Var x);         // 1 - x elementwise
    Var sum(Var x);               // scalar

    Var relu(Var x);
    Var sigmoid(Var x);
    Var square(Var x);
    Var softmax_rows(Var x);      // rank-2, softmax per row

    // -log softmax(logits)[label], stable via max subtraction.
    Var softmax_cross_entropy(Var logits, std::size_t label);
    // Mean over the batch of per-row cross entropies.
    Var softmax_cross_entropy_mean(Var logits, const std::vector<std::size_t>& labels);

    Var concat_cols(Var a, Var b);                            // rank-1 or rank-2
    Var slice_cols(Var x, std::size_t start, std::size_t len);
    Var row_scale(Var x, Var s);  // x [B x d] * s [B] per row; rank-1 x with scalar s
    Var take_row(Var x, std::size_t i);
    Var reshape(Var x, std::vector<std::size_t> shape);

    // Toy-encoder primitives (single sample).
    Var conv2d_3x3_same(Var x, Var kernel, Var bias);  // x [Ci,H,W], k [Co,Ci,3,3]
    Var maxpool2x2(Var x);
    Var global_avg_pool(Var x);                        // [C,H,W] -> [C]
    Var embed_rows(Var table, const std::vector<std::size_t>& ids);  // gather rows

    const Tensor& value(Var v) const;
    std::size_t node_count() const { return nodes_.size(); }

    // Accumulates d(loss)/d(param) for every registered parameter; parameters
    // the loss does not depend on get zero gradients of matching shape.
    GradMap backward(Var loss);

private:
    struct Node {
        Tensor value;
        std::string param_name;  // empty unless parameter leaf
        bool needs_grad = false;
        std::function<void(Tape&, std::size_t)> backward;  // nullptr for leaves
    };

    std::size_t push(Tensor value, bool needs_grad,
                     std::function<void(Tape&, std::size_t)> backward);
    const Tensor& val(std::size_t id) const { return nodes_[id].value; }
    bool needs(std::size_t id) const { return nodes_[id].needs_grad; }
    Tensor& grad_buffer(std::size_t id);
    void check(Var v) const;

    std::deque<Node> nodes_;  // stable references: value() stays valid as ops are added
    std::vector<Tensor> grads_;
};

}  // namespace nbf
