// Copyright 2026 EINet Authors
// Reverse-mode autodiff over dense double tensors. A Graph owns the nodes of
// one forward pass; creation order is the topological order used by backward.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "einet/common.hpp"
#include "einet/tensor.hpp"

namespace einet::ad {

struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Node&)> backprop;  // accumulates into parent grads
};

using Var = Node*;

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // ---- leaves ----
    Var leaf(Tensor t, bool requires_grad);
    Var constant(Tensor t) { return leaf(std::move(t), false); }
    Var scalar(double v) { return constant(Tensor::scalar(v)); }

    // ---- elementwise ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var neg(Var a) { return scale(a, -1.0); }
    Var tanh_(Var a);
    Var sigmoid_(Var a);
    Var exp_(Var a);
    Var log_(Var a);
    Var log_floor(Var a, double floor);  // log(max(x, floor)), zero grad below floor
    Var sin_(Var a);
    Var square(Var a);
    Var abs_(Var a);
    Var lrelu(Var a, double slope = 0.1);
    Var softplus(Var a);
    Var max_scalar(Var a, double c);
    Var mul_rowconst(Var a, const std::vector<double>& v);  // y[t,c] = x[t,c] * v[c]

    // ---- linear algebra ----
    Var matmul(Var a, Var b);               // [m x k] * [k x n]
    Var transpose(Var a);                   // [m x n] -> [n x m]
    Var add_bias(Var x, Var b);             // rows of x + b (b has numel == cols)
    Var linear(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }

    // ---- convolutions (sequence-major: x is [T x C]) ----
    // weight layout {Cout, k, Cin}; odd k, zero padding, same output length
    Var conv1d(Var x, Var w, Var b, int dilation = 1);
    // transposed conv, output length T*stride, kernel k = 2*stride, pad stride/2
    Var tconv1d(Var x, Var w, Var b, int stride);
    Var avg_pool_rows(Var x, int factor);  // [N x C] -> [N/factor x C]

    // ---- shape ----
    Var slice_rows(Var a, int start, int n);
    Var slice_cols(Var a, int start, int n);
    Var concat_cols(Var a, Var b);
    Var concat_rows(Var a, Var b);
    Var broadcast_row(Var a, int rows);            // [1 x d] -> [rows x d]
    Var gather_rows(Var table, const std::vector<int>& ids);
    Var repeat_rows(Var a, const std::vector<int>& counts);  // expand by per-row counts
    Var gather_flat(Var a, std::shared_ptr<const std::vector<int64_t>> idx,
                    std::vector<int> out_shape);
    Var cumsum_col(Var a);  // [n x 1] prefix sums

    // ---- reductions ----
    Var sum(Var a);       // scalar
    Var mean(Var a);      // scalar
    Var row_sum(Var a);   // [T x d] -> [T x 1]
    Var col_sum(Var a);   // [T x d] -> [1 x d]

    // ---- structured ----
    Var softmax_rows(Var a, const std::vector<int>* valid = nullptr);
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    Var dropout(Var x, double p, Rng& rng, bool training);
    Var stop_grad(Var a);
    // power spectrum per row: [F x n_fft] -> [F x (n_fft/2+1)]
    Var rdft_power(Var frames);

    // ---- driver ----
    void backward(Var root);

    size_t size() const { return nodes_.size(); }

private:
    Var make(Tensor val, std::vector<Var> parents, std::function<void(Node&)> bp);
    std::deque<std::unique_ptr<Node>> nodes_;
};

// Sum of squared error helper trees used across losses.
inline Var mse(Graph& g, Var a, Var b) { return g.mean(g.square(g.sub(a, b))); }
inline Var mae(Graph& g, Var a, Var b) { return g.mean(g.abs_(g.sub(a, b))); }

}  // namespace einet::ad
