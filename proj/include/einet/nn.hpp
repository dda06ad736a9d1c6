// Copyright 2026 EINet Authors
// Trainable building blocks: parameter store, linear/conv layers, WaveNet
// residual block, Feed-Forward Transformer block, affine coupling stack, and
// monotonic alignment search.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "einet/graph.hpp"
#include "einet/tensor.hpp"

namespace einet::nn {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;     // accumulated across a batch, zeroed by the optimizer step
    Tensor adam_m;
    Tensor adam_v;
};

class ParamStore {
public:
    Param* create(const std::string& name, Tensor init);
    Param* find(const std::string& name) const;
    std::vector<Param*> all() const;  // name-sorted
    int64_t total_size() const;
    void zero_grads();

private:
    std::map<std::string, std::unique_ptr<Param>> params_;
};

// Binds parameters to leaf nodes of one Graph, one leaf per param, and copies
// leaf gradients back into the store after backward(). Insertion order is
// kept so gradient accumulation is deterministic.
class Binder {
public:
    Binder(ad::Graph& g, bool trainable) : g_(g), trainable_(trainable) {}

    ad::Var operator()(Param* p) {
        auto it = cache_.find(p);
        if (it != cache_.end()) return it->second;
        ad::Var v = g_.leaf(p->value, trainable_);
        cache_.emplace(p, v);
        order_.emplace_back(p, v);
        return v;
    }

    void accumulate_grads() {
        for (auto& [p, v] : order_) {
            if (!v->requires_grad || v->grad.numel() == 0) continue;
            for (int64_t i = 0; i < v->grad.numel(); ++i) p->grad[i] += v->grad[i];
        }
    }

private:
    ad::Graph& g_;
    bool trainable_;
    std::unordered_map<Param*, ad::Var> cache_;
    std::vector<std::pair<Param*, ad::Var>> order_;
};

struct Linear {
    Param* w = nullptr;  // [in x out]
    Param* b = nullptr;
    static Linear create(ParamStore& s, const std::string& name, int in, int out, Rng& rng,
                         bool zero_init = false);
    ad::Var apply(ad::Graph& g, Binder& bind, ad::Var x) const {
        return g.linear(x, bind(w), bind(b));
    }
};

struct Conv1d {
    Param* w = nullptr;  // {Cout, k, Cin}
    Param* b = nullptr;
    int dilation = 1;
    static Conv1d create(ParamStore& s, const std::string& name, int cin, int cout, int k,
                         int dilation, Rng& rng, bool zero_init = false);
    ad::Var apply(ad::Graph& g, Binder& bind, ad::Var x) const {
        return g.conv1d(x, bind(w), bind(b), dilation);
    }
};

struct TConv1d {
    Param* w = nullptr;  // {Cout, 2*stride, Cin}
    Param* b = nullptr;
    int stride = 2;
    static TConv1d create(ParamStore& s, const std::string& name, int cin, int cout, int stride,
                          Rng& rng);
    ad::Var apply(ad::Graph& g, Binder& bind, ad::Var x) const {
        return g.tconv1d(x, bind(w), bind(b), stride);
    }
};

struct LayerNorm {
    Param* gain = nullptr;
    Param* bias = nullptr;
    static LayerNorm create(ParamStore& s, const std::string& name, int dim);
    ad::Var apply(ad::Graph& g, Binder& bind, ad::Var x) const {
        return g.layer_norm(x, bind(gain), bind(bias));
    }
};

struct Embedding {
    Param* table = nullptr;  // [K x d]
    static Embedding create(ParamStore& s, const std::string& name, int count, int dim, Rng& rng);
    ad::Var apply(ad::Graph& g, Binder& bind, const std::vector<int>& ids) const {
        return g.gather_rows(bind(table), ids);
    }
};

// Gated dilated-convolution residual stack; conditioning is projected and
// added before the gate. Output is the residual stream after the last layer.
struct WaveNetBlock {
    int width = 0;
    std::vector<Conv1d> in_conv;    // width -> 2*width, dilated
    std::vector<Linear> cond_proj;  // cond_dim -> 2*width (empty if no cond)
    std::vector<Linear> res_proj;   // width -> width

    static WaveNetBlock create(ParamStore& s, const std::string& name, int width, int cond_dim,
                               int layers, int kernel, Rng& rng, bool zero_res = false);
    ad::Var apply(ad::Graph& g, Binder& bind, ad::Var x, ad::Var cond /*nullable*/) const;
};

// Self-attention + convolutional feed-forward with residual connections and
// post-layer normalization. Masked positions neither attend nor emit.
struct FftBlock {
    int dim = 0;
    int heads = 2;
    Linear wq, wk, wv, wo;
    Conv1d ffn1, ffn2;
    LayerNorm ln1, ln2;
    double dropout_p = 0.1;

    static FftBlock create(ParamStore& s, const std::string& name, int dim, int heads,
                           int ffn_hidden, int kernel, Rng& rng, double dropout_p);
    ad::Var apply(ad::Graph& g, Binder& bind, ad::Var x, const std::vector<int>* valid, Rng& rng,
                  bool training) const;
};

// Affine coupling stack. Each layer keeps a contiguous half fixed, transforms
// the rest with scale/translation subnets (zero-initialized final projection,
// so a fresh stack is the identity with logdet 0). Log-scales are soft-capped.
struct CouplingStack {
    int dim = 0;
    int cond_dim = 0;
    double s_cap = 5.0;
    struct Layer {
        int a_start, a_len;  // fixed half
        int b_start, b_len;  // transformed half
        Conv1d c1, c2;
        Linear proj;  // hidden -> 2*b_len, zero-init
    };
    std::vector<Layer> layers;

    static CouplingStack create(ParamStore& s, const std::string& name, int dim, int n_layers,
                                int hidden, int cond_dim, Rng& rng);
    // returns (y, logdet) where logdet is the scalar sum over frames and dims
    std::pair<ad::Var, ad::Var> forward(ad::Graph& g, Binder& bind, ad::Var x,
                                        ad::Var cond) const;
    std::pair<ad::Var, ad::Var> inverse(ad::Graph& g, Binder& bind, ad::Var y,
                                        ad::Var cond) const;

private:
    std::pair<ad::Var, ad::Var> scale_translate(ad::Graph& g, Binder& bind, const Layer& l,
                                                ad::Var xa, ad::Var cond) const;
};

struct AlignmentPath {
    std::vector<int> durations;  // one per phoneme, each >= 1, sums to T
    double score = 0.0;
};

// Maximum-score monotone, complete, non-skipping alignment over an [L x T]
// log-likelihood lattice. Ties prefer the path whose transitions happen
// earlier, resolved from the last phoneme backward.
AlignmentPath monotonic_align(const Tensor& loglik);

}  // namespace einet::nn
