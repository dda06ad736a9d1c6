// Copyright 2026 EINet Authors
// Building-block implementations.
//
// Licensed under the Apache License, Version 2.0

#include "einet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace einet::nn {

Param* ParamStore::create(const std::string& name, Tensor init) {
    if (params_.count(name)) throw ContractError("ParamStore: duplicate parameter " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->grad = Tensor::zeros(init.shape);
    p->adam_m = Tensor::zeros(init.shape);
    p->adam_v = Tensor::zeros(init.shape);
    p->value = std::move(init);
    Param* raw = p.get();
    params_.emplace(name, std::move(p));
    return raw;
}

Param* ParamStore::find(const std::string& name) const {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : it->second.get();
}

std::vector<Param*> ParamStore::all() const {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (auto& [k, v] : params_) out.push_back(v.get());
    return out;
}

int64_t ParamStore::total_size() const {
    int64_t n = 0;
    for (auto& [k, v] : params_) n += v->value.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [k, v] : params_) std::fill(v->grad.data.begin(), v->grad.data.end(), 0.0);
}

Linear Linear::create(ParamStore& s, const std::string& name, int in, int out, Rng& rng,
                      bool zero_init) {
    Linear l;
    if (zero_init) {
        l.w = s.create(name + ".w", Tensor::zeros({in, out}));
    } else {
        l.w = s.create(name + ".w", Tensor::randn({in, out}, rng, 1.0 / std::sqrt(in)));
    }
    l.b = s.create(name + ".b", Tensor::zeros({out}));
    return l;
}

Conv1d Conv1d::create(ParamStore& s, const std::string& name, int cin, int cout, int k,
                      int dilation, Rng& rng, bool zero_init) {
    Conv1d c;
    c.dilation = dilation;
    if (zero_init) {
        c.w = s.create(name + ".w", Tensor::zeros({cout, k, cin}));
    } else {
        c.w = s.create(name + ".w",
                       Tensor::randn({cout, k, cin}, rng, 1.0 / std::sqrt(double(cin) * k)));
    }
    c.b = s.create(name + ".b", Tensor::zeros({cout}));
    return c;
}

TConv1d TConv1d::create(ParamStore& s, const std::string& name, int cin, int cout, int stride,
                        Rng& rng) {
    TConv1d c;
    c.stride = stride;
    const int k = 2 * stride;
    c.w = s.create(name + ".w",
                   Tensor::randn({cout, k, cin}, rng, 1.0 / std::sqrt(double(cin) * k)));
    c.b = s.create(name + ".b", Tensor::zeros({cout}));
    return c;
}

LayerNorm LayerNorm::create(ParamStore& s, const std::string& name, int dim) {
    LayerNorm ln;
    ln.gain = s.create(name + ".gain", Tensor::full({dim}, 1.0));
    ln.bias = s.create(name + ".bias", Tensor::zeros({dim}));
    return ln;
}

Embedding Embedding::create(ParamStore& s, const std::string& name, int count, int dim, Rng& rng) {
    Embedding e;
    e.table = s.create(name + ".table", Tensor::randn({count, dim}, rng, 1.0 / std::sqrt(dim)));
    return e;
}

WaveNetBlock WaveNetBlock::create(ParamStore& s, const std::string& name, int width, int cond_dim,
                                  int layers, int kernel, Rng& rng, bool zero_res) {
    WaveNetBlock b;
    b.width = width;
    for (int l = 0; l < layers; ++l) {
        const int dil = 1 << l;
        b.in_conv.push_back(Conv1d::create(s, name + ".in" + std::to_string(l), width, 2 * width,
                                           kernel, dil, rng));
        if (cond_dim > 0)
            b.cond_proj.push_back(
                Linear::create(s, name + ".cond" + std::to_string(l), cond_dim, 2 * width, rng));
        b.res_proj.push_back(
            Linear::create(s, name + ".res" + std::to_string(l), width, width, rng, zero_res));
    }
    return b;
}

ad::Var WaveNetBlock::apply(ad::Graph& g, Binder& bind, ad::Var x, ad::Var cond) const {
    ad::Var h = x;
    for (size_t l = 0; l < in_conv.size(); ++l) {
        ad::Var pre = in_conv[l].apply(g, bind, h);
        if (!cond_proj.empty()) {
            if (!cond) throw ContractError("WaveNetBlock: conditioning expected but missing");
            pre = g.add(pre, cond_proj[l].apply(g, bind, cond));
        }
        ad::Var ga = g.slice_cols(pre, 0, width);
        ad::Var gb = g.slice_cols(pre, width, width);
        ad::Var z = g.mul(g.tanh_(ga), g.sigmoid_(gb));
        h = g.add(h, res_proj[l].apply(g, bind, z));
    }
    return h;
}

FftBlock FftBlock::create(ParamStore& s, const std::string& name, int dim, int heads,
                          int ffn_hidden, int kernel, Rng& rng, double dropout_p) {
    if (dim % heads != 0) throw ContractError("FftBlock: dim must divide by heads");
    FftBlock f;
    f.dim = dim;
    f.heads = heads;
    f.dropout_p = dropout_p;
    f.wq = Linear::create(s, name + ".wq", dim, dim, rng);
    f.wk = Linear::create(s, name + ".wk", dim, dim, rng);
    f.wv = Linear::create(s, name + ".wv", dim, dim, rng);
    f.wo = Linear::create(s, name + ".wo", dim, dim, rng);
    f.ffn1 = Conv1d::create(s, name + ".ffn1", dim, ffn_hidden, kernel, 1, rng);
    f.ffn2 = Conv1d::create(s, name + ".ffn2", ffn_hidden, dim, kernel, 1, rng);
    f.ln1 = LayerNorm::create(s, name + ".ln1", dim);
    f.ln2 = LayerNorm::create(s, name + ".ln2", dim);
    return f;
}

ad::Var FftBlock::apply(ad::Graph& g, Binder& bind, ad::Var x, const std::vector<int>* valid,
                        Rng& rng, bool training) const {
    const int L = x->val.rows();
    if (valid) {
        if (static_cast<int>(valid->size()) != L)
            throw ContractError("FftBlock: mask length mismatch");
        bool any = false;
        for (int v : *valid) any = any || (v != 0);
        if (!any) throw InputError("FftBlock: all positions masked");
    }
    const int dh = dim / heads;
    ad::Var q = wq.apply(g, bind, x);
    ad::Var k = wk.apply(g, bind, x);
    ad::Var v = wv.apply(g, bind, x);

    ad::Var ctx = nullptr;
    for (int h = 0; h < heads; ++h) {
        ad::Var qh = g.slice_cols(q, h * dh, dh);
        ad::Var kh = g.slice_cols(k, h * dh, dh);
        ad::Var vh = g.slice_cols(v, h * dh, dh);
        ad::Var scores = g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / std::sqrt(double(dh)));
        ad::Var attn = g.softmax_rows(scores, valid);
        attn = g.dropout(attn, dropout_p, rng, training);
        ad::Var ch = g.matmul(attn, vh);
        ctx = ctx ? g.concat_cols(ctx, ch) : ch;
    }
    ad::Var att_out = g.dropout(wo.apply(g, bind, ctx), dropout_p, rng, training);
    ad::Var y1 = ln1.apply(g, bind, g.add(x, att_out));

    ad::Var ff = ffn2.apply(g, bind, g.lrelu(ffn1.apply(g, bind, y1), 0.1));
    ff = g.dropout(ff, dropout_p, rng, training);
    ad::Var out = ln2.apply(g, bind, g.add(y1, ff));

    if (valid) {
        std::vector<double> rowmask(static_cast<size_t>(L));
        for (int i = 0; i < L; ++i) rowmask[i] = (*valid)[i] ? 1.0 : 0.0;
        // zero masked rows: multiply by a column of row gates
        Tensor gate({L, out->val.cols()});
        for (int i = 0; i < L; ++i)
            for (int c = 0; c < out->val.cols(); ++c) gate.at(i, c) = rowmask[i];
        out = g.mul(out, g.constant(std::move(gate)));
    }
    return out;
}

CouplingStack CouplingStack::create(ParamStore& s, const std::string& name, int dim, int n_layers,
                                    int hidden, int cond_dim, Rng& rng) {
    if (dim < 2) throw ContractError("CouplingStack: dim must be at least 2");
    CouplingStack cs;
    cs.dim = dim;
    cs.cond_dim = cond_dim;
    for (int i = 0; i < n_layers; ++i) {
        Layer l;
        const int ca = (dim + 1) / 2;
        if (i % 2 == 0) {
            l.a_start = 0;
            l.a_len = ca;
            l.b_start = ca;
            l.b_len = dim - ca;
        } else {
            l.a_start = dim - ca;
            l.a_len = ca;
            l.b_start = 0;
            l.b_len = dim - ca;
        }
        const std::string ln = name + ".l" + std::to_string(i);
        l.c1 = Conv1d::create(s, ln + ".c1", l.a_len + cond_dim, hidden, 3, 1, rng);
        l.c2 = Conv1d::create(s, ln + ".c2", hidden, hidden, 3, 1, rng);
        l.proj = Linear::create(s, ln + ".proj", hidden, 2 * l.b_len, rng, /*zero_init=*/true);
        cs.layers.push_back(std::move(l));
    }
    return cs;
}

std::pair<ad::Var, ad::Var> CouplingStack::scale_translate(ad::Graph& g, Binder& bind,
                                                           const Layer& l, ad::Var xa,
                                                           ad::Var cond) const {
    ad::Var in = xa;
    if (cond_dim > 0) {
        if (!cond) throw ContractError("CouplingStack: conditioning expected but missing");
        in = g.concat_cols(xa, cond);
    }
    ad::Var h = g.lrelu(l.c1.apply(g, bind, in), 0.1);
    h = g.lrelu(l.c2.apply(g, bind, h), 0.1);
    ad::Var st = l.proj.apply(g, bind, h);
    ad::Var s_raw = g.slice_cols(st, 0, l.b_len);
    ad::Var t = g.slice_cols(st, l.b_len, l.b_len);
    // soft cap keeps exp(s) well-conditioned for arbitrary parameters
    ad::Var s = g.scale(g.tanh_(g.scale(s_raw, 1.0 / s_cap)), s_cap);
    return {s, t};
}

std::pair<ad::Var, ad::Var> CouplingStack::forward(ad::Graph& g, Binder& bind, ad::Var x,
                                                   ad::Var cond) const {
    if (x->val.cols() != dim) throw ContractError("CouplingStack: width mismatch");
    ad::Var logdet = g.scalar(0.0);
    ad::Var cur = x;
    for (const Layer& l : layers) {
        ad::Var xa = g.slice_cols(cur, l.a_start, l.a_len);
        ad::Var xb = g.slice_cols(cur, l.b_start, l.b_len);
        auto [s, t] = scale_translate(g, bind, l, xa, cond);
        ad::Var yb = g.add(g.mul(xb, g.exp_(s)), t);
        cur = l.b_start == 0 ? g.concat_cols(yb, xa) : g.concat_cols(xa, yb);
        logdet = g.add(logdet, g.sum(s));
    }
    return {cur, logdet};
}

std::pair<ad::Var, ad::Var> CouplingStack::inverse(ad::Graph& g, Binder& bind, ad::Var y,
                                                   ad::Var cond) const {
    if (y->val.cols() != dim) throw ContractError("CouplingStack: width mismatch");
    ad::Var logdet = g.scalar(0.0);
    ad::Var cur = y;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        const Layer& l = *it;
        ad::Var ya = g.slice_cols(cur, l.a_start, l.a_len);
        ad::Var yb = g.slice_cols(cur, l.b_start, l.b_len);
        auto [s, t] = scale_translate(g, bind, l, ya, cond);
        ad::Var xb = g.mul(g.sub(yb, t), g.exp_(g.neg(s)));
        cur = l.b_start == 0 ? g.concat_cols(xb, ya) : g.concat_cols(ya, xb);
        logdet = g.sub(logdet, g.sum(s));
    }
    return {cur, logdet};
}

AlignmentPath monotonic_align(const Tensor& loglik) {
    const int L = loglik.rows(), T = loglik.cols();
    if (L < 1 || T < 1) throw InputError("monotonic_align: empty lattice");
    if (L > T)
        throw InputError("monotonic_align: infeasible, more phonemes (" + std::to_string(L) +
                         ") than frames (" + std::to_string(T) + ")");
    for (double x : loglik.data)
        if (std::isnan(x)) throw InputError("monotonic_align: NaN log-likelihood");

    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    Tensor Q({L, T});
    std::fill(Q.data.begin(), Q.data.end(), kNegInf);

    auto valid = [&](int i, int t) { return i <= t && (L - 1 - i) <= (T - 1 - t); };
    for (int t = 0; t < T; ++t) {
        if (valid(0, t)) Q.at(0, t) = (t == 0 ? 0.0 : Q.at(0, t - 1)) + loglik.at(0, t);
        for (int i = 1; i < L; ++i) {
            if (!valid(i, t) || t == 0) continue;
            const double stay = valid(i, t - 1) ? Q.at(i, t - 1) : kNegInf;
            const double advance = valid(i - 1, t - 1) ? Q.at(i - 1, t - 1) : kNegInf;
            Q.at(i, t) = std::max(stay, advance) + loglik.at(i, t);
        }
    }

    AlignmentPath path;
    path.durations.assign(static_cast<size_t>(L), 0);
    path.score = Q.at(L - 1, T - 1);
    int i = L - 1;
    for (int t = T - 1; t >= 0; --t) {
        path.durations[static_cast<size_t>(i)] += 1;
        if (t == 0) break;
        if (i == 0) continue;
        const double stay = valid(i, t - 1) ? Q.at(i, t - 1) : kNegInf;
        const double advance = valid(i - 1, t - 1) ? Q.at(i - 1, t - 1) : kNegInf;
        // tie -> stay, which pushes this phoneme's entry frame earlier
        if (advance > stay) --i;
    }
    return path;
}

}  // namespace einet::nn
