// Copyright 2026 EINet Authors
// Intensity mapper implementation.
//
// Licensed under the Apache License, Version 2.0

#include "einet/mapper.hpp"

#include <cmath>
#include <iostream>

namespace einet::mapper {

GammaBeta gamma_schedule(int epoch, double start, double floor_value) {
    if (epoch < 0) throw ContractError("gamma_schedule: negative epoch");
    GammaBeta gb;
    gb.gamma = std::max(floor_value, start - 0.01 * (epoch / 5));
    gb.beta = 1.0 - gb.gamma;
    return gb;
}

IntensityMapper IntensityMapper::create(nn::ParamStore& s, const std::string& name,
                                        int n_emotions, int emb_dim, int n_flows,
                                        int flow_hidden, int cls_hidden, Rng& rng) {
    IntensityMapper m;
    m.n_emotions_ = n_emotions;
    m.emb_ = nn::Embedding::create(s, name + ".emb", n_emotions, emb_dim, rng);
    m.flow_ = nn::CouplingStack::create(s, name + ".flow", 3, n_flows, flow_hidden, emb_dim, rng);
    m.cls1_ = nn::Linear::create(s, name + ".cls1", 3, cls_hidden, rng);
    m.cls2_ = nn::Linear::create(s, name + ".cls2", cls_hidden, n_emotions, rng);
    return m;
}

MapperForward IntensityMapper::forward(ad::Graph& g, nn::Binder& bind, ad::Var vad,
                                       int emotion_id) const {
    if (vad->val.rows() != 1 || vad->val.cols() != 3)
        throw ContractError("IntensityMapper: expected a [1x3] VAD row");
    if (!vad->val.all_finite()) throw NumericError("IntensityMapper: non-finite VAD input");
    if (emotion_id < 0 || emotion_id >= n_emotions_)
        throw InputError("IntensityMapper: emotion id out of range");

    MapperForward out;
    ad::Var centered = g.add_scalar(vad, -0.5);
    ad::Var cond = emb_.apply(g, bind, {emotion_id});
    auto [z, logdet] = flow_.forward(g, bind, centered, cond);
    out.z = z;
    out.logdet = logdet;
    out.intensity = g.sigmoid_(g.slice_cols(z, 0, 1));
    ad::Var h = g.lrelu(cls1_.apply(g, bind, vad), 0.1);
    out.logits = cls2_.apply(g, bind, h);
    return out;
}

MapperInverse IntensityMapper::inverse(ad::Graph& g, nn::Binder& bind, int emotion_id,
                                       ad::Var intensity, const double residual[2]) const {
    if (emotion_id < 0 || emotion_id >= n_emotions_)
        throw InputError("IntensityMapper: emotion id out of range");
    if (intensity->val.numel() != 1) throw ContractError("IntensityMapper: intensity not scalar");
    const double ei = intensity->val[0];
    if (!(ei > 0.0 && ei < 1.0))
        throw InputError("IntensityMapper: intensity " + std::to_string(ei) +
                         " outside the open interval (0,1)");

    // z = (logit(e_i), residual...), inverted through the conditioned flow
    ad::Var one_minus = g.add_scalar(g.neg(intensity), 1.0);
    ad::Var z0 = g.sub(g.log_(intensity), g.log_(one_minus));
    ad::Var rest = g.constant(
        Tensor({1, 2}, {residual ? residual[0] : 0.0, residual ? residual[1] : 0.0}));
    ad::Var z = g.concat_cols(z0, rest);
    ad::Var cond = emb_.apply(g, bind, {emotion_id});
    auto [centered, logdet] = flow_.inverse(g, bind, z, cond);

    MapperInverse out;
    out.vad = g.add_scalar(centered, 0.5);
    out.logdet = logdet;
    for (int c = 0; c < 3; ++c) {
        const double v = out.vad->val[c];
        if (v < -0.1 || v > 1.1) out.diverged = true;
    }
    if (out.diverged)
        std::cerr << "warning: intensity mapper inversion left the VAD domain "
                     "(model likely undertrained)\n";
    return out;
}

emotion::VadValues IntensityMapper::inverse_values(nn::ParamStore& s, int emotion_id,
                                                   double intensity, const double residual[2],
                                                   bool* diverged) const {
    (void)s;
    ad::Graph g;
    nn::Binder bind(g, /*trainable=*/false);
    auto inv = inverse(g, bind, emotion_id, g.scalar(intensity), residual);
    if (diverged) *diverged = inv.diverged;
    return {inv.vad->val[0], inv.vad->val[1], inv.vad->val[2]};
}

ad::Var cross_entropy(ad::Graph& g, ad::Var logits, int label) {
    const int k = logits->val.cols();
    if (logits->val.rows() != 1) throw ContractError("cross_entropy: expected one row of logits");
    if (label < 0 || label >= k) throw ContractError("cross_entropy: label out of range");
    double mx = logits->val[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, logits->val[i]);
    // shift by the (constant) max for stability; gradient is unaffected
    ad::Var shifted = g.add_scalar(logits, -mx);
    ad::Var lse = g.log_(g.sum(g.exp_(shifted)));
    return g.sub(lse, g.slice_cols(shifted, label, 1));
}

ad::Var balanced_im_loss(ad::Graph& g, double gamma, double beta, ad::Var ce, ad::Var fm) {
    return g.add(g.scale(ce, gamma), g.scale(fm, beta));
}

}  // namespace einet::mapper
