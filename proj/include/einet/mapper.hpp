// Copyright 2026 EINet Authors
// Intensity mapper: an invertible coupling flow over centered VAD triples,
// conditioned on the emotion embedding, plus a category classifier. Latent
// coordinate 0 is the intensity axis (squashed by a sigmoid).
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <utility>

#include "einet/emotion.hpp"
#include "einet/nn.hpp"

namespace einet::mapper {

struct GammaBeta {
    double gamma = 1.0;
    double beta = 0.0;
};

// gamma = max(floor, start - 0.01 * floor(epoch / 5)); beta = 1 - gamma
GammaBeta gamma_schedule(int epoch, double start = 1.0, double floor_value = 0.30);

struct MapperForward {
    ad::Var z;          // [1x3] flow image of the centered VAD
    ad::Var logdet;     // scalar
    ad::Var logits;     // [1xK] category logits from the raw VAD
    ad::Var intensity;  // [1x1] sigmoid(z[0]), strictly inside (0,1)
};

struct MapperInverse {
    ad::Var vad;     // [1x3]
    ad::Var logdet;  // scalar (negative of the forward logdet along this path)
    bool diverged = false;  // inverted VAD escaped [-0.1, 1.1]^3
};

class IntensityMapper {
public:
    static IntensityMapper create(nn::ParamStore& s, const std::string& name, int n_emotions,
                                  int emb_dim, int n_flows, int flow_hidden, int cls_hidden,
                                  Rng& rng);

    // training direction; the flow is conditioned on the known category
    MapperForward forward(ad::Graph& g, nn::Binder& bind, ad::Var vad, int emotion_id) const;

    // inference direction; intensity is a [1x1] value strictly inside (0,1).
    // residual: optional 2-vector for the non-intensity latent coordinates
    // (zero keeps the deterministic prior mode).
    MapperInverse inverse(ad::Graph& g, nn::Binder& bind, int emotion_id, ad::Var intensity,
                          const double residual[2] = nullptr) const;

    // convenience plain-value wrappers
    emotion::VadValues inverse_values(nn::ParamStore& s, int emotion_id, double intensity,
                                      const double residual[2] = nullptr, bool* diverged = nullptr) const;

    int n_emotions() const { return n_emotions_; }
    const nn::CouplingStack& flow() const { return flow_; }
    const nn::Embedding& embedding() const { return emb_; }

private:
    int n_emotions_ = 0;
    nn::Embedding emb_;
    nn::CouplingStack flow_;
    nn::Linear cls1_, cls2_;
};

// stable -log softmax(logits)[label]; logits is [1xK]
ad::Var cross_entropy(ad::Graph& g, ad::Var logits, int label);

// Eq-8-shaped combination: gamma * ce + beta * fm, where fm is the
// discriminator feature-matching term computed by the training step.
ad::Var balanced_im_loss(ad::Graph& g, double gamma, double beta, ad::Var ce, ad::Var fm);

}  // namespace einet::mapper
