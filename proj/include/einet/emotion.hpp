// Copyright 2026 EINet Authors
// Utterance-level VAD evaluation (pluggable providers) and the learned
// broadcast of a VAD triple to frame-level emotion features.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <map>
#include <string>

#include "einet/corpus.hpp"
#include "einet/nn.hpp"

namespace einet::emotion {

inline Tensor vad_row(const VadValues& v) {
    return Tensor({1, 3}, {v.valence, v.arousal, v.dominance});
}

struct EvaluatorProvider {
    enum class Kind { oracle, file };
    Kind kind = Kind::oracle;
    double oracle_sigma = 0.02;
    std::map<std::string, VadValues> table;  // file provider rows

    static EvaluatorProvider oracle(double sigma = 0.02);
    // one line per utterance: `id valence arousal dominance`
    static EvaluatorProvider from_file(const std::string& path);
};

// Oracle: ground-truth VAD plus clipped zero-mean gaussian noise.
// File: precomputed triple keyed by utterance id.
VadValues evaluate(const corpus::Utterance& u, const EvaluatorProvider& p, Rng& rng);

// Two 1x1 convolutions, a WaveNet residual block, and a linear projection,
// applied to the VAD triple as a length-one sequence and broadcast to frames,
// so every frame receives an identical learned feature row.
struct VadEncoder {
    int out_dim = 0;
    nn::Linear pre1, pre2;
    nn::WaveNetBlock block;
    nn::Linear proj;

    static VadEncoder create(nn::ParamStore& s, const std::string& name, int hidden, int out_dim,
                             int wavenet_layers, int kernel, Rng& rng);
    ad::Var encode_row(ad::Graph& g, nn::Binder& bind, ad::Var vad /*[1x3]*/) const;
    ad::Var expand_to_frames(ad::Graph& g, nn::Binder& bind, ad::Var vad, int t_frames) const;
};

}  // namespace einet::emotion
