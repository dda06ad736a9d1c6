// Copyright 2026 EINet Authors
// Evaluator providers and VAD feature expansion.
//
// Licensed under the Apache License, Version 2.0

#include "einet/emotion.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace einet::emotion {

EvaluatorProvider EvaluatorProvider::oracle(double sigma) {
    EvaluatorProvider p;
    p.kind = Kind::oracle;
    p.oracle_sigma = sigma;
    return p;
}

EvaluatorProvider EvaluatorProvider::from_file(const std::string& path) {
    EvaluatorProvider p;
    p.kind = Kind::file;
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open VAD file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::istringstream is(t);
        std::string id;
        VadValues v;
        if (!(is >> id >> v.valence >> v.arousal >> v.dominance))
            throw LoadError(path + ":" + std::to_string(lineno) + ": expected `id v a d`");
        try {
            v.validate();
        } catch (const InputError& e) {
            throw LoadError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        p.table[id] = v;
    }
    return p;
}

VadValues evaluate(const corpus::Utterance& u, const EvaluatorProvider& p, Rng& rng) {
    if (p.kind == EvaluatorProvider::Kind::oracle) {
        if (!u.vad)
            throw InputError("oracle evaluator needs ground-truth VAD, missing for " + u.id);
        VadValues v = *u.vad;
        if (p.oracle_sigma > 0.0) {
            v.valence = std::clamp(v.valence + rng.gaussian() * p.oracle_sigma, 0.0, 1.0);
            v.arousal = std::clamp(v.arousal + rng.gaussian() * p.oracle_sigma, 0.0, 1.0);
            v.dominance = std::clamp(v.dominance + rng.gaussian() * p.oracle_sigma, 0.0, 1.0);
        }
        return v;
    }
    auto it = p.table.find(u.id);
    if (it == p.table.end())
        throw InputError("VAD file provider has no entry for utterance " + u.id);
    return it->second;
}

VadEncoder VadEncoder::create(nn::ParamStore& s, const std::string& name, int hidden, int out_dim,
                              int wavenet_layers, int kernel, Rng& rng) {
    VadEncoder e;
    e.out_dim = out_dim;
    e.pre1 = nn::Linear::create(s, name + ".pre1", 3, hidden, rng);
    e.pre2 = nn::Linear::create(s, name + ".pre2", hidden, hidden, rng);
    e.block = nn::WaveNetBlock::create(s, name + ".wn", hidden, 0, wavenet_layers, kernel, rng);
    e.proj = nn::Linear::create(s, name + ".proj", hidden, out_dim, rng);
    return e;
}

ad::Var VadEncoder::encode_row(ad::Graph& g, nn::Binder& bind, ad::Var vad) const {
    if (vad->val.rows() != 1 || vad->val.cols() != 3)
        throw ContractError("VadEncoder: expected a [1x3] VAD row");
    ad::Var h = g.lrelu(pre1.apply(g, bind, vad), 0.1);
    h = g.lrelu(pre2.apply(g, bind, h), 0.1);
    h = block.apply(g, bind, h, nullptr);
    return proj.apply(g, bind, h);
}

ad::Var VadEncoder::expand_to_frames(ad::Graph& g, nn::Binder& bind, ad::Var vad,
                                     int t_frames) const {
    if (t_frames < 1) throw InputError("expand_to_frames: need at least one frame");
    return g.broadcast_row(encode_row(g, bind, vad), t_frames);
}

}  // namespace einet::emotion
