// Copyright 2026 EINet Authors
// The conversion model: posterior encoder, latent bridge flow, identity
// maintainer (F0 predictor), content encoder, emotion renderer, duration
// predictor, prior, waveform decoder, and multi-scale discriminator.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "einet/config.hpp"
#include "einet/emotion.hpp"
#include "einet/mapper.hpp"
#include "einet/nn.hpp"

namespace einet::model {

struct ModelConfig {
    int sample_rate = 16000;
    int hop_length = 64;
    int n_mels = 80;
    int hidden = 48;
    int latent = 12;
    int emo_feat_dim = 24;
    int emotion_dim = 16;
    int speaker_dim = 16;
    int n_emotions = 5;
    int n_speakers = 4;
    int n_phonemes = 32;
    int wavenet_layers = 2;
    int wavenet_kernel = 3;
    int flow_layers = 2;
    int flow_hidden = 32;
    int fft_heads = 2;
    int fft_ffn = 96;
    int dec_width = 64;
    std::vector<int> dec_rates = {4, 4, 4};
    std::vector<int> disc_widths = {8, 16, 32};
    int disc_kernel = 15;
    int disc_scales = 2;
    double dropout = 0.1;
    int mapper_flows = 4;
    int mapper_hidden = 64;
    int classifier_hidden = 64;

    static ModelConfig from_config(const config::Config& c, int n_phonemes, int n_speakers);
    void validate() const;  // decoder upsampling must multiply to hop_length
};

struct FrameLatent {
    ad::Var mean = nullptr;       // [T x latent]
    ad::Var log_scale = nullptr;  // [T x latent]
    ad::Var sample = nullptr;     // mean + exp(log_scale) * eps
};

struct SpeakerFeatures {
    ad::Var log_f0 = nullptr;       // [T x 1]
    ad::Var voicing = nullptr;      // [T x 1] probability in [0,1]
    ad::Var speaker_embedding = nullptr;  // [1 x speaker_dim]
};

struct DiscOutput {
    std::vector<ad::Var> scores;                 // one score map per scale
    std::vector<std::vector<ad::Var>> features;  // per scale, per conv layer
};

struct ConvertRequest {
    int target_emotion = 0;
    double intensity = 0.5;
    uint64_t seed = 0;
    double noise_scale = 0.0;
    bool sample_residual = false;
};

struct ConvertResult {
    dsp::Waveform wav;
    emotion::VadValues vad;
    bool mapper_diverged = false;
    std::vector<int> durations;
};

class EinetModel {
public:
    EinetModel(nn::ParamStore& store, const ModelConfig& cfg, Rng& rng);

    const ModelConfig& cfg() const { return cfg_; }
    const mapper::IntensityMapper& im() const { return im_; }
    const emotion::VadEncoder& posterior_vad_encoder() const { return post_vad_; }
    const emotion::VadEncoder& renderer() const { return rend_vad_; }
    const nn::CouplingStack& latent_flow() const { return flow_; }

    // frame-level conditioning shared by the posterior encoder and the flow:
    // learned VAD features concatenated with the emotion embedding
    ad::Var frame_condition(ad::Graph& g, nn::Binder& bind, ad::Var vad, int emotion_id,
                            int t_frames) const;

    // eps: reparameterization noise [T x latent]; nullptr samples the mean
    FrameLatent posterior_encode(ad::Graph& g, nn::Binder& bind, ad::Var mel, ad::Var cond,
                                 const Tensor* eps) const;

    std::pair<ad::Var, ad::Var> flow_forward(ad::Graph& g, nn::Binder& bind, ad::Var z,
                                             ad::Var cond) const {
        return flow_.forward(g, bind, z, cond);
    }
    std::pair<ad::Var, ad::Var> flow_inverse(ad::Graph& g, nn::Binder& bind, ad::Var zp,
                                             ad::Var cond) const {
        return flow_.inverse(g, bind, zp, cond);
    }

    SpeakerFeatures predict_f0(ad::Graph& g, nn::Binder& bind, ad::Var z, int speaker_id) const;

    // Eq.-style F0 objective: mean squared log-F0 error over frames voiced in
    // the target plus mean squared voicing error over all frames
    ad::Var f0_loss(ad::Graph& g, const SpeakerFeatures& pred, const std::vector<double>& f0_hz,
                    const std::vector<int>& voicing) const;

    ad::Var content_encode(ad::Graph& g, nn::Binder& bind, const std::vector<int>& phonemes,
                           const std::vector<int>* valid, Rng& rng, bool training) const;

    ad::Var render_emotion(ad::Graph& g, nn::Binder& bind, ad::Var vad, int n_phonemes) const;

    // [L x 1] log durations from fused (detached) text+emotion features
    ad::Var predict_duration(ad::Graph& g, nn::Binder& bind, ad::Var h_text, ad::Var h_emotion,
                             Rng& rng, bool training) const;
    static std::vector<int> durations_from_log(const Tensor& log_dur);

    // phoneme-level prior parameters [L x 2*latent] before expansion
    std::pair<ad::Var, ad::Var> phoneme_prior(ad::Graph& g, nn::Binder& bind, ad::Var h_text,
                                              ad::Var h_emotion) const;
    // expand phoneme-level (mean, log_scale) to frames along durations
    std::pair<ad::Var, ad::Var> expand_prior(ad::Graph& g, ad::Var mean_ph, ad::Var logs_ph,
                                             const std::vector<int>& durations) const;

    // MAS lattice: log N(z_f[t]; mu_ph[i], sigma_ph[i]) summed over dims
    Tensor alignment_loglik(const Tensor& z_f, const Tensor& mean_ph,
                            const Tensor& logs_ph) const;

    // z [T x latent] -> waveform column [T*hop x 1] in [-1, 1]
    ad::Var decode(ad::Graph& g, nn::Binder& bind, ad::Var z, const SpeakerFeatures& spk) const;

    DiscOutput discriminate(ad::Graph& g, nn::Binder& bind, ad::Var wav) const;
    int disc_min_samples() const;

    ConvertResult convert(const std::vector<int>& phonemes, int speaker_index,
                          const ConvertRequest& req) const;

private:
    ModelConfig cfg_;
    // embeddings
    nn::Embedding emo_emb_, spk_emb_, phon_emb_;
    // posterior
    emotion::VadEncoder post_vad_;
    nn::Conv1d post_pre_;
    nn::WaveNetBlock post_wn_;
    nn::Linear post_proj_;
    // latent bridge
    nn::CouplingStack flow_;
    // identity maintainer
    nn::Conv1d f0_pre_;
    nn::Linear f0_out_;
    // content encoder
    nn::Linear cont_fc_;
    nn::FftBlock cont_fft_;
    nn::Linear cont_proj_;
    // emotion renderer
    emotion::VadEncoder rend_vad_;
    // duration predictor
    std::vector<nn::Conv1d> dur_convs_;
    nn::Linear dur_proj_;
    // prior
    nn::Linear prior_fuse_;
    nn::Conv1d prior_conv_;
    nn::Linear prior_proj_;
    // intensity mapper
    mapper::IntensityMapper im_;
    // decoder
    nn::Conv1d dec_pre_;
    std::vector<nn::TConv1d> dec_up_;
    std::vector<nn::Conv1d> dec_res_;
    nn::Conv1d dec_exc_;
    nn::Conv1d dec_out_;
    // discriminator
    struct DiscScale {
        std::vector<nn::Conv1d> convs;
        nn::Conv1d score;
    };
    std::vector<DiscScale> disc_;

    ad::Var soft_bound(ad::Graph& g, ad::Var x, double cap) const;
};

// Differentiable log-mel of a waveform column, matching dsp::mel_spectrogram
// (hann window, centered reflect-padded frames, power spectrum, mel filters,
// floored log).
ad::Var diff_log_mel(ad::Graph& g, ad::Var wav_col, const dsp::DspConfig& cfg);

}  // namespace einet::model
