// Copyright 2026 EINet Authors
// Model assembly.
//
// Licensed under the Apache License, Version 2.0

#include "einet/model.hpp"

#include <algorithm>
#include <cmath>

namespace einet::model {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kLogScaleCap = 4.0;
}  // namespace

ModelConfig ModelConfig::from_config(const config::Config& c, int n_phonemes, int n_speakers) {
    ModelConfig m;
    m.sample_rate = c.get_int("data.sample_rate");
    m.hop_length = c.get_int("data.hop_length");
    m.n_mels = c.get_int("data.n_mels");
    m.hidden = c.get_int("model.hidden");
    m.latent = c.get_int("model.latent");
    m.emo_feat_dim = c.get_int("model.emo_feat_dim");
    m.emotion_dim = c.get_int("model.emotion_dim");
    m.speaker_dim = c.get_int("model.speaker_dim");
    m.n_emotions = c.get_int("model.n_emotions");
    m.n_speakers = std::max(n_speakers, c.get_int("model.n_speakers"));
    m.n_phonemes = n_phonemes;
    m.wavenet_layers = c.get_int("model.wavenet_layers");
    m.wavenet_kernel = c.get_int("model.wavenet_kernel");
    m.flow_layers = c.get_int("model.flow_layers");
    m.flow_hidden = c.get_int("model.flow_hidden");
    m.fft_heads = c.get_int("model.fft_heads");
    m.fft_ffn = c.get_int("model.fft_ffn");
    m.dec_width = c.get_int("model.dec_width");
    m.dec_rates.clear();
    for (const auto& tok : split(c.get_str("model.dec_rates"), ','))
        m.dec_rates.push_back(std::stoi(tok));
    m.disc_widths.clear();
    for (const auto& tok : split(c.get_str("model.disc_widths"), ','))
        m.disc_widths.push_back(std::stoi(tok));
    m.disc_kernel = c.get_int("model.disc_kernel");
    m.disc_scales = c.get_int("model.disc_scales");
    m.dropout = c.get_double("sched.dropout");
    m.mapper_flows = c.get_int("model.mapper_flows");
    m.mapper_hidden = c.get_int("model.mapper_hidden");
    m.classifier_hidden = c.get_int("model.classifier_hidden");
    m.validate();
    return m;
}

void ModelConfig::validate() const {
    int up = 1;
    for (int r : dec_rates) up *= r;
    if (up != hop_length)
        throw ConfigError("decoder upsampling " + std::to_string(up) +
                          " must equal hop_length " + std::to_string(hop_length));
    if (latent < 2) throw ConfigError("model.latent must be at least 2");
    if (hidden % fft_heads != 0) throw ConfigError("model.hidden must divide by fft_heads");
}

EinetModel::EinetModel(nn::ParamStore& s, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    emo_emb_ = nn::Embedding::create(s, "emb.emotion", cfg.n_emotions, cfg.emotion_dim, rng);
    spk_emb_ = nn::Embedding::create(s, "emb.speaker", cfg.n_speakers, cfg.speaker_dim, rng);
    phon_emb_ = nn::Embedding::create(s, "emb.phoneme", cfg.n_phonemes, cfg.hidden, rng);

    const int cond_dim = cfg.emo_feat_dim + cfg.emotion_dim;
    post_vad_ = emotion::VadEncoder::create(s, "post.vad", cfg.hidden, cfg.emo_feat_dim,
                                            cfg.wavenet_layers, cfg.wavenet_kernel, rng);
    post_pre_ = nn::Conv1d::create(s, "post.pre", cfg.n_mels, cfg.hidden, cfg.wavenet_kernel, 1,
                                   rng);
    post_wn_ = nn::WaveNetBlock::create(s, "post.wn", cfg.hidden, cond_dim, cfg.wavenet_layers,
                                        cfg.wavenet_kernel, rng);
    post_proj_ = nn::Linear::create(s, "post.proj", cfg.hidden, 2 * cfg.latent, rng);

    flow_ = nn::CouplingStack::create(s, "flow.bridge", cfg.latent, cfg.flow_layers,
                                      cfg.flow_hidden, cond_dim, rng);

    f0_pre_ = nn::Conv1d::create(s, "f0.pre", cfg.latent, cfg.hidden, 1, 1, rng);
    f0_out_ = nn::Linear::create(s, "f0.out", cfg.hidden, 2, rng);
    // start near the typical pitch so the log-F0 regression converges quickly
    f0_out_.b->value[0] = std::log(180.0);
    f0_out_.b->value[1] = 2.0;

    cont_fc_ = nn::Linear::create(s, "cont.fc", cfg.hidden, cfg.hidden, rng);
    cont_fft_ = nn::FftBlock::create(s, "cont.fft", cfg.hidden, cfg.fft_heads, cfg.fft_ffn, 3,
                                     rng, cfg.dropout);
    cont_proj_ = nn::Linear::create(s, "cont.proj", cfg.hidden, cfg.hidden, rng);

    rend_vad_ = emotion::VadEncoder::create(s, "rend.vad", cfg.hidden, cfg.hidden,
                                            cfg.wavenet_layers, cfg.wavenet_kernel, rng);

    // five pointwise layers, two dilated context layers, linear projection
    for (int i = 0; i < 5; ++i)
        dur_convs_.push_back(nn::Conv1d::create(s, "dur.pw" + std::to_string(i),
                                                i == 0 ? 2 * cfg.hidden : cfg.hidden, cfg.hidden,
                                                1, 1, rng));
    dur_convs_.push_back(nn::Conv1d::create(s, "dur.dil0", cfg.hidden, cfg.hidden, 3, 1, rng));
    dur_convs_.push_back(nn::Conv1d::create(s, "dur.dil1", cfg.hidden, cfg.hidden, 3, 2, rng));
    dur_proj_ = nn::Linear::create(s, "dur.proj", cfg.hidden, 1, rng);
    dur_proj_.b->value[0] = std::log(12.0);

    prior_fuse_ = nn::Linear::create(s, "prior.fuse", 2 * cfg.hidden, cfg.hidden, rng);
    prior_conv_ = nn::Conv1d::create(s, "prior.conv", cfg.hidden, cfg.hidden, 3, 1, rng);
    prior_proj_ = nn::Linear::create(s, "prior.proj", cfg.hidden, 2 * cfg.latent, rng);

    im_ = mapper::IntensityMapper::create(s, "im", cfg.n_emotions, cfg.emotion_dim,
                                          cfg.mapper_flows, cfg.mapper_hidden,
                                          cfg.classifier_hidden, rng);

    const int dec_in = cfg.latent + 2 + cfg.speaker_dim;
    dec_pre_ = nn::Conv1d::create(s, "dec.pre", dec_in, cfg.dec_width, 7, 1, rng);
    int w = cfg.dec_width;
    for (size_t i = 0; i < cfg.dec_rates.size(); ++i) {
        const int wn = std::max(8, w / 2);
        dec_up_.push_back(nn::TConv1d::create(s, "dec.up" + std::to_string(i), w, wn,
                                              cfg.dec_rates[i], rng));
        dec_res_.push_back(nn::Conv1d::create(s, "dec.res" + std::to_string(i), wn, wn, 3, 1,
                                              rng));
        w = wn;
    }
    dec_exc_ = nn::Conv1d::create(s, "dec.exc", w + 1, w, 7, 1, rng);
    dec_out_ = nn::Conv1d::create(s, "dec.out", w, 1, 7, 1, rng);

    for (int sc = 0; sc < cfg.disc_scales; ++sc) {
        DiscScale d;
        int cin = 1;
        for (size_t i = 0; i < cfg.disc_widths.size(); ++i) {
            d.convs.push_back(nn::Conv1d::create(
                s, "disc.s" + std::to_string(sc) + ".c" + std::to_string(i), cin,
                cfg.disc_widths[i], cfg.disc_kernel, 1, rng));
            cin = cfg.disc_widths[i];
        }
        d.score = nn::Conv1d::create(s, "disc.s" + std::to_string(sc) + ".score", cin, 1, 3, 1,
                                     rng);
        disc_.push_back(std::move(d));
    }
}

ad::Var EinetModel::soft_bound(ad::Graph& g, ad::Var x, double cap) const {
    return g.scale(g.tanh_(g.scale(x, 1.0 / cap)), cap);
}

ad::Var EinetModel::frame_condition(ad::Graph& g, nn::Binder& bind, ad::Var vad, int emotion_id,
                                    int t_frames) const {
    ad::Var vf = post_vad_.expand_to_frames(g, bind, vad, t_frames);
    ad::Var ee = g.broadcast_row(emo_emb_.apply(g, bind, {emotion_id}), t_frames);
    return g.concat_cols(vf, ee);
}

FrameLatent EinetModel::posterior_encode(ad::Graph& g, nn::Binder& bind, ad::Var mel,
                                         ad::Var cond, const Tensor* eps) const {
    const int T = mel->val.rows();
    if (T < 1) throw InputError("posterior_encode: empty spectrogram");
    if (mel->val.cols() != cfg_.n_mels)
        throw ContractError("posterior_encode: mel width mismatch");
    ad::Var h = g.lrelu(post_pre_.apply(g, bind, mel), 0.1);
    h = post_wn_.apply(g, bind, h, cond);
    ad::Var stats = post_proj_.apply(g, bind, h);
    FrameLatent fl;
    fl.mean = g.slice_cols(stats, 0, cfg_.latent);
    fl.log_scale = soft_bound(g, g.slice_cols(stats, cfg_.latent, cfg_.latent), kLogScaleCap);
    if (eps) {
        if (eps->rows() != T || eps->cols() != cfg_.latent)
            throw ContractError("posterior_encode: eps shape mismatch");
        fl.sample = g.add(fl.mean, g.mul(g.exp_(fl.log_scale), g.constant(*eps)));
    } else {
        fl.sample = fl.mean;
    }
    return fl;
}

SpeakerFeatures EinetModel::predict_f0(ad::Graph& g, nn::Binder& bind, ad::Var z,
                                       int speaker_id) const {
    SpeakerFeatures sf;
    ad::Var h = g.lrelu(f0_pre_.apply(g, bind, z), 0.1);
    ad::Var out = f0_out_.apply(g, bind, h);
    sf.log_f0 = g.slice_cols(out, 0, 1);
    sf.voicing = g.sigmoid_(g.slice_cols(out, 1, 1));
    sf.speaker_embedding = spk_emb_.apply(g, bind, {speaker_id});
    return sf;
}

ad::Var EinetModel::f0_loss(ad::Graph& g, const SpeakerFeatures& pred,
                            const std::vector<double>& f0_hz,
                            const std::vector<int>& voicing) const {
    const int T = pred.log_f0->val.rows();
    if (static_cast<int>(f0_hz.size()) != T || static_cast<int>(voicing.size()) != T)
        throw ContractError("f0_loss: target length mismatch");
    Tensor target_log({T, 1}), vmask({T, 1}), vtarget({T, 1});
    int voiced = 0;
    for (int t = 0; t < T; ++t) {
        vtarget[t] = voicing[t] ? 1.0 : 0.0;
        vmask[t] = vtarget[t];
        target_log[t] = voicing[t] ? std::log(std::max(f0_hz[t], 1.0)) : 0.0;
        voiced += voicing[t];
    }
    ad::Var diff = g.mul(g.sub(pred.log_f0, g.constant(target_log)), g.constant(vmask));
    ad::Var f0_term = g.scale(g.sum(g.square(diff)), 1.0 / std::max(voiced, 1));
    ad::Var v_term = ad::mse(g, pred.voicing, g.constant(vtarget));
    return g.add(f0_term, v_term);
}

ad::Var EinetModel::content_encode(ad::Graph& g, nn::Binder& bind,
                                   const std::vector<int>& phonemes,
                                   const std::vector<int>* valid, Rng& rng,
                                   bool training) const {
    if (phonemes.empty()) throw InputError("content_encode: empty phoneme sequence");
    for (int p : phonemes)
        if (p < 0 || p >= cfg_.n_phonemes)
            throw InputError("content_encode: phoneme id out of inventory");
    ad::Var h = phon_emb_.apply(g, bind, phonemes);
    h = g.lrelu(cont_fc_.apply(g, bind, h), 0.1);
    h = cont_fft_.apply(g, bind, h, valid, rng, training);
    return cont_proj_.apply(g, bind, h);
}

ad::Var EinetModel::render_emotion(ad::Graph& g, nn::Binder& bind, ad::Var vad,
                                   int n_phonemes) const {
    if (n_phonemes < 1) throw InputError("render_emotion: need at least one phoneme");
    return rend_vad_.expand_to_frames(g, bind, vad, n_phonemes);
}

ad::Var EinetModel::predict_duration(ad::Graph& g, nn::Binder& bind, ad::Var h_text,
                                     ad::Var h_emotion, Rng& rng, bool training) const {
    if (h_text->val.rows() != h_emotion->val.rows())
        throw ContractError("predict_duration: text/emotion length mismatch");
    // detached inputs: duration errors should not reshape the encoders
    ad::Var x = g.concat_cols(g.stop_grad(h_text), g.stop_grad(h_emotion));
    for (size_t i = 0; i < dur_convs_.size(); ++i) {
        x = g.lrelu(dur_convs_[i].apply(g, bind, x), 0.1);
        x = g.dropout(x, cfg_.dropout, rng, training);
    }
    return dur_proj_.apply(g, bind, x);
}

std::vector<int> EinetModel::durations_from_log(const Tensor& log_dur) {
    std::vector<int> out(static_cast<size_t>(log_dur.rows()));
    for (int i = 0; i < log_dur.rows(); ++i)
        out[static_cast<size_t>(i)] =
            std::max(1, static_cast<int>(std::lround(std::exp(log_dur[i]))));
    return out;
}

std::pair<ad::Var, ad::Var> EinetModel::phoneme_prior(ad::Graph& g, nn::Binder& bind,
                                                      ad::Var h_text, ad::Var h_emotion) const {
    if (h_text->val.rows() != h_emotion->val.rows())
        throw ContractError("phoneme_prior: text/emotion length mismatch");
    ad::Var x = g.lrelu(prior_fuse_.apply(g, bind, g.concat_cols(h_text, h_emotion)), 0.1);
    x = g.lrelu(prior_conv_.apply(g, bind, x), 0.1);
    ad::Var stats = prior_proj_.apply(g, bind, x);
    ad::Var mean = g.slice_cols(stats, 0, cfg_.latent);
    ad::Var logs = soft_bound(g, g.slice_cols(stats, cfg_.latent, cfg_.latent), kLogScaleCap);
    return {mean, logs};
}

std::pair<ad::Var, ad::Var> EinetModel::expand_prior(ad::Graph& g, ad::Var mean_ph,
                                                     ad::Var logs_ph,
                                                     const std::vector<int>& durations) const {
    if (static_cast<int>(durations.size()) != mean_ph->val.rows())
        throw ContractError("expand_prior: durations/phoneme count mismatch");
    for (int d : durations)
        if (d < 1) throw ContractError("expand_prior: durations must be >= 1");
    return {g.repeat_rows(mean_ph, durations), g.repeat_rows(logs_ph, durations)};
}

Tensor EinetModel::alignment_loglik(const Tensor& z_f, const Tensor& mean_ph,
                                    const Tensor& logs_ph) const {
    const int T = z_f.rows(), L = mean_ph.rows(), D = z_f.cols();
    Tensor ll({L, T});
    for (int i = 0; i < L; ++i) {
        for (int t = 0; t < T; ++t) {
            double acc = 0.0;
            for (int d = 0; d < D; ++d) {
                const double logs = logs_ph.at(i, d);
                const double diff = z_f.at(t, d) - mean_ph.at(i, d);
                acc += -0.5 * std::log(2.0 * kPi) - logs -
                       0.5 * diff * diff * std::exp(-2.0 * logs);
            }
            ll.at(i, t) = acc;
        }
    }
    return ll;
}

ad::Var EinetModel::decode(ad::Graph& g, nn::Binder& bind, ad::Var z,
                           const SpeakerFeatures& spk) const {
    const int T = z->val.rows();
    if (spk.log_f0->val.rows() != T || spk.voicing->val.rows() != T)
        throw ContractError("decode: speaker feature length mismatch");
    // harmonic excitation at sample rate from the F0 conditioning
    const std::vector<int> per_frame(static_cast<size_t>(T), cfg_.hop_length);
    ad::Var f0_up = g.repeat_rows(g.exp_(spk.log_f0), per_frame);          // [N x 1]
    ad::Var v_up = g.repeat_rows(spk.voicing, per_frame);                  // [N x 1]
    ad::Var phase = g.cumsum_col(g.scale(f0_up, 2.0 * kPi / cfg_.sample_rate));
    ad::Var excitation = g.mul(g.sin_(phase), v_up);

    ad::Var x = g.concat_cols(g.concat_cols(z, spk.log_f0), spk.voicing);
    x = g.concat_cols(x, g.broadcast_row(spk.speaker_embedding, T));
    x = g.lrelu(dec_pre_.apply(g, bind, x), 0.1);
    for (size_t i = 0; i < dec_up_.size(); ++i) {
        x = g.lrelu(dec_up_[i].apply(g, bind, x), 0.1);
        x = g.add(x, dec_res_[i].apply(g, bind, g.lrelu(x, 0.1)));
    }
    x = g.concat_cols(x, excitation);
    x = g.lrelu(dec_exc_.apply(g, bind, x), 0.1);
    return g.tanh_(dec_out_.apply(g, bind, x));
}

int EinetModel::disc_min_samples() const {
    int pool = 1;
    for (int s = 1; s < cfg_.disc_scales; ++s) pool *= 4;
    int down = 1;
    for (size_t i = 1; i < cfg_.disc_widths.size(); ++i) down *= 4;
    return pool * down;
}

DiscOutput EinetModel::discriminate(ad::Graph& g, nn::Binder& bind, ad::Var wav) const {
    if (wav->val.cols() != 1) throw ContractError("discriminate: expected a waveform column");
    if (wav->val.rows() < disc_min_samples())
        throw InputError("discriminate: segment of " + std::to_string(wav->val.rows()) +
                         " samples is shorter than the receptive field (" +
                         std::to_string(disc_min_samples()) + ")");
    DiscOutput out;
    ad::Var x_scale = wav;
    for (int sc = 0; sc < cfg_.disc_scales; ++sc) {
        if (sc > 0) x_scale = g.avg_pool_rows(x_scale, 4);
        ad::Var h = x_scale;
        std::vector<ad::Var> feats;
        for (size_t i = 0; i < disc_[sc].convs.size(); ++i) {
            h = g.lrelu(disc_[sc].convs[i].apply(g, bind, h), 0.1);
            feats.push_back(h);
            if (i + 1 < disc_[sc].convs.size()) h = g.avg_pool_rows(h, 4);
        }
        out.scores.push_back(disc_[sc].score.apply(g, bind, h));
        out.features.push_back(std::move(feats));
    }
    return out;
}

ConvertResult EinetModel::convert(const std::vector<int>& phonemes, int speaker_index,
                                  const ConvertRequest& req) const {
    if (!(req.intensity > 0.0 && req.intensity < 1.0))
        throw InputError("convert: intensity must lie strictly inside (0,1)");
    Rng rng(req.seed);
    ad::Graph g;
    nn::Binder bind(g, /*trainable=*/false);

    double residual[2] = {0.0, 0.0};
    if (req.sample_residual) {
        residual[0] = rng.gaussian();
        residual[1] = rng.gaussian();
    }
    auto inv = im_.inverse(g, bind, req.target_emotion, g.scalar(req.intensity),
                           req.sample_residual ? residual : nullptr);

    Rng enc_rng(rng.next_u64());
    ad::Var h_text = content_encode(g, bind, phonemes, nullptr, enc_rng, /*training=*/false);
    const int L = static_cast<int>(phonemes.size());
    ad::Var h_emo = render_emotion(g, bind, inv.vad, L);
    ad::Var log_dur = predict_duration(g, bind, h_text, h_emo, enc_rng, /*training=*/false);
    const std::vector<int> durations = durations_from_log(log_dur->val);
    int T = 0;
    for (int d : durations) T += d;

    auto [mean_ph, logs_ph] = phoneme_prior(g, bind, h_text, h_emo);
    auto [mean_p, logs_p] = expand_prior(g, mean_ph, logs_ph, durations);
    ad::Var z_p = mean_p;
    if (req.noise_scale > 0.0) {
        Tensor eps({T, cfg_.latent});
        for (auto& e : eps.data) e = rng.gaussian() * req.noise_scale;
        z_p = g.add(mean_p, g.mul(g.exp_(logs_p), g.constant(eps)));
    }
    ad::Var cond = frame_condition(g, bind, inv.vad, req.target_emotion, T);
    auto [z, logdet] = flow_.inverse(g, bind, z_p, cond);
    (void)logdet;
    SpeakerFeatures spk = predict_f0(g, bind, z, speaker_index);
    ad::Var wav = decode(g, bind, z, spk);

    ConvertResult res;
    res.vad = {inv.vad->val[0], inv.vad->val[1], inv.vad->val[2]};
    res.mapper_diverged = inv.diverged;
    res.durations = durations;
    res.wav.sample_rate = cfg_.sample_rate;
    res.wav.samples.resize(static_cast<size_t>(wav->val.rows()));
    for (int i = 0; i < wav->val.rows(); ++i) res.wav.samples[static_cast<size_t>(i)] = wav->val[i];
    return res;
}

ad::Var diff_log_mel(ad::Graph& g, ad::Var wav_col, const dsp::DspConfig& cfg) {
    if (wav_col->val.cols() != 1) throw ContractError("diff_log_mel: expected a column");
    const int64_t n = wav_col->val.rows();
    if (n < cfg.win_length) throw InputError("diff_log_mel: waveform shorter than win_length");
    const int T = dsp::num_frames(n, cfg.hop_length);
    const int win = cfg.win_length;

    // centered reflect-padded frame gather
    auto idx = std::make_shared<std::vector<int64_t>>();
    idx->reserve(static_cast<size_t>(T) * win);
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < win; ++i) {
            int64_t k = static_cast<int64_t>(t) * cfg.hop_length - win / 2 + i;
            while (k < 0 || k >= n) {
                if (k < 0) k = -k;
                if (k >= n) k = 2 * n - 2 - k;
            }
            idx->push_back(k);
        }
    }
    ad::Var frames = g.gather_flat(wav_col, idx, {T, win});

    std::vector<double> hann(static_cast<size_t>(win));
    for (int i = 0; i < win; ++i) hann[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / win);
    frames = g.mul_rowconst(frames, hann);

    // zero-pad to n_fft via concat when the window is shorter
    if (cfg.n_fft > win) {
        ad::Var pad = g.constant(Tensor({T, cfg.n_fft - win}));
        frames = g.concat_cols(frames, pad);
    }
    ad::Var power = g.rdft_power(frames);
    const Tensor fb = dsp::mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate);
    // filters are [n_mels x bins]; apply as power * fb^T
    Tensor fbt({fb.cols(), fb.rows()});
    for (int m = 0; m < fb.rows(); ++m)
        for (int b = 0; b < fb.cols(); ++b) fbt.at(b, m) = fb.at(m, b);
    ad::Var mel = g.matmul(power, g.constant(std::move(fbt)));
    return g.log_floor(mel, cfg.mel_floor);
}

}  // namespace einet::model
