// Copyright 2026 EINet Authors
// Losses, optimizer, training loop, checkpoints.
//
// Licensed under the Apache License, Version 2.0

#include "einet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fs = std::filesystem;

namespace einet::training {

namespace {

std::string fmt17(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

bool is_disc_param(const std::string& name) { return name.rfind("disc.", 0) == 0; }

void check_finite(const char* name, double v) {
    if (!std::isfinite(v))
        throw NumericError(std::string("loss component ") + name + " is not finite");
}

}  // namespace

bool LossReport::all_finite() const {
    for (double v : {l_cls, l_fm, l_adv_g, l_f0, l_dur, l_im, l_kl, total, l_adv_d})
        if (!std::isfinite(v)) return false;
    return true;
}

void LossReport::add(const LossReport& o) {
    l_cls += o.l_cls;
    l_fm += o.l_fm;
    l_adv_g += o.l_adv_g;
    l_f0 += o.l_f0;
    l_dur += o.l_dur;
    l_im += o.l_im;
    l_kl += o.l_kl;
    total += o.total;
    l_adv_d += o.l_adv_d;
}

void LossReport::scale(double k) {
    l_cls *= k;
    l_fm *= k;
    l_adv_g *= k;
    l_f0 *= k;
    l_dur *= k;
    l_im *= k;
    l_kl *= k;
    total *= k;
    l_adv_d *= k;
}

std::string LossReport::to_pairs() const {
    std::ostringstream os;
    os << "l_cls=" << fmt17(l_cls) << " l_fm=" << fmt17(l_fm) << " l_adv_g=" << fmt17(l_adv_g)
       << " l_f0=" << fmt17(l_f0) << " l_dur=" << fmt17(l_dur) << " l_im=" << fmt17(l_im)
       << " l_kl=" << fmt17(l_kl) << " total=" << fmt17(total) << " l_adv_d=" << fmt17(l_adv_d);
    return os.str();
}

LossWeights LossWeights::from_config(const config::Config& c) {
    LossWeights w;
    w.w_cls = c.get_double("loss.w_cls");
    w.w_fm = c.get_double("loss.w_fm");
    w.w_adv = c.get_double("loss.w_adv");
    w.w_f0 = c.get_double("loss.w_f0");
    w.w_dur = c.get_double("loss.w_dur");
    w.w_im = c.get_double("loss.w_im");
    w.kl_weight = c.get_double("loss.kl_weight");
    w.kl_floor = c.get_double("loss.kl_floor");
    return w;
}

double total_generator_loss(const LossReport& r) {
    return r.l_cls + r.l_fm + r.l_adv_g + r.l_f0 + r.l_dur + r.l_im + r.l_kl;
}

ad::Var discriminator_loss(ad::Graph& g, const std::vector<ad::Var>& real_scores,
                           const std::vector<ad::Var>& fake_scores) {
    if (real_scores.size() != fake_scores.size())
        throw ContractError("discriminator_loss: scale count mismatch");
    ad::Var total = g.scalar(0.0);
    for (size_t i = 0; i < real_scores.size(); ++i) {
        ad::Var r = g.mean(g.square(g.add_scalar(real_scores[i], -1.0)));
        ad::Var f = g.mean(g.square(fake_scores[i]));
        total = g.add(total, g.add(r, f));
    }
    return total;
}

double learning_rate(double lr_init, double decay, int epoch) {
    return lr_init * std::pow(decay, epoch);
}

void AdamW::step(nn::ParamStore& store, double lr,
                 const std::function<bool(const std::string&)>& match) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (nn::Param* p : store.all()) {
        if (!match(p->name)) continue;
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            const double g = p->grad[i];
            p->adam_m[i] = beta1_ * p->adam_m[i] + (1.0 - beta1_) * g;
            p->adam_v[i] = beta2_ * p->adam_v[i] + (1.0 - beta2_) * g * g;
            const double mhat = p->adam_m[i] / bc1;
            const double vhat = p->adam_v[i] / bc2;
            p->value[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p->value[i]);
            p->grad[i] = 0.0;
        }
    }
}

// ---- checkpoint I/O ----

namespace {
void wr_u64(std::ostream& o, uint64_t v) { o.write(reinterpret_cast<const char*>(&v), 8); }
void wr_i64(std::ostream& o, int64_t v) { o.write(reinterpret_cast<const char*>(&v), 8); }
void wr_i32(std::ostream& o, int32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }
void wr_str(std::ostream& o, const std::string& s) {
    wr_u64(o, s.size());
    o.write(s.data(), static_cast<std::streamsize>(s.size()));
}
uint64_t rd_u64(std::istream& i) {
    uint64_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
int64_t rd_i64(std::istream& i) {
    int64_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
int32_t rd_i32(std::istream& i) {
    int32_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::string rd_str(std::istream& i) {
    const uint64_t n = rd_u64(i);
    std::string s(n, '\0');
    i.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}
constexpr char kMagic[8] = {'E', 'I', 'N', 'E', 'T', 'C', 'K', '1'};
}  // namespace

void save_checkpoint(const std::string& path, const nn::ParamStore& store,
                     const Checkpoint& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    wr_i32(out, 1);
    wr_str(out, meta.cfg.text());
    wr_i32(out, meta.epoch);
    wr_str(out, meta.rng_state);
    wr_i64(out, meta.adam_g_steps);
    wr_i64(out, meta.adam_d_steps);
    const auto params = store.all();
    wr_u64(out, params.size());
    for (const nn::Param* p : params) {
        wr_str(out, p->name);
        wr_i32(out, static_cast<int32_t>(p->value.shape.size()));
        for (int d : p->value.shape) wr_i32(out, d);
        const auto n = static_cast<std::streamsize>(p->value.data.size() * 8);
        out.write(reinterpret_cast<const char*>(p->value.data.data()), n);
        out.write(reinterpret_cast<const char*>(p->adam_m.data.data()), n);
        out.write(reinterpret_cast<const char*>(p->adam_v.data.data()), n);
    }
    if (!out) throw IoError("checkpoint write failed: " + path);
}

namespace {
Checkpoint read_header(std::istream& in, const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw LoadError("not an EINet checkpoint: " + path);
    const int32_t version = rd_i32(in);
    if (version != 1) throw LoadError("unsupported checkpoint version in " + path);
    Checkpoint meta;
    meta.cfg = config::Config::from_text(rd_str(in));
    meta.epoch = rd_i32(in);
    meta.rng_state = rd_str(in);
    meta.adam_g_steps = rd_i64(in);
    meta.adam_d_steps = rd_i64(in);
    return meta;
}
}  // namespace

Checkpoint peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint: " + path);
    return read_header(in, path);
}

Checkpoint load_checkpoint(const std::string& path, nn::ParamStore& store, bool create_params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint: " + path);
    Checkpoint meta = read_header(in, path);
    const uint64_t n_params = rd_u64(in);
    for (uint64_t i = 0; i < n_params; ++i) {
        const std::string name = rd_str(in);
        const int32_t ndim = rd_i32(in);
        std::vector<int> shape;
        for (int32_t d = 0; d < ndim; ++d) shape.push_back(rd_i32(in));
        nn::Param* p = store.find(name);
        if (!p) {
            if (!create_params) throw LoadError("checkpoint parameter unknown to model: " + name);
            p = store.create(name, Tensor::zeros(shape));
        }
        if (p->value.shape != shape)
            throw LoadError("checkpoint shape mismatch for parameter " + name);
        const auto n = static_cast<std::streamsize>(p->value.data.size() * 8);
        in.read(reinterpret_cast<char*>(p->value.data.data()), n);
        in.read(reinterpret_cast<char*>(p->adam_m.data.data()), n);
        in.read(reinterpret_cast<char*>(p->adam_v.data.data()), n);
    }
    if (!in) throw LoadError("truncated checkpoint: " + path);
    return meta;
}

// ---- trainer ----

dsp::DspConfig dsp_config_from(const config::Config& c) {
    dsp::DspConfig d;
    d.sample_rate = c.get_int("data.sample_rate");
    d.n_fft = c.get_int("data.n_fft");
    d.win_length = c.get_int("data.win_length");
    d.hop_length = c.get_int("data.hop_length");
    d.n_mels = c.get_int("data.n_mels");
    d.f_min = c.get_double("data.f_min");
    d.f_max = c.get_double("data.f_max");
    d.yin_threshold = c.get_double("data.yin_threshold");
    d.yin_window = c.get_int("data.yin_window");
    d.validate();
    return d;
}

struct Trainer::ItemPlan {
    uint64_t vad_seed = 0;
    uint64_t eps_seed = 0;
    uint64_t slice_seed = 0;
    uint64_t dropout_seed = 0;
    uint64_t im_seed = 0;
};

namespace {
// Per-item forward state kept alive across the discriminator update so the
// generator losses can be finished against the refreshed discriminator.
struct ItemState : Trainer::ItemStateOpaque {
    std::unique_ptr<ad::Graph> g;
    std::unique_ptr<nn::Binder> bind;
    const corpus::UttFeatures* f = nullptr;
    ad::Var gen_wav = nullptr, real_wav = nullptr;
    ad::Var gen_im = nullptr, real_im = nullptr;
    ad::Var l_cls = nullptr, l_f0 = nullptr, l_dur = nullptr, l_kl = nullptr, ce = nullptr;
};
}  // namespace

Trainer::Trainer(const config::Config& cfg, const corpus::Manifest& manifest,
                 const std::string& out_dir)
    : cfg_(cfg),
      manifest_(&manifest),
      out_dir_(out_dir),
      dsp_cfg_(dsp_config_from(cfg)),
      weights_(LossWeights::from_config(cfg)),
      rng_(static_cast<uint64_t>(cfg.get_int("run.seed"))) {
    fs::create_directories(out_dir_);
    {
        std::ofstream probe(fs::path(out_dir_) / ".writable", std::ios::trunc);
        if (!probe) throw IoError("checkpoint directory is not writable: " + out_dir_);
        probe << "ok";
    }
    fs::remove(fs::path(out_dir_) / ".writable");

    const int n_phonemes = static_cast<int>(manifest.phoneme_inventory.size());
    const int n_speakers = static_cast<int>(manifest.speakers().size());
    model_ = std::make_unique<model::EinetModel>(
        store_, model::ModelConfig::from_config(cfg, n_phonemes, n_speakers), rng_);
    features_ = std::make_unique<corpus::FeatureSet>(manifest, dsp_cfg_);
    opt_g_ = std::make_unique<AdamW>(cfg.get_double("optim.beta1"), cfg.get_double("optim.beta2"),
                                     cfg.get_double("optim.eps"),
                                     cfg.get_double("optim.weight_decay"));
    opt_d_ = std::make_unique<AdamW>(cfg.get_double("optim.beta1"), cfg.get_double("optim.beta2"),
                                     cfg.get_double("optim.eps"),
                                     cfg.get_double("optim.weight_decay"));
    if (cfg.has("data.vad_file") && !cfg.get_str("data.vad_file").empty())
        provider_ = emotion::EvaluatorProvider::from_file(cfg.get_str("data.vad_file"));
    else
        provider_ = emotion::EvaluatorProvider::oracle(cfg.get_double("data.vad_sigma"));
}

uint64_t Trainer::derive_seed(uint64_t a, uint64_t b, uint64_t c) const {
    const uint64_t base = static_cast<uint64_t>(cfg_.get_int("run.seed"));
    return Rng::splitmix(Rng::splitmix(base + 0x51ed2701u + a) ^
                         Rng::splitmix(b * 2654435761u + c + 0x9e3779b9u));
}

Trainer::ItemPlan Trainer::make_plan(int epoch, int batch_index, int item_index) const {
    ItemPlan plan;
    const uint64_t key =
        static_cast<uint64_t>(batch_index) * 131 + static_cast<uint64_t>(item_index);
    plan.vad_seed = derive_seed(static_cast<uint64_t>(epoch), key, 1);
    plan.eps_seed = derive_seed(static_cast<uint64_t>(epoch), key, 2);
    plan.slice_seed = derive_seed(static_cast<uint64_t>(epoch), key, 3);
    plan.dropout_seed = derive_seed(static_cast<uint64_t>(epoch), key, 4);
    plan.im_seed = derive_seed(static_cast<uint64_t>(epoch), key, 5);
    return plan;
}

void Trainer::resume(const std::string& checkpoint_path) {
    Checkpoint meta = load_checkpoint(checkpoint_path, store_, /*create_params=*/false);
    const auto diff = cfg_.diff(meta.cfg);
    if (!diff.empty()) {
        std::string msg = "resume refused, config differs from checkpoint on keys:";
        for (const auto& k : diff) msg += " " + k;
        throw ConfigError(msg);
    }
    epoch_ = meta.epoch;
    rng_.set_state(meta.rng_state);
    opt_g_->set_step_count(meta.adam_g_steps);
    opt_d_->set_step_count(meta.adam_d_steps);
}

void Trainer::write_metrics_line(const std::string& line) {
    std::ofstream out(fs::path(out_dir_) / "metrics.log", std::ios::app);
    if (!out) throw IoError("cannot append to metrics log in " + out_dir_);
    out << line << "\n";
    metric_lines_.push_back(line);
}

LossReport Trainer::generator_losses_item(ad::Graph& g, nn::Binder& bind,
                                          const corpus::UttFeatures& f, const ItemPlan& plan,
                                          double gamma, double beta, ad::Var& total_out) {
    // phase-1 state lives in `st`; this entry point is used by tests that do
    // not need the two-phase discriminator ordering
    ItemState st;
    st.f = &f;
    LossReport r = forward_item(g, bind, f, plan, beta, st);
    finish_item_losses(g, st, gamma, beta, r, total_out);
    return r;
}

// builds everything that does not depend on the discriminator
LossReport Trainer::forward_item(ad::Graph& g, nn::Binder& bind, const corpus::UttFeatures& f,
                                 const ItemPlan& plan, double beta, ItemStateOpaque& st_out) {
    auto& st = static_cast<ItemState&>(st_out);
    const auto& mcfg = model_->cfg();
    const int T = f.num_frames();
    const int L = static_cast<int>(f.utt->phonemes.size());
    if (L > T) throw ContractError("train: more phonemes than frames for " + f.id);
    const int hop = mcfg.hop_length;
    const int frames_avail = static_cast<int>(f.wav.size() / hop);

    Rng vad_rng(plan.vad_seed);
    Rng eps_rng(plan.eps_seed);
    Rng slice_rng(plan.slice_seed);
    Rng drop_rng(plan.dropout_seed);
    Rng im_rng(plan.im_seed);

    const emotion::VadValues vad = emotion::evaluate(*f.utt, provider_, vad_rng);
    ad::Var vad_row = g.constant(emotion::vad_row(vad));

    // posterior path
    ad::Var cond = model_->frame_condition(g, bind, vad_row, f.emotion, T);
    Tensor eps({T, mcfg.latent});
    for (auto& e : eps.data) e = eps_rng.gaussian();
    ad::Var mel_in = g.constant(f.mel);
    model::FrameLatent zq = model_->posterior_encode(g, bind, mel_in, cond, &eps);
    auto [z_f, logdet] = model_->flow_forward(g, bind, zq.sample, cond);

    // text / emotion / prior
    ad::Var h_text = model_->content_encode(g, bind, f.utt->phonemes, nullptr, drop_rng, true);
    ad::Var h_emo = model_->render_emotion(g, bind, vad_row, L);
    auto [mean_ph, logs_ph] = model_->phoneme_prior(g, bind, h_text, h_emo);

    // alignment on detached values
    const Tensor ll = model_->alignment_loglik(z_f->val, mean_ph->val, logs_ph->val);
    const nn::AlignmentPath align = nn::monotonic_align(ll);
    auto [mean_p, logs_p] = model_->expand_prior(g, mean_ph, logs_ph, align.durations);

    // KL between the flow-bridged posterior and the expanded prior
    ad::Var var_q = g.exp_(g.scale(zq.log_scale, 2.0));
    ad::Var inv_var_p = g.exp_(g.scale(logs_p, -2.0));
    ad::Var quad = g.add(var_q, g.square(g.sub(z_f, mean_p)));
    ad::Var elems = g.add(g.add_scalar(g.sub(logs_p, zq.log_scale), -0.5),
                          g.scale(g.mul(quad, inv_var_p), 0.5));
    ad::Var kl = g.sub(g.mean(elems),
                       g.scale(logdet, 1.0 / (static_cast<double>(T) * mcfg.latent)));
    st.l_kl = g.scale(g.max_scalar(kl, weights_.kl_floor), weights_.kl_weight);

    // duration predictor against the alignment
    ad::Var log_dur = model_->predict_duration(g, bind, h_text, h_emo, drop_rng, true);
    Tensor dur_target({L, 1});
    for (int i = 0; i < L; ++i) dur_target[i] = std::log(static_cast<double>(align.durations[i]));
    st.l_dur = g.scale(ad::mse(g, log_dur, g.constant(dur_target)), weights_.w_dur);

    // identity maintainer on the posterior latents
    model::SpeakerFeatures f0_pred = model_->predict_f0(g, bind, zq.sample, f.speaker_index);
    st.l_f0 = g.scale(model_->f0_loss(g, f0_pred, f.f0, f.voicing), weights_.w_f0);

    // decoder slice with teacher-forced excitation
    const int seg = std::min(cfg_.get_int("sched.segment_frames"), frames_avail);
    const int max_start = frames_avail - seg;
    const int start = max_start > 0 ? static_cast<int>(slice_rng.uniform_int(0, max_start)) : 0;
    ad::Var z_slice = g.slice_rows(zq.sample, start, seg);
    Tensor t_logf0({seg, 1}), t_voicing({seg, 1});
    for (int t = 0; t < seg; ++t) {
        t_logf0[t] = std::log(std::max(f.f0[static_cast<size_t>(start + t)], 1.0));
        t_voicing[t] = f.voicing[static_cast<size_t>(start + t)] ? 1.0 : 0.0;
    }
    model::SpeakerFeatures teacher;
    teacher.log_f0 = g.constant(t_logf0);
    teacher.voicing = g.constant(t_voicing);
    teacher.speaker_embedding = f0_pred.speaker_embedding;
    st.gen_wav = model_->decode(g, bind, z_slice, teacher);

    Tensor real_slice({seg * hop, 1});
    for (int i = 0; i < seg * hop; ++i)
        real_slice[i] = f.wav.samples[static_cast<size_t>(start * hop + i)];
    st.real_wav = g.constant(real_slice);

    st.l_cls = g.scale(ad::mae(g, model::diff_log_mel(g, st.gen_wav, dsp_cfg_),
                               model::diff_log_mel(g, st.real_wav, dsp_cfg_)),
                       weights_.w_cls);

    // intensity mapper: category term always, synthesis branch when beta > 0
    mapper::MapperForward im_fwd = model_->im().forward(g, bind, vad_row, f.emotion);
    st.ce = mapper::cross_entropy(g, im_fwd.logits, f.emotion);
    if (beta > 0.0) {
        int e_hat = 0;
        for (int k = 1; k < mcfg.n_emotions; ++k)
            if (im_fwd.logits->val[k] > im_fwd.logits->val[e_hat]) e_hat = k;
        auto im_inv = model_->im().inverse(g, bind, e_hat, im_fwd.intensity);
        ad::Var h_emo_im = model_->render_emotion(g, bind, im_inv.vad, L);
        auto [mean_ph_im, logs_ph_im] = model_->phoneme_prior(g, bind, h_text, h_emo_im);
        auto [mean_pi, logs_pi] = model_->expand_prior(g, mean_ph_im, logs_ph_im, align.durations);
        const int im_seg = std::min(cfg_.get_int("sched.im_segment_frames"), frames_avail);
        const int im_max_start = frames_avail - im_seg;
        const int im_start =
            im_max_start > 0 ? static_cast<int>(im_rng.uniform_int(0, im_max_start)) : 0;
        ad::Var mean_slice = g.slice_rows(mean_pi, im_start, im_seg);
        ad::Var logs_slice = g.slice_rows(logs_pi, im_start, im_seg);
        Tensor eps2({im_seg, mcfg.latent});
        for (auto& e : eps2.data) e = im_rng.gaussian();
        ad::Var zp_im = g.add(mean_slice, g.mul(g.exp_(logs_slice), g.constant(eps2)));
        ad::Var cond_im = model_->frame_condition(g, bind, im_inv.vad, e_hat, im_seg);
        auto [z_im_lat, im_logdet] = model_->flow_inverse(g, bind, zp_im, cond_im);
        (void)im_logdet;
        model::SpeakerFeatures spk_im = model_->predict_f0(g, bind, z_im_lat, f.speaker_index);
        st.gen_im = model_->decode(g, bind, z_im_lat, spk_im);
        Tensor real2({im_seg * hop, 1});
        for (int i = 0; i < im_seg * hop; ++i)
            real2[i] = f.wav.samples[static_cast<size_t>(im_start * hop + i)];
        st.real_im = g.constant(real2);
    }

    LossReport r;
    r.l_cls = st.l_cls->val[0];
    r.l_f0 = st.l_f0->val[0];
    r.l_dur = st.l_dur->val[0];
    r.l_kl = st.l_kl->val[0];
    return r;
}

// adds discriminator-dependent terms and the total; fills the report
void Trainer::finish_item_losses(ad::Graph& g, ItemStateOpaque& st_in, double gamma, double beta,
                                 LossReport& r, ad::Var& total_out) {
    auto& st = static_cast<ItemState&>(st_in);
    nn::Binder bind_d(g, /*trainable=*/false);
    model::DiscOutput d_fake = model_->discriminate(g, bind_d, st.gen_wav);
    model::DiscOutput d_real = model_->discriminate(g, bind_d, st.real_wav);
    ad::Var adv = g.scalar(0.0);
    for (ad::Var s : d_fake.scores) adv = g.add(adv, g.mean(g.square(g.add_scalar(s, -1.0))));
    ad::Var l_adv_g = g.scale(adv, weights_.w_adv);
    ad::Var fm = g.scalar(0.0);
    for (size_t sc = 0; sc < d_fake.features.size(); ++sc) {
        if (d_fake.features[sc].size() != d_real.features[sc].size())
            throw ContractError("feature-matching: discriminator layer count mismatch");
        for (size_t l = 0; l < d_fake.features[sc].size(); ++l)
            fm = g.add(fm, ad::mae(g, d_real.features[sc][l], d_fake.features[sc][l]));
    }
    ad::Var l_fm = g.scale(fm, weights_.w_fm);

    ad::Var fm_im = g.scalar(0.0);
    if (st.gen_im) {
        model::DiscOutput di_fake = model_->discriminate(g, bind_d, st.gen_im);
        model::DiscOutput di_real = model_->discriminate(g, bind_d, st.real_im);
        for (size_t sc = 0; sc < di_fake.features.size(); ++sc) {
            if (di_fake.features[sc].size() != di_real.features[sc].size())
                throw ContractError("feature-matching: discriminator layer count mismatch");
            for (size_t l = 0; l < di_fake.features[sc].size(); ++l)
                fm_im = g.add(fm_im,
                              ad::mae(g, di_real.features[sc][l], di_fake.features[sc][l]));
        }
    }
    ad::Var l_im = g.scale(mapper::balanced_im_loss(g, gamma, beta, st.ce, fm_im), weights_.w_im);

    ad::Var total = g.add(g.add(g.add(st.l_cls, l_fm), g.add(l_adv_g, st.l_f0)),
                          g.add(g.add(st.l_dur, l_im), st.l_kl));

    r.l_adv_g = l_adv_g->val[0];
    r.l_fm = l_fm->val[0];
    r.l_im = l_im->val[0];
    r.total = total->val[0];
    check_finite("l_cls", r.l_cls);
    check_finite("l_fm", r.l_fm);
    check_finite("l_adv_g", r.l_adv_g);
    check_finite("l_f0", r.l_f0);
    check_finite("l_dur", r.l_dur);
    check_finite("l_im", r.l_im);
    check_finite("l_kl", r.l_kl);
    check_finite("total", r.total);
    total_out = total;
}

LossReport Trainer::train_batch(const corpus::Batch& batch, int epoch, int batch_index,
                                double lr) {
    const int B = static_cast<int>(batch.items.size());
    const auto gb = mapper::gamma_schedule(epoch, cfg_.get_double("sched.gamma_start"),
                                           cfg_.get_double("sched.gamma_floor"));

    // phase 1: generator forward for every item (trainable generator leaves)
    std::vector<ItemState> states(static_cast<size_t>(B));
    std::vector<LossReport> reports(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) {
        const ItemPlan plan = make_plan(epoch, batch_index, i);
        auto& st = states[static_cast<size_t>(i)];
        st.g = std::make_unique<ad::Graph>();
        st.bind = std::make_unique<nn::Binder>(*st.g, /*trainable=*/true);
        st.f = batch.items[static_cast<size_t>(i)];
        reports[static_cast<size_t>(i)] =
            forward_item(*st.g, *st.bind, *st.f, plan, gb.beta, st);
    }

    // phase 2: discriminator update on the detached generated slices
    double l_adv_d = 0.0;
    {
        ad::Graph gd;
        nn::Binder bind_d(gd, /*trainable=*/true);
        ad::Var d_total = gd.scalar(0.0);
        for (auto& st : states) {
            ad::Var fake = gd.constant(st.gen_wav->val);
            ad::Var real = gd.constant(st.real_wav->val);
            model::DiscOutput off = model_->discriminate(gd, bind_d, fake);
            model::DiscOutput orr = model_->discriminate(gd, bind_d, real);
            d_total = gd.add(d_total, discriminator_loss(gd, orr.scores, off.scores));
        }
        d_total = gd.scale(d_total, 1.0 / B);
        l_adv_d = d_total->val[0];
        check_finite("l_adv_d", l_adv_d);
        gd.backward(d_total);
        bind_d.accumulate_grads();
        opt_d_->step(store_, lr, is_disc_param);
    }

    // phase 3: finish generator losses against the refreshed discriminator
    LossReport out;
    for (int i = 0; i < B; ++i) {
        auto& st = states[static_cast<size_t>(i)];
        ad::Var total = nullptr;
        finish_item_losses(*st.g, st, gb.gamma, gb.beta, reports[static_cast<size_t>(i)], total);
        ad::Var scaled = st.g->scale(total, 1.0 / B);
        st.g->backward(scaled);
        st.bind->accumulate_grads();
        out.add(reports[static_cast<size_t>(i)]);
        st.g.reset();
    }
    opt_g_->step(store_, lr, [](const std::string& n) { return !is_disc_param(n); });

    out.scale(1.0 / B);
    out.l_adv_d = l_adv_d;
    return out;
}

LossReport Trainer::eval_item(const corpus::UttFeatures& f, uint64_t seed) {
    const auto& mcfg = model_->cfg();
    const int T = f.num_frames();
    const int hop = mcfg.hop_length;
    const int frames_avail = static_cast<int>(f.wav.size() / hop);

    ad::Graph g;
    nn::Binder bind(g, /*trainable=*/false);
    Rng rng(seed);

    emotion::EvaluatorProvider exact = provider_;
    exact.oracle_sigma = 0.0;
    const emotion::VadValues vad = emotion::evaluate(*f.utt, exact, rng);
    ad::Var vad_row = g.constant(emotion::vad_row(vad));
    ad::Var cond = model_->frame_condition(g, bind, vad_row, f.emotion, T);
    model::FrameLatent zq = model_->posterior_encode(g, bind, g.constant(f.mel), cond, nullptr);

    const int seg = std::min(cfg_.get_int("sched.segment_frames"), frames_avail);
    const int max_start = frames_avail - seg;
    const int start =
        max_start > 0 ? static_cast<int>(Rng::splitmix(fnv1a(f.id.data(), f.id.size())) %
                                         static_cast<uint64_t>(max_start + 1))
                      : 0;
    ad::Var z_slice = g.slice_rows(zq.sample, start, seg);
    Tensor t_logf0({seg, 1}), t_voicing({seg, 1});
    for (int t = 0; t < seg; ++t) {
        t_logf0[t] = std::log(std::max(f.f0[static_cast<size_t>(start + t)], 1.0));
        t_voicing[t] = f.voicing[static_cast<size_t>(start + t)] ? 1.0 : 0.0;
    }
    model::SpeakerFeatures teacher;
    teacher.log_f0 = g.constant(t_logf0);
    teacher.voicing = g.constant(t_voicing);
    teacher.speaker_embedding = model_->predict_f0(g, bind, z_slice, f.speaker_index)
                                    .speaker_embedding;
    ad::Var gen = model_->decode(g, bind, z_slice, teacher);
    Tensor real_slice({seg * hop, 1});
    for (int i = 0; i < seg * hop; ++i)
        real_slice[i] = f.wav.samples[static_cast<size_t>(start * hop + i)];
    ad::Var l_cls = g.scale(ad::mae(g, model::diff_log_mel(g, gen, dsp_cfg_),
                                    model::diff_log_mel(g, g.constant(real_slice), dsp_cfg_)),
                            weights_.w_cls);
    LossReport r;
    r.l_cls = l_cls->val[0];
    return r;
}

void Trainer::train() {
    const int epochs = cfg_.get_int("sched.epochs");
    const int batch_size = cfg_.get_int("sched.batch_size");
    const int ckpt_every = cfg_.get_int("sched.ckpt_every");
    const double lr_init = cfg_.get_double("optim.lr");
    const double decay = cfg_.get_double("optim.lr_decay");

    const auto valid_items = manifest_->split_entries("valid");

    for (int e = epoch_ + 1; e <= epochs; ++e) {
        const double lr = learning_rate(lr_init, decay, e);
        const auto gb = mapper::gamma_schedule(e, cfg_.get_double("sched.gamma_start"),
                                               cfg_.get_double("sched.gamma_floor"));
        const auto batches =
            corpus::make_batches(*features_, "train", batch_size, derive_seed(e, 0, 77));
        LossReport epoch_report;
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            LossReport r = train_batch(batches[bi], e, static_cast<int>(bi), lr);
            epoch_report.add(r);
        }
        epoch_report.scale(1.0 / static_cast<double>(batches.size()));

        double val_l_cls = 0.0;
        if (!valid_items.empty()) {
            for (const auto* u : valid_items)
                val_l_cls += eval_item(features_->get(u->id), derive_seed(0, 0, 99)).l_cls;
            val_l_cls /= static_cast<double>(valid_items.size());
        }
        if (!epoch_report.all_finite())
            throw NumericError("non-finite loss at epoch " + std::to_string(e));

        std::ostringstream line;
        line << e << " lr=" << fmt17(lr) << " gamma=" << fmt17(gb.gamma)
             << " beta=" << fmt17(gb.beta) << " " << epoch_report.to_pairs()
             << " val_l_cls=" << fmt17(val_l_cls);
        write_metrics_line(line.str());
        epoch_ = e;

        if (e % ckpt_every == 0 || e == epochs) {
            Checkpoint meta;
            meta.cfg = cfg_;
            meta.epoch = e;
            meta.rng_state = rng_.state();
            meta.adam_g_steps = opt_g_->step_count();
            meta.adam_d_steps = opt_d_->step_count();
            std::ostringstream name;
            name << "ckpt_epoch_" << std::setw(4) << std::setfill('0') << e << ".bin";
            save_checkpoint((fs::path(out_dir_) / name.str()).string(), store_, meta);
            if (e == epochs)
                save_checkpoint((fs::path(out_dir_) / "ckpt_final.bin").string(), store_, meta);
        }
    }
}

}  // namespace einet::training
