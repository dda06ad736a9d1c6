// Copyright 2026 EINet Authors
// Configuration defaults and parsing.
//
// Licensed under the Apache License, Version 2.0

#include "einet/config.hpp"

#include <fstream>
#include <sstream>

namespace einet::config {

Config Config::defaults(const std::string& profile) {
    Config c;
    auto put = [&](const char* k, const char* v) { c.kv_[k] = v; };

    put("run.profile", profile.c_str());
    put("run.seed", "1234");

    // data / dsp
    put("data.sample_rate", "16000");
    put("data.n_mels", "80");
    put("data.f_min", "50");
    put("data.f_max", "600");
    put("data.yin_threshold", "0.3");
    put("data.yin_window", "512");

    // model
    put("model.n_emotions", "5");
    put("model.n_speakers", "4");
    put("model.emotion_dim", "16");
    put("model.speaker_dim", "16");
    put("model.mapper_flows", "4");
    put("model.mapper_hidden", "64");
    put("model.classifier_hidden", "64");
    put("model.noise_scale", "0");
    put("model.sample_residual", "0");

    // losses
    put("loss.w_cls", "1");
    put("loss.w_fm", "1");
    put("loss.w_adv", "1");
    put("loss.w_f0", "1");
    put("loss.w_dur", "1");
    put("loss.w_im", "1");
    put("loss.kl_weight", "1");
    put("loss.kl_floor", "0");

    // optimizer (AdamW)
    put("optim.lr", "2e-4");
    put("optim.lr_decay", "0.999875");
    put("optim.beta1", "0.8");
    put("optim.beta2", "0.99");
    put("optim.eps", "1e-9");
    put("optim.weight_decay", "0.01");

    // schedule
    put("sched.gamma_start", "1.0");
    put("sched.gamma_floor", "0.30");
    put("sched.epochs", "200");
    put("sched.batch_size", "8");
    put("sched.ckpt_every", "50");
    put("sched.dropout", "0.1");

    if (profile == "tiny") {
        put("data.n_fft", "256");
        put("data.win_length", "256");
        put("data.hop_length", "64");
        put("model.hidden", "48");
        put("model.latent", "12");
        put("model.emo_feat_dim", "24");
        put("model.wavenet_layers", "2");
        put("model.wavenet_kernel", "3");
        put("model.flow_layers", "2");
        put("model.flow_hidden", "32");
        put("model.fft_heads", "2");
        put("model.fft_ffn", "96");
        put("model.dec_width", "64");
        put("model.dec_rates", "4,4,4");
        put("model.disc_widths", "8,16,32");
        put("model.disc_kernel", "15");
        put("model.disc_scales", "2");
        put("sched.segment_frames", "32");
        put("sched.im_segment_frames", "16");
    } else if (profile == "desk" || profile == "full") {
        put("data.n_fft", "1024");
        put("data.win_length", "1024");
        put("data.hop_length", "256");
        put("model.hidden", "192");
        put("model.latent", "192");
        put("model.emo_feat_dim", "192");
        put("model.wavenet_layers", "4");
        put("model.wavenet_kernel", "5");
        put("model.flow_layers", "4");
        put("model.flow_hidden", "192");
        put("model.fft_heads", "2");
        put("model.fft_ffn", "768");
        put("model.dec_width", "128");
        put("model.dec_rates", "8,8,2,2");
        put("model.disc_widths", "16,64,128,128");
        put("model.disc_kernel", "15");
        put("model.disc_scales", "3");
        put("sched.segment_frames", "32");
        put("sched.im_segment_frames", "16");
    } else {
        throw ConfigError("unknown profile: " + profile);
    }
    return c;
}

void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

void Config::set(const std::string& key, const std::string& value) {
    if (!kv_.count(key)) throw ConfigError("unknown config key: " + key);
    kv_[key] = value;
}

void Config::set_unchecked(const std::string& key, const std::string& value) {
    kv_[key] = value;
}

std::string Config::get_str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing config key: " + key);
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " is not a number: " + v);
    }
}

int Config::get_int(const std::string& key) const {
    const double d = get_double(key);
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d)
        throw ConfigError("config key " + key + " is not an integer");
    return i;
}

bool Config::get_bool(const std::string& key) const {
    const std::string v = get_str(key);
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ConfigError("config key " + key + " is not a boolean: " + v);
}

std::vector<std::string> Config::lines() const {
    std::vector<std::string> out;
    out.reserve(kv_.size());
    for (auto& [k, v] : kv_) out.push_back(k + "=" + v);
    return out;
}

std::string Config::text() const {
    std::ostringstream os;
    for (auto& l : lines()) os << l << "\n";
    return os.str();
}

Config Config::from_text(const std::string& text) {
    Config c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("malformed config text line: " + t);
        c.kv_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return c;
}

std::vector<std::string> Config::diff(const Config& o) const {
    std::vector<std::string> keys;
    for (auto& [k, v] : kv_) {
        auto it = o.kv_.find(k);
        if (it == o.kv_.end() || it->second != v) keys.push_back(k);
    }
    for (auto& [k, v] : o.kv_)
        if (!kv_.count(k)) keys.push_back(k);
    return keys;
}

}  // namespace einet::config
