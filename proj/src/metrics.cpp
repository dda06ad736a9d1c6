// Copyright 2026 EINet Authors
// Metric implementations.
//
// Licensed under the Apache License, Version 2.0

#include "einet/metrics.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace einet::metrics {

namespace {
double frame_dist(const Tensor& a, int i, const Tensor& b, int j, int c0) {
    double acc = 0.0;
    for (int c = c0; c < a.cols(); ++c) {
        const double d = a.at(i, c) - b.at(j, c);
        acc += d * d;
    }
    return std::sqrt(acc);
}
}  // namespace

std::vector<std::pair<int, int>> dtw_path(const Tensor& a, const Tensor& b) {
    const int n = a.rows(), m = b.rows();
    if (n == 0 || m == 0) throw InputError("dtw_path: empty sequence");
    if (a.cols() != b.cols()) throw ContractError("dtw_path: feature width mismatch");
    constexpr double kInf = 1e300;
    Tensor D({n + 1, m + 1});
    std::fill(D.data.begin(), D.data.end(), kInf);
    D.at(0, 0) = 0.0;
    for (int i = 1; i <= n; ++i) {
        for (int j = 1; j <= m; ++j) {
            const double c = frame_dist(a, i - 1, b, j - 1, 0);
            D.at(i, j) = c + std::min({D.at(i - 1, j - 1), D.at(i - 1, j), D.at(i, j - 1)});
        }
    }
    std::vector<std::pair<int, int>> path;
    int i = n, j = m;
    while (i > 0 && j > 0) {
        path.emplace_back(i - 1, j - 1);
        const double diag = D.at(i - 1, j - 1), up = D.at(i - 1, j), left = D.at(i, j - 1);
        if (diag <= up && diag <= left) {
            --i;
            --j;
        } else if (up <= left) {
            --i;
        } else {
            --j;
        }
    }
    std::reverse(path.begin(), path.end());
    return path;
}

double mcd(const Tensor& ref, const Tensor& hyp, Align align) {
    if (ref.rows() == 0 || hyp.rows() == 0) throw InputError("mcd: empty cepstra");
    if (ref.cols() != hyp.cols()) throw ContractError("mcd: coefficient count mismatch");
    if (ref.cols() < 2) throw InputError("mcd: need at least two coefficients");
    const double k = 10.0 / std::log(10.0) * std::sqrt(2.0);
    double acc = 0.0;
    int count = 0;
    if (align == Align::dtw) {
        // align on the distance-relevant coefficients (c0 excluded)
        for (auto [i, j] : dtw_path(ref, hyp)) {
            acc += frame_dist(ref, i, hyp, j, 1);
            ++count;
        }
    } else {
        const int t = std::min(ref.rows(), hyp.rows());
        for (int i = 0; i < t; ++i) {
            acc += frame_dist(ref, i, hyp, i, 1);
            ++count;
        }
    }
    return k * acc / count;
}

std::optional<double> rmse_f0(const dsp::PitchTrack& ref, const dsp::PitchTrack& hyp,
                              const Tensor& ref_mel, const Tensor& hyp_mel, F0Domain domain) {
    if (ref.num_frames() != ref_mel.rows() || hyp.num_frames() != hyp_mel.rows())
        throw ContractError("rmse_f0: pitch/mel frame count mismatch");
    double acc = 0.0;
    int count = 0;
    for (auto [i, j] : dtw_path(ref_mel, hyp_mel)) {
        if (!ref.voicing[i] || !hyp.voicing[j]) continue;
        double d;
        if (domain == F0Domain::hz)
            d = ref.f0_hz[i] - hyp.f0_hz[j];
        else
            d = std::log(ref.f0_hz[i]) - std::log(hyp.f0_hz[j]);
        acc += d * d;
        ++count;
    }
    if (count == 0) return std::nullopt;
    return std::sqrt(acc / count);
}

double ddur(const std::vector<double>& ref, const std::vector<double>& hyp) {
    if (ref.size() != hyp.size() || ref.empty())
        throw InputError("ddur: need equally sized non-empty duration lists");
    double acc = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) acc += std::abs(ref[i] - hyp[i]);
    return acc / static_cast<double>(ref.size());
}

double msd(const std::vector<std::vector<double>>& samples) {
    const size_t n = samples.size();
    if (n < 2) throw InputError("msd: need at least two samples");
    const size_t d = samples[0].size();
    for (const auto& s : samples)
        if (s.size() != d) throw ContractError("msd: inconsistent feature dimensions");
    double acc = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            double dist2 = 0.0;
            for (size_t c = 0; c < d; ++c) {
                const double diff = samples[i][c] - samples[j][c];
                dist2 += diff * diff;
            }
            acc += dist2;
            ++pairs;
        }
    }
    return acc / static_cast<double>(pairs);
}

std::vector<double> msd_features(const dsp::MelSpectrogram& mel, const dsp::PitchTrack& pitch,
                                 const dsp::EnergyTrack& energy) {
    const int T = mel.num_frames(), M = mel.n_mels;
    std::vector<double> out;
    out.reserve(2 * M + 3);
    for (int m = 0; m < M; ++m) {
        double mean = 0.0;
        for (int t = 0; t < T; ++t) mean += mel.frames.at(t, m);
        mean /= T;
        double var = 0.0;
        for (int t = 0; t < T; ++t) {
            const double d = mel.frames.at(t, m) - mean;
            var += d * d;
        }
        out.push_back(mean);
        out.push_back(std::sqrt(var / T));
    }
    double fmean = 0.0, fvar = 0.0;
    int voiced = 0;
    for (int t = 0; t < pitch.num_frames(); ++t)
        if (pitch.voicing[t]) {
            fmean += std::log(pitch.f0_hz[t]);
            ++voiced;
        }
    if (voiced > 0) {
        fmean /= voiced;
        for (int t = 0; t < pitch.num_frames(); ++t)
            if (pitch.voicing[t]) {
                const double d = std::log(pitch.f0_hz[t]) - fmean;
                fvar += d * d;
            }
        fvar = std::sqrt(fvar / voiced);
    } else {
        fmean = 0.0;
        fvar = 0.0;
    }
    out.push_back(fmean);
    out.push_back(fvar);
    double rmean = 0.0;
    for (double r : energy.rms) rmean += r;
    out.push_back(energy.rms.empty() ? 0.0 : rmean / energy.rms.size());
    return out;
}

void emit_tracks(const dsp::Waveform& w, const dsp::DspConfig& cfg, const std::string& out_path,
                 bool dump_mel) {
    const auto pitch = dsp::extract_f0(w, cfg);
    const auto energy = dsp::energy_track(w, cfg);
    std::ofstream out(out_path);
    if (!out) throw IoError("emit_tracks: cannot write " + out_path);
    out << "# frame_time f0_hz voicing rms\n";
    out.precision(17);
    for (int t = 0; t < pitch.num_frames(); ++t) {
        out << static_cast<double>(t) * cfg.hop_length / cfg.sample_rate << " " << pitch.f0_hz[t]
            << " " << pitch.voicing[t] << " " << energy.rms[t] << "\n";
    }
    if (!out) throw IoError("emit_tracks: write failed for " + out_path);
    if (dump_mel) {
        const auto mel = dsp::mel_spectrogram(w, cfg);
        std::ofstream mo(out_path + ".mel");
        if (!mo) throw IoError("emit_tracks: cannot write " + out_path + ".mel");
        mo.precision(17);
        for (int t = 0; t < mel.num_frames(); ++t) {
            for (int m = 0; m < mel.n_mels; ++m) mo << (m ? " " : "") << mel.frames.at(t, m);
            mo << "\n";
        }
    }
}

TrackData parse_tracks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("parse_tracks: cannot open " + path);
    TrackData td;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::istringstream is(t);
        double ft, f0, rms;
        int v;
        if (!(is >> ft >> f0 >> v >> rms)) throw LoadError("parse_tracks: malformed row in " + path);
        td.frame_time.push_back(ft);
        td.f0_hz.push_back(f0);
        td.voicing.push_back(v);
        td.rms.push_back(rms);
    }
    return td;
}

double run_acc_cls_hook(
    const std::string& command,
    const std::vector<std::tuple<std::string, std::string, std::string>>& items) {
    if (items.empty()) throw InputError("acc_cls hook: no items");
    const std::string list_path = "/tmp/einet_acc_cls_" + std::to_string(::getpid()) + ".txt";
    {
        std::ofstream out(list_path);
        for (const auto& [id, wav, expected] : items) out << id << " " << wav << " " << expected << "\n";
    }
    const std::string cmd = command + " " + list_path;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw IoError("acc_cls hook: cannot run: " + cmd);
    std::map<std::string, std::string> predicted;
    char buf[512];
    std::string acc_text;
    while (fgets(buf, sizeof(buf), pipe)) acc_text += buf;
    const int status = ::pclose(pipe);
    std::remove(list_path.c_str());
    if (status != 0) throw IoError("acc_cls hook: classifier command failed");
    std::istringstream is(acc_text);
    std::string id, label;
    while (is >> id >> label) predicted[id] = label;
    int correct = 0;
    for (const auto& [uid, wav, expected] : items) {
        auto it = predicted.find(uid);
        if (it == predicted.end())
            throw LoadError("acc_cls hook: classifier returned no label for " + uid);
        if (it->second == expected) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(items.size());
}

}  // namespace einet::metrics
