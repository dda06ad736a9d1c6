// Copyright 2026 EINet Authors
// Objective evaluation: MCD, RMSE-F0, DDUR, MSD, track emission, and the
// external classification-accuracy hook.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "einet/dsp.hpp"
#include "einet/tensor.hpp"

namespace einet::metrics {

enum class Align { dtw, trim };
enum class F0Domain { hz, log };

struct EvalReport {
    double mcd_db = 0.0;
    std::optional<double> rmse_f0;  // missing when no voiced overlap exists
    double ddur_seconds = 0.0;
    double msd = 0.0;
    std::optional<double> acc_cls;
    int sample_count = 0;
    std::string f0_domain = "hz";
};

// DTW over rows of two feature matrices; returns index pairs along the path.
std::vector<std::pair<int, int>> dtw_path(const Tensor& a, const Tensor& b);

// Mean mel-cepstral distortion in dB over aligned frames; coefficient 0 is
// excluded from the distance. Cepstra are [T x C] with C >= 2.
double mcd(const Tensor& ref_cepstra, const Tensor& hyp_cepstra, Align align = Align::dtw);

// RMSE of F0 over frames voiced in both tracks, after DTW alignment on the
// given mel features. Returns nullopt when the voiced intersection is empty.
std::optional<double> rmse_f0(const dsp::PitchTrack& ref, const dsp::PitchTrack& hyp,
                              const Tensor& ref_mel, const Tensor& hyp_mel,
                              F0Domain domain = F0Domain::hz);

// Mean absolute difference of paired utterance durations, in seconds.
double ddur(const std::vector<double>& ref_seconds, const std::vector<double>& hyp_seconds);

// Mean over unordered pairs of squared euclidean distance.
double msd(const std::vector<std::vector<double>>& samples);

// Utterance-level statistics vector for MSD: mean/std of each log-mel band,
// mean/std of voiced log-F0, mean RMS.
std::vector<double> msd_features(const dsp::MelSpectrogram& mel, const dsp::PitchTrack& pitch,
                                 const dsp::EnergyTrack& energy);

// Columnar text file: frame_time f0_hz voicing rms (+ optional .mel dump).
void emit_tracks(const dsp::Waveform& w, const dsp::DspConfig& cfg, const std::string& out_path,
                 bool dump_mel = false);

struct TrackData {
    std::vector<double> frame_time, f0_hz, rms;
    std::vector<int> voicing;
};
TrackData parse_tracks(const std::string& path);

// Runs `command <list_file>` where the list file holds `id wav_path expected`
// lines; the command must print `id predicted_label` lines. Returns accuracy.
double run_acc_cls_hook(const std::string& command,
                        const std::vector<std::tuple<std::string, std::string, std::string>>& items);

}  // namespace einet::metrics
