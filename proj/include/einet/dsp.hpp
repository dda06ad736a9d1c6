// Copyright 2026 EINet Authors
// Signal-processing primitives: framing, mel-spectrogram, F0 (YIN-style),
// frame energy, and WAV I/O.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <complex>
#include <string>
#include <vector>

#include "einet/common.hpp"
#include "einet/tensor.hpp"

namespace einet::dsp {

struct DspConfig {
    int sample_rate = 16000;
    int n_fft = 1024;
    int win_length = 1024;
    int hop_length = 256;
    int n_mels = 80;
    double mel_floor = 1e-5;  // spectral floor applied before the log
    // F0 extraction (normalized-difference YIN)
    double f_min = 50.0;
    double f_max = 600.0;
    double yin_threshold = 0.3;
    int yin_window = 512;

    void validate() const;
};

struct Waveform {
    std::vector<double> samples;  // amplitudes in [-1, 1]
    int sample_rate = 16000;
    std::string id;

    int64_t size() const { return static_cast<int64_t>(samples.size()); }
    double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct MelSpectrogram {
    Tensor frames;  // [T x n_mels], natural-log mel energies
    int n_mels = 80;
    int hop_length = 256;
    int win_length = 1024;
    int sample_rate = 16000;

    int num_frames() const { return frames.rows(); }
};

struct PitchTrack {
    std::vector<double> f0_hz;  // 0 where unvoiced
    std::vector<int> voicing;   // 1 voiced, 0 unvoiced
    int hop_length = 256;

    int num_frames() const { return static_cast<int>(f0_hz.size()); }
};

struct EnergyTrack {
    std::vector<double> rms;
    int hop_length = 256;

    int num_frames() const { return static_cast<int>(rms.size()); }
};

// Frame count shared by every extractor: floor(len / hop) + 1, centered frames.
inline int num_frames(int64_t num_samples, int hop_length) {
    return static_cast<int>(num_samples / hop_length) + 1;
}

// In-place radix-2 FFT, n must be a power of two. inverse=true applies 1/n.
void fft(std::vector<std::complex<double>>& a, bool inverse);

// Triangular mel filterbank on the HTK mel scale, rows are filters:
// [n_mels x (n_fft/2 + 1)], peak weight 1 at each filter center.
Tensor mel_filterbank(int n_mels, int n_fft, int sample_rate);

// Reflection-padded centered frame: samples [center - win/2, center + win/2).
std::vector<double> reflect_frame(const std::vector<double>& x, int64_t center, int win);

MelSpectrogram mel_spectrogram(const Waveform& w, const DspConfig& cfg);
PitchTrack extract_f0(const Waveform& w, const DspConfig& cfg);
EnergyTrack energy_track(const Waveform& w, const DspConfig& cfg);

// 13 mel-cepstral coefficients (orthonormal DCT-II of log-mel rows).
Tensor mel_cepstra(const MelSpectrogram& mel, int n_coeffs = 13);

// WAV I/O: mono PCM16 or float32 only; anything else raises InputError
// naming the offending path. Writing always produces PCM16.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

}  // namespace einet::dsp
