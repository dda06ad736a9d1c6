// Copyright 2026 EINet Authors
// Mel-spectrogram, YIN-style F0, frame energy, WAV I/O.
//
// Licensed under the Apache License, Version 2.0

#include "einet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace einet::dsp {

namespace {
constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }
}  // namespace

void DspConfig::validate() const {
    if (sample_rate <= 0) throw ConfigError("DspConfig: sample_rate must be positive");
    if (!is_pow2(n_fft)) throw ConfigError("DspConfig: n_fft must be a power of two");
    if (win_length <= 0 || win_length > n_fft)
        throw ConfigError("DspConfig: win_length must be in (0, n_fft]");
    if (hop_length <= 0) throw ConfigError("DspConfig: hop_length must be positive");
    if (n_mels <= 0) throw ConfigError("DspConfig: n_mels must be positive");
    if (f_min < 20.0) throw ConfigError("DspConfig: f_min must be at least 20 Hz");
    if (f_max > sample_rate / 2.0) throw ConfigError("DspConfig: f_max above Nyquist");
    if (f_min >= f_max) throw ConfigError("DspConfig: degenerate F0 band, f_min >= f_max");
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
    const size_t n = a.size();
    if (!is_pow2(static_cast<int>(n))) throw ContractError("fft: size must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

Tensor mel_filterbank(int n_mels, int n_fft, int sample_rate) {
    const int n_bins = n_fft / 2 + 1;
    Tensor fb({n_mels, n_bins});
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    std::vector<double> centers(static_cast<size_t>(n_mels) + 2);
    for (int i = 0; i < n_mels + 2; ++i)
        centers[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
    for (int m = 0; m < n_mels; ++m) {
        const double f0 = centers[m], f1 = centers[m + 1], f2 = centers[m + 2];
        for (int b = 0; b < n_bins; ++b) {
            const double f = static_cast<double>(b) * sample_rate / n_fft;
            double w = 0.0;
            if (f > f0 && f < f1)
                w = (f - f0) / (f1 - f0);
            else if (f >= f1 && f < f2)
                w = (f2 - f) / (f2 - f1);
            fb.at(m, b) = w;
        }
    }
    return fb;
}

std::vector<double> reflect_frame(const std::vector<double>& x, int64_t center, int win) {
    const int64_t n = static_cast<int64_t>(x.size());
    std::vector<double> out(static_cast<size_t>(win));
    for (int i = 0; i < win; ++i) {
        int64_t idx = center - win / 2 + i;
        while (idx < 0 || idx >= n) {
            if (idx < 0) idx = -idx;
            if (idx >= n) idx = 2 * n - 2 - idx;
        }
        out[static_cast<size_t>(i)] = x[static_cast<size_t>(idx)];
    }
    return out;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const DspConfig& cfg) {
    cfg.validate();
    if (w.sample_rate != cfg.sample_rate)
        throw ConfigError("mel_spectrogram: waveform sample rate " + std::to_string(w.sample_rate) +
                          " does not match config " + std::to_string(cfg.sample_rate));
    if (w.size() < cfg.win_length)
        throw InputError("mel_spectrogram: waveform shorter than win_length");

    const int T = num_frames(w.size(), cfg.hop_length);
    const int n_bins = cfg.n_fft / 2 + 1;
    const Tensor fb = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate);

    std::vector<double> hann(static_cast<size_t>(cfg.win_length));
    for (int i = 0; i < cfg.win_length; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / cfg.win_length);

    MelSpectrogram mel;
    mel.frames = Tensor({T, cfg.n_mels});
    mel.n_mels = cfg.n_mels;
    mel.hop_length = cfg.hop_length;
    mel.win_length = cfg.win_length;
    mel.sample_rate = cfg.sample_rate;

    std::vector<std::complex<double>> buf(static_cast<size_t>(cfg.n_fft));
    std::vector<double> power(static_cast<size_t>(n_bins));
    for (int t = 0; t < T; ++t) {
        const auto frame = reflect_frame(w.samples, static_cast<int64_t>(t) * cfg.hop_length,
                                         cfg.win_length);
        std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
        for (int i = 0; i < cfg.win_length; ++i) buf[i] = frame[i] * hann[i];
        fft(buf, false);
        for (int b = 0; b < n_bins; ++b) power[b] = std::norm(buf[b]);
        for (int m = 0; m < cfg.n_mels; ++m) {
            double acc = 0.0;
            const double* row = &fb.data[static_cast<size_t>(m) * n_bins];
            for (int b = 0; b < n_bins; ++b) acc += row[b] * power[b];
            mel.frames.at(t, m) = std::log(std::max(acc, cfg.mel_floor));
        }
    }
    return mel;
}

PitchTrack extract_f0(const Waveform& w, const DspConfig& cfg) {
    cfg.validate();
    const int T = num_frames(w.size(), cfg.hop_length);
    const int tau_min = std::max(2, static_cast<int>(std::ceil(cfg.sample_rate / cfg.f_max)));
    const int tau_max = static_cast<int>(std::floor(cfg.sample_rate / cfg.f_min));
    const int W = cfg.yin_window;
    const int buf_len = W + tau_max;

    PitchTrack pt;
    pt.hop_length = cfg.hop_length;
    pt.f0_hz.assign(static_cast<size_t>(T), 0.0);
    pt.voicing.assign(static_cast<size_t>(T), 0);

    std::vector<double> d(static_cast<size_t>(tau_max) + 1, 0.0);
    std::vector<double> cmnd(static_cast<size_t>(tau_max) + 1, 1.0);
    for (int t = 0; t < T; ++t) {
        const auto buf = reflect_frame(w.samples, static_cast<int64_t>(t) * cfg.hop_length, buf_len);
        // squared-difference function over the integration window
        for (int tau = 1; tau <= tau_max; ++tau) {
            double acc = 0.0;
            for (int j = 0; j < W; ++j) {
                const double delta = buf[j] - buf[j + tau];
                acc += delta * delta;
            }
            d[tau] = acc;
        }
        // cumulative-mean normalization
        double running = 0.0;
        cmnd[0] = 1.0;
        for (int tau = 1; tau <= tau_max; ++tau) {
            running += d[tau];
            cmnd[tau] = running > 0.0 ? d[tau] * tau / running : 1.0;
        }
        // first dip under the periodicity threshold
        int tau_est = -1;
        for (int tau = tau_min; tau <= tau_max; ++tau) {
            if (cmnd[tau] < cfg.yin_threshold) {
                while (tau + 1 <= tau_max && cmnd[tau + 1] < cmnd[tau]) ++tau;
                tau_est = tau;
                break;
            }
        }
        if (tau_est < 0) continue;
        // parabolic refinement around the dip
        double better = static_cast<double>(tau_est);
        if (tau_est > tau_min && tau_est < tau_max) {
            const double s0 = cmnd[tau_est - 1], s1 = cmnd[tau_est], s2 = cmnd[tau_est + 1];
            const double denom = 2.0 * (2.0 * s1 - s2 - s0);
            if (std::abs(denom) > 1e-12) better += (s2 - s0) / denom;
        }
        double f0 = cfg.sample_rate / better;
        f0 = std::clamp(f0, cfg.f_min, cfg.f_max);
        pt.f0_hz[t] = f0;
        pt.voicing[t] = 1;
    }
    return pt;
}

EnergyTrack energy_track(const Waveform& w, const DspConfig& cfg) {
    cfg.validate();
    if (w.size() < cfg.win_length)
        throw InputError("energy_track: waveform shorter than win_length");
    const int T = num_frames(w.size(), cfg.hop_length);
    EnergyTrack et;
    et.hop_length = cfg.hop_length;
    et.rms.assign(static_cast<size_t>(T), 0.0);
    for (int t = 0; t < T; ++t) {
        const auto frame = reflect_frame(w.samples, static_cast<int64_t>(t) * cfg.hop_length,
                                         cfg.win_length);
        double acc = 0.0;
        for (double x : frame) acc += x * x;
        et.rms[t] = std::sqrt(acc / cfg.win_length);
    }
    return et;
}

Tensor mel_cepstra(const MelSpectrogram& mel, int n_coeffs) {
    const int T = mel.num_frames();
    const int M = mel.n_mels;
    if (n_coeffs > M) throw ContractError("mel_cepstra: n_coeffs exceeds n_mels");
    Tensor out({T, n_coeffs});
    const double norm0 = std::sqrt(1.0 / M);
    const double normk = std::sqrt(2.0 / M);
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < n_coeffs; ++k) {
            double acc = 0.0;
            for (int m = 0; m < M; ++m)
                acc += mel.frames.at(t, m) * std::cos(kPi * k * (m + 0.5) / M);
            out.at(t, k) = acc * (k == 0 ? norm0 : normk);
        }
    }
    return out;
}

namespace {

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}
void write_u16(std::ostream& out, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

Waveform read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("read_wav: cannot open " + path);
    char tag[4];
    in.read(tag, 4);
    if (std::memcmp(tag, "RIFF", 4) != 0) throw InputError("read_wav: not a RIFF file: " + path);
    read_u32(in);  // riff size
    in.read(tag, 4);
    if (std::memcmp(tag, "WAVE", 4) != 0) throw InputError("read_wav: not a WAVE file: " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    Waveform w;
    bool got_fmt = false, got_data = false;
    while (in.read(tag, 4)) {
        uint32_t chunk = read_u32(in);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            format = read_u16(in);
            channels = read_u16(in);
            rate = read_u32(in);
            read_u32(in);  // byte rate
            read_u16(in);  // block align
            bits = read_u16(in);
            if (chunk > 16) in.ignore(chunk - 16);
            got_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!got_fmt) throw InputError("read_wav: data before fmt in " + path);
            if (channels != 1) throw InputError("read_wav: only mono supported: " + path);
            if (format == 1 && bits == 16) {
                const uint32_t n = chunk / 2;
                w.samples.resize(n);
                for (uint32_t i = 0; i < n; ++i) {
                    unsigned char b[2];
                    in.read(reinterpret_cast<char*>(b), 2);
                    int16_t s = static_cast<int16_t>(b[0] | (b[1] << 8));
                    w.samples[i] = static_cast<double>(s) / 32768.0;
                }
            } else if (format == 3 && bits == 32) {
                const uint32_t n = chunk / 4;
                w.samples.resize(n);
                for (uint32_t i = 0; i < n; ++i) {
                    unsigned char b[4];
                    in.read(reinterpret_cast<char*>(b), 4);
                    float f;
                    uint32_t u = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                                 (static_cast<uint32_t>(b[2]) << 16) |
                                 (static_cast<uint32_t>(b[3]) << 24);
                    std::memcpy(&f, &u, 4);
                    w.samples[i] = static_cast<double>(f);
                }
            } else {
                throw InputError("read_wav: unsupported encoding (need PCM16 or float32): " + path);
            }
            got_data = true;
            break;
        } else {
            in.ignore(chunk + (chunk & 1));
        }
    }
    if (!got_data) throw InputError("read_wav: no data chunk in " + path);
    if (w.samples.empty()) throw InputError("read_wav: empty waveform in " + path);
    w.sample_rate = static_cast<int>(rate);
    return w;
}

void write_wav(const std::string& path, const Waveform& w) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_wav: cannot open " + path + " for writing");
    const uint32_t n = static_cast<uint32_t>(w.samples.size());
    out.write("RIFF", 4);
    write_u32(out, 36 + n * 2);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1);  // PCM
    write_u16(out, 1);  // mono
    write_u32(out, static_cast<uint32_t>(w.sample_rate));
    write_u32(out, static_cast<uint32_t>(w.sample_rate) * 2);
    write_u16(out, 2);
    write_u16(out, 16);
    out.write("data", 4);
    write_u32(out, n * 2);
    for (uint32_t i = 0; i < n; ++i) {
        double x = std::clamp(w.samples[i], -1.0, 1.0);
        int16_t s = static_cast<int16_t>(std::lrint(x * 32767.0));
        write_u16(out, static_cast<uint16_t>(s));
    }
    if (!out) throw IoError("write_wav: write failed for " + path);
}

}  // namespace einet::dsp
