// Copyright 2026 EINet Authors
// Corpus data model: manifest records, ESD-layout loading, the synthetic toy
// corpus generator, feature caching, and padded batching.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "einet/dsp.hpp"
#include "einet/tensor.hpp"

namespace einet::emotion {
struct VadValues {
    double valence = 0.5;
    double arousal = 0.5;
    double dominance = 0.5;
    void validate() const;
};
}  // namespace einet::emotion

namespace einet::corpus {

constexpr int kNumEmotions = 5;
// inventory order is fixed: neutral, angry, happy, sad, surprise
const char* emotion_name(int id);
int emotion_id(const std::string& name);  // -1 if unknown

struct Utterance {
    std::string id;
    std::string audio_path;
    std::vector<int> phonemes;
    int emotion = 0;
    std::string speaker;
    std::string split;  // train / valid / test
    std::optional<emotion::VadValues> vad;
    std::optional<std::vector<int>> durations;  // per-phoneme frame counts
};

struct Manifest {
    std::vector<Utterance> entries;
    std::vector<std::string> phoneme_inventory;
    int version = 1;

    void validate() const;
    const Utterance* find(const std::string& id) const;
    std::vector<const Utterance*> split_entries(const std::string& split) const;
    std::vector<std::string> speakers() const;  // sorted unique
    int speaker_index(const std::string& speaker) const;
};

Manifest load_manifest(const std::string& path);
void write_manifest(const Manifest& m, const std::string& path);

// root/<speaker>/<EmotionName>/*.wav; pair like "Neu-Sad" restricts emotions.
// Sorted file order fills train/valid/test splits of 300/30/20 per emotion.
Manifest load_esd_layout(const std::string& root_dir, const std::string& pair);

// ---- toy corpus ----

struct ToyParams {
    // per-emotion modulation (neutral, angry, happy, sad, surprise)
    double pitch_coef[kNumEmotions] = {0.5, 1.4, 1.2, 0.6, 1.5};     // a_e
    double energy_coef[kNumEmotions] = {0.5, 1.3, 1.1, 0.6, 1.4};    // b_e
    double duration_coef[kNumEmotions] = {1.0, 0.9, 0.85, 1.35, 1.15};  // d_e
    double sigma_base_hz = 8.0;
    double rms_base = 0.1;
    int n_phoneme_symbols = 32;
};

// fixed emotion -> VAD anchors; intensity interpolates from the neutral anchor
emotion::VadValues toy_vad_anchor(int emotion);
emotion::VadValues toy_vad(int emotion, double intensity);

struct ToyUtteranceSpec {
    int min_phonemes = 3;
    int max_phonemes = 5;
    double base_f0 = 180.0;
    int emotion = 0;
    double intensity = 0.5;  // strictly inside (0, 1)
    uint64_t seed = 0;
    int sample_rate = 16000;
    int hop_length = 64;
    std::string speaker = "spk0";
    std::string id = "toy";
    ToyParams params;

    void validate() const;
};

std::pair<dsp::Waveform, Utterance> synth_toy_utterance(const ToyUtteranceSpec& spec);

struct ToyCorpusSpec {
    int n_per_group = 10;  // utterances per (emotion, intensity)
    std::vector<double> intensities = {0.2, 0.5, 0.8};
    uint64_t seed = 7;
    int sample_rate = 16000;
    int hop_length = 64;
    int n_speakers = 1;
    ToyParams params;
};

// Writes WAVs + manifest.txt under out_dir. Split sizes follow the 300/30/20
// ratio per (emotion, intensity) group with a minimum of one valid/test
// utterance per group when n_per_group >= 3.
Manifest synth_toy_corpus(const ToyCorpusSpec& spec, const std::string& out_dir);

// ---- features & batching ----

struct UttFeatures {
    std::string id;
    const Utterance* utt = nullptr;
    dsp::Waveform wav;
    Tensor mel;  // [T x n_mels]
    std::vector<double> f0;
    std::vector<int> voicing;
    std::vector<double> rms;
    int emotion = 0;
    int speaker_index = 0;
    int num_frames() const { return mel.rows(); }
};

// Loads audio and extracts features for every manifest entry, optionally
// caching to the directory named by the EINET_CACHE environment variable.
class FeatureSet {
public:
    FeatureSet(const Manifest& manifest, const dsp::DspConfig& cfg);
    const UttFeatures& get(const std::string& id) const;
    const Manifest& manifest() const { return *manifest_; }
    const dsp::DspConfig& dsp_config() const { return cfg_; }

private:
    const Manifest* manifest_;
    dsp::DspConfig cfg_;
    std::map<std::string, std::unique_ptr<UttFeatures>> features_;
};

struct Batch {
    std::vector<const UttFeatures*> items;
    // padded contract arrays; pad positions are zero and masked out
    int max_frames = 0;
    int max_phonemes = 0;
    Tensor mel;                        // [B*max_frames x n_mels]
    Tensor frame_mask;                 // [B x max_frames], 1 valid / 0 pad
    std::vector<int> frame_lengths;
    std::vector<int> phoneme_ids;      // [B*max_phonemes], pad 0
    std::vector<int> phoneme_mask;     // [B*max_phonemes]
    std::vector<int> phoneme_lengths;
    std::vector<int> emotion_ids;
    std::vector<int> speaker_ids;
    std::vector<std::optional<emotion::VadValues>> vads;
};

std::vector<Batch> make_batches(const FeatureSet& features, const std::string& split,
                                int batch_size, uint64_t seed);

}  // namespace einet::corpus
