// Copyright 2026 EINet Authors
// Manifest I/O, ESD layout, toy generator, feature extraction, batching.
//
// Licensed under the Apache License, Version 2.0

#include "einet/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace einet::emotion {
void VadValues::validate() const {
    for (double x : {valence, arousal, dominance}) {
        if (!std::isfinite(x)) throw InputError("VadValues: non-finite component");
        if (x < 0.0 || x > 1.0)
            throw InputError("VadValues: component " + std::to_string(x) + " outside [0,1]");
    }
}
}  // namespace einet::emotion

namespace einet::corpus {

namespace {
constexpr double kPi = 3.14159265358979323846;
const char* kEmotionNames[kNumEmotions] = {"neutral", "angry", "happy", "sad", "surprise"};
}  // namespace

const char* emotion_name(int id) {
    if (id < 0 || id >= kNumEmotions) throw ContractError("emotion_name: bad id");
    return kEmotionNames[id];
}

int emotion_id(const std::string& name) {
    for (int i = 0; i < kNumEmotions; ++i)
        if (name == kEmotionNames[i]) return i;
    return -1;
}

void Manifest::validate() const {
    std::set<std::string> ids;
    for (const auto& u : entries) {
        if (!ids.insert(u.id).second)
            throw LoadError("manifest: duplicate utterance id '" + u.id + "'");
        if (u.phonemes.empty()) throw LoadError("manifest: empty phonemes for id " + u.id);
        for (int p : u.phonemes)
            if (p < 0 || p >= static_cast<int>(phoneme_inventory.size()))
                throw LoadError("manifest: phoneme id out of inventory for " + u.id);
        if (u.emotion < 0 || u.emotion >= kNumEmotions)
            throw LoadError("manifest: emotion id out of range for " + u.id);
    }
}

const Utterance* Manifest::find(const std::string& id) const {
    for (const auto& u : entries)
        if (u.id == id) return &u;
    return nullptr;
}

std::vector<const Utterance*> Manifest::split_entries(const std::string& split) const {
    std::vector<const Utterance*> out;
    for (const auto& u : entries)
        if (u.split == split) out.push_back(&u);
    return out;
}

std::vector<std::string> Manifest::speakers() const {
    std::set<std::string> s;
    for (const auto& u : entries) s.insert(u.speaker);
    return {s.begin(), s.end()};
}

int Manifest::speaker_index(const std::string& speaker) const {
    const auto sp = speakers();
    const auto it = std::lower_bound(sp.begin(), sp.end(), speaker);
    if (it == sp.end() || *it != speaker)
        throw LoadError("manifest: unknown speaker " + speaker);
    return static_cast<int>(it - sp.begin());
}

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    return os.str();
}

std::vector<int> parse_ints(const std::string& s, const std::string& ctx) {
    std::vector<int> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw LoadError(ctx + ": bad integer '" + tok + "'");
        }
    }
    return out;
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

}  // namespace

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open manifest: " + path);
    Manifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string at = " at line " + std::to_string(lineno);
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            if (t.rfind("#version", 0) == 0) {
                m.version = std::stoi(trim(t.substr(8)));
            } else if (t.rfind("#inventory", 0) == 0) {
                std::istringstream is(t.substr(10));
                std::string tok;
                while (is >> tok) m.phoneme_inventory.push_back(tok);
            }
            continue;
        }
        const auto f = split(t, '|');
        if (f.size() < 6 || f.size() > 8)
            throw LoadError("malformed manifest line (expected 6-8 fields)" + at);
        Utterance u;
        u.id = trim(f[0]);
        u.audio_path = trim(f[1]);
        u.phonemes = parse_ints(f[2], "phonemes" + at);
        if (u.phonemes.empty()) throw LoadError("empty phoneme sequence" + at);
        u.emotion = emotion_id(trim(f[3]));
        if (u.emotion < 0) throw LoadError("unknown emotion '" + trim(f[3]) + "'" + at);
        u.speaker = trim(f[4]);
        u.split = trim(f[5]);
        if (u.split != "train" && u.split != "valid" && u.split != "test")
            throw LoadError("unknown split '" + u.split + "'" + at);
        if (f.size() > 6 && !trim(f[6]).empty()) {
            std::istringstream is(f[6]);
            emotion::VadValues v;
            if (!(is >> v.valence >> v.arousal >> v.dominance))
                throw LoadError("malformed vad field" + at);
            v.validate();
            u.vad = v;
        }
        if (f.size() > 7 && !trim(f[7]).empty())
            u.durations = parse_ints(f[7], "durations" + at);
        m.entries.push_back(std::move(u));
    }
    if (m.phoneme_inventory.empty()) {
        int mx = -1;
        for (const auto& u : m.entries)
            for (int p : u.phonemes) mx = std::max(mx, p);
        for (int i = 0; i <= mx; ++i) m.phoneme_inventory.push_back("p" + std::to_string(i));
    }
    m.validate();
    return m;
}

void write_manifest(const Manifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << "#version " << m.version << "\n";
    out << "#inventory";
    for (const auto& p : m.phoneme_inventory) out << " " << p;
    out << "\n";
    for (const auto& u : m.entries) {
        out << u.id << "|" << u.audio_path << "|" << join_ints(u.phonemes) << "|"
            << emotion_name(u.emotion) << "|" << u.speaker << "|" << u.split << "|";
        if (u.vad)
            out << fmt(u.vad->valence) << " " << fmt(u.vad->arousal) << " "
                << fmt(u.vad->dominance);
        out << "|";
        if (u.durations) out << join_ints(*u.durations);
        out << "\n";
    }
    if (!out) throw IoError("write failed for manifest: " + path);
}

namespace {
int esd_pair_emotion(const std::string& tag) {
    if (tag == "Neu") return 0;
    if (tag == "Ang") return 1;
    if (tag == "Hap") return 2;
    if (tag == "Sad") return 3;
    if (tag == "Sur") return 4;
    throw LoadError("unknown ESD pair tag: " + tag);
}
const char* kEsdFolder[kNumEmotions] = {"Neutral", "Angry", "Happy", "Sad", "Surprise"};
}  // namespace

Manifest load_esd_layout(const std::string& root_dir, const std::string& pair) {
    const auto tags = split(pair, '-');
    if (tags.size() != 2) throw LoadError("conversion pair must look like Neu-Sad: " + pair);
    const int src = esd_pair_emotion(tags[0]);
    const int dst = esd_pair_emotion(tags[1]);

    if (!fs::is_directory(root_dir)) throw LoadError("ESD root is not a directory: " + root_dir);
    Manifest m;
    std::set<std::string> phon_names{"unk"};

    struct Pending {
        Utterance u;
        std::vector<std::string> phoneme_names;
    };
    std::vector<Pending> pending;

    std::vector<std::string> speakers;
    for (const auto& e : fs::directory_iterator(root_dir))
        if (e.is_directory()) speakers.push_back(e.path().filename().string());
    std::sort(speakers.begin(), speakers.end());
    if (speakers.empty()) throw LoadError("ESD root has no speaker folders: " + root_dir);

    for (const auto& spk : speakers) {
        for (int emo : {src, dst}) {
            const fs::path dir = fs::path(root_dir) / spk / kEsdFolder[emo];
            if (!fs::is_directory(dir))
                throw LoadError("missing emotion folder: " + dir.string());
            std::vector<fs::path> wavs;
            for (const auto& e : fs::directory_iterator(dir))
                if (e.path().extension() == ".wav") wavs.push_back(e.path());
            std::sort(wavs.begin(), wavs.end());
            if (wavs.size() < 350)
                throw LoadError("insufficient utterances in " + dir.string() + ": found " +
                                std::to_string(wavs.size()) + ", need 350 (300/30/20)");
            for (size_t i = 0; i < 350; ++i) {
                Pending p;
                p.u.id = spk + "_" + kEsdFolder[emo] + "_" + wavs[i].stem().string();
                p.u.audio_path = wavs[i].string();
                p.u.emotion = emo;
                p.u.speaker = spk;
                p.u.split = i < 300 ? "train" : (i < 330 ? "valid" : "test");
                // optional sidecar phoneme file: one line of space-separated symbols
                const fs::path phn = wavs[i].parent_path() / (wavs[i].stem().string() + ".phn");
                if (fs::exists(phn)) {
                    std::ifstream pin(phn);
                    std::string tok;
                    while (pin >> tok) {
                        p.phoneme_names.push_back(tok);
                        phon_names.insert(tok);
                    }
                }
                if (p.phoneme_names.empty()) p.phoneme_names.push_back("unk");
                pending.push_back(std::move(p));
            }
        }
    }

    m.phoneme_inventory.assign(phon_names.begin(), phon_names.end());
    std::map<std::string, int> index;
    for (size_t i = 0; i < m.phoneme_inventory.size(); ++i)
        index[m.phoneme_inventory[i]] = static_cast<int>(i);
    for (auto& p : pending) {
        for (const auto& name : p.phoneme_names) p.u.phonemes.push_back(index.at(name));
        m.entries.push_back(std::move(p.u));
    }
    m.validate();
    return m;
}

emotion::VadValues toy_vad_anchor(int emotion) {
    switch (emotion) {
        case 0: return {0.5, 0.5, 0.5};
        case 1: return {0.2, 0.9, 0.8};
        case 2: return {0.9, 0.8, 0.6};
        case 3: return {0.2, 0.2, 0.3};
        case 4: return {0.6, 0.9, 0.7};
        default: throw ContractError("toy_vad_anchor: bad emotion id");
    }
}

emotion::VadValues toy_vad(int emotion, double intensity) {
    const auto a = toy_vad_anchor(emotion);
    const double i = intensity;
    return {(1.0 - i) * 0.5 + i * a.valence, (1.0 - i) * 0.5 + i * a.arousal,
            (1.0 - i) * 0.5 + i * a.dominance};
}

void ToyUtteranceSpec::validate() const {
    if (!(intensity > 0.0 && intensity < 1.0))
        throw InputError("toy spec: intensity must lie strictly inside (0,1)");
    if (emotion < 0 || emotion >= kNumEmotions) throw InputError("toy spec: bad emotion id");
    if (min_phonemes < 1 || max_phonemes < min_phonemes)
        throw InputError("toy spec: bad phoneme count range");
    if (base_f0 < 80.0 || base_f0 > 400.0) throw InputError("toy spec: base_f0 out of range");
}

std::pair<dsp::Waveform, Utterance> synth_toy_utterance(const ToyUtteranceSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const ToyParams& tp = spec.params;
    const int hop = spec.hop_length;
    const int sr = spec.sample_rate;

    const int L = static_cast<int>(rng.uniform_int(spec.min_phonemes, spec.max_phonemes));
    std::vector<int> symbols(static_cast<size_t>(L));
    for (int j = 0; j < L; ++j)
        symbols[j] = static_cast<int>(rng.uniform_int(0, tp.n_phoneme_symbols - 1));

    // per-phoneme frame counts; emotion/intensity scale the base duration
    const double dur_factor = 1.0 + (tp.duration_coef[spec.emotion] - 1.0) * spec.intensity;
    std::vector<int> frames(static_cast<size_t>(L));
    int total_frames = 0;
    for (int j = 0; j < L; ++j) {
        const double ms = (60.0 + (symbols[j] % 8) * 10.0) * dur_factor;
        frames[j] = std::max(2, static_cast<int>(std::lround(ms / 1000.0 * sr / hop)));
        total_frames += frames[j];
    }

    // deterministic symbol-keyed pitch offsets plus a small seeded vibrato,
    // normalized so the frame-level contour std hits the target exactly
    const double target_std = tp.sigma_base_hz * (1.0 + tp.pitch_coef[spec.emotion] * spec.intensity);
    const double vib_phase = rng.uniform(0.0, 2.0 * kPi);
    const double vib_rate = rng.uniform(4.5, 6.5);
    std::vector<double> contour(static_cast<size_t>(total_frames));
    {
        int t = 0;
        for (int j = 0; j < L; ++j) {
            const double off = ((symbols[j] * 7) % 13) / 6.0 - 1.0;  // [-1, 1]
            for (int r = 0; r < frames[j]; ++r, ++t) {
                const double sec = static_cast<double>(t) * hop / sr;
                contour[t] = off + 0.2 * std::sin(2.0 * kPi * vib_rate * sec + vib_phase);
            }
        }
    }
    double mean = 0.0;
    for (double c : contour) mean += c;
    mean /= total_frames;
    double var = 0.0;
    for (double c : contour) var += (c - mean) * (c - mean);
    var /= total_frames;
    const double scale = target_std / std::max(std::sqrt(var), 1e-9);
    std::vector<double> f0_frame(static_cast<size_t>(total_frames));
    for (int t = 0; t < total_frames; ++t)
        f0_frame[t] = std::clamp(spec.base_f0 + (contour[t] - mean) * scale, 80.0, 500.0);

    // amplitude envelope: per-phoneme trapezoid scaled by a symbol-keyed level
    std::vector<double> env_frame(static_cast<size_t>(total_frames));
    {
        int t = 0;
        for (int j = 0; j < L; ++j) {
            const double amp = 0.7 + 0.3 * ((symbols[j] * 5) % 7) / 6.0;
            const int n = frames[j];
            for (int r = 0; r < n; ++r, ++t) {
                const double pos = (r + 0.5) / n;
                double trap = 1.0;
                if (pos < 0.25) trap = pos / 0.25;
                else if (pos > 0.75) trap = (1.0 - pos) / 0.25;
                env_frame[t] = amp * std::max(trap, 0.15);
            }
        }
    }

    // harmonic synthesis with phase continuity
    const int n_samples = total_frames * hop;
    std::vector<double> raw(static_cast<size_t>(n_samples));
    static const double kHarmAmp[5] = {1.0, 0.5, 0.33, 0.25, 0.2};
    double phase = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        const double tf = static_cast<double>(s) / hop;
        const int t0 = std::min(static_cast<int>(tf), total_frames - 1);
        const int t1 = std::min(t0 + 1, total_frames - 1);
        const double frac = tf - t0;
        const double f0 = f0_frame[t0] * (1.0 - frac) + f0_frame[t1] * frac;
        const double env = env_frame[t0] * (1.0 - frac) + env_frame[t1] * frac;
        phase += 2.0 * kPi * f0 / sr;
        double sig = 0.0;
        for (int h = 0; h < 5; ++h) sig += kHarmAmp[h] * std::sin((h + 1) * phase);
        raw[s] = env * sig;
    }

    // gain so that the peak frame RMS (hop-aligned windows) hits the target
    const double target_rms = tp.rms_base * (1.0 + tp.energy_coef[spec.emotion] * spec.intensity);
    double peak = 0.0;
    for (int t = 0; t < total_frames; ++t) {
        double acc = 0.0;
        for (int s = t * hop; s < (t + 1) * hop; ++s) acc += raw[s] * raw[s];
        peak = std::max(peak, std::sqrt(acc / hop));
    }
    const double gain = target_rms / std::max(peak, 1e-9);

    dsp::Waveform w;
    w.sample_rate = sr;
    w.id = spec.id;
    w.samples.resize(static_cast<size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s)
        w.samples[s] = std::clamp(raw[s] * gain, -1.0, 1.0);

    Utterance u;
    u.id = spec.id;
    u.phonemes = symbols;
    u.emotion = spec.emotion;
    u.speaker = spec.speaker;
    u.split = "train";
    u.vad = toy_vad(spec.emotion, spec.intensity);
    // frame grid has one extra frame (T = floor(len/hop) + 1); last phoneme absorbs it
    std::vector<int> durations = frames;
    durations.back() += 1;
    u.durations = durations;
    return {std::move(w), std::move(u)};
}

namespace {
// largest-remainder apportionment of n into the 300/30/20 ratio with a
// one-utterance floor for valid/test once the group is big enough
std::array<int, 3> split_counts(int n) {
    const double w[3] = {300.0 / 350.0, 30.0 / 350.0, 20.0 / 350.0};
    std::array<int, 3> c{};
    double rem[3];
    int used = 0;
    for (int i = 0; i < 3; ++i) {
        const double x = n * w[i];
        c[i] = static_cast<int>(std::floor(x));
        rem[i] = x - c[i];
        used += c[i];
    }
    for (int left = n - used; left > 0; --left) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (rem[i] > rem[best]) best = i;
        c[best] += 1;
        rem[best] = -1.0;
    }
    if (n >= 3) {
        for (int i : {1, 2})
            if (c[i] == 0) {
                c[i] = 1;
                c[0] -= 1;
            }
    }
    return c;
}
}  // namespace

Manifest synth_toy_corpus(const ToyCorpusSpec& spec, const std::string& out_dir) {
    fs::create_directories(out_dir);
    Manifest m;
    for (int i = 0; i < spec.params.n_phoneme_symbols; ++i)
        m.phoneme_inventory.push_back("p" + std::to_string(i));

    Rng master(spec.seed);
    int content = 0;
    for (double intensity : spec.intensities) {
        if (!(intensity > 0.0 && intensity < 1.0))
            throw InputError("toy corpus: intensity must lie strictly inside (0,1)");
        for (int emo = 0; emo < kNumEmotions; ++emo) {
            const auto counts = split_counts(spec.n_per_group);
            int k = 0;
            for (int j = 0; j < spec.n_per_group; ++j, ++content) {
                ToyUtteranceSpec us;
                us.emotion = emo;
                us.intensity = intensity;
                us.seed = Rng::splitmix(spec.seed ^ (0x9e37ULL + 1315423911ULL * content));
                us.sample_rate = spec.sample_rate;
                us.hop_length = spec.hop_length;
                us.params = spec.params;
                const int spk = content % std::max(1, spec.n_speakers);
                us.speaker = "spk" + std::to_string(spk);
                us.base_f0 = 180.0 + 40.0 * spk;
                std::ostringstream id;
                id << "u" << std::setw(4) << std::setfill('0') << content << "_"
                   << emotion_name(emo);
                us.id = id.str();
                auto [wav, utt] = synth_toy_utterance(us);
                utt.split = k < counts[0] ? "train" : (k < counts[0] + counts[1] ? "valid" : "test");
                ++k;
                const std::string wav_path = (fs::path(out_dir) / (utt.id + ".wav")).string();
                dsp::write_wav(wav_path, wav);
                utt.audio_path = wav_path;
                m.entries.push_back(std::move(utt));
            }
        }
    }
    (void)master;
    m.validate();
    write_manifest(m, (fs::path(out_dir) / "manifest.txt").string());
    return m;
}

FeatureSet::FeatureSet(const Manifest& manifest, const dsp::DspConfig& cfg)
    : manifest_(&manifest), cfg_(cfg) {
    const char* cache_env = std::getenv("EINET_CACHE");
    const std::string cache_dir = cache_env ? cache_env : "";
    if (!cache_dir.empty()) fs::create_directories(cache_dir);

    for (const auto& u : manifest.entries) {
        auto f = std::make_unique<UttFeatures>();
        f->id = u.id;
        f->utt = &u;
        f->wav = dsp::read_wav(u.audio_path);
        f->wav.id = u.id;
        if (f->wav.sample_rate != cfg.sample_rate)
            throw ConfigError("FeatureSet: sample rate mismatch for " + u.id);
        f->emotion = u.emotion;
        f->speaker_index = manifest.speaker_index(u.speaker);

        bool loaded = false;
        std::string cache_path;
        if (!cache_dir.empty()) {
            std::ostringstream key;
            key << cfg.sample_rate << "_" << cfg.n_fft << "_" << cfg.win_length << "_"
                << cfg.hop_length << "_" << cfg.n_mels << "_" << cfg.f_min << "_" << cfg.f_max;
            cache_path = (fs::path(cache_dir) / (u.id + "_" + key.str() + ".feat")).string();
            std::ifstream in(cache_path, std::ios::binary);
            if (in) {
                int32_t t = 0, nm = 0;
                in.read(reinterpret_cast<char*>(&t), 4);
                in.read(reinterpret_cast<char*>(&nm), 4);
                if (in && t > 0 && nm == cfg.n_mels) {
                    f->mel = Tensor({t, nm});
                    f->f0.resize(static_cast<size_t>(t));
                    f->voicing.resize(static_cast<size_t>(t));
                    f->rms.resize(static_cast<size_t>(t));
                    in.read(reinterpret_cast<char*>(f->mel.data.data()),
                            static_cast<std::streamsize>(f->mel.data.size() * 8));
                    in.read(reinterpret_cast<char*>(f->f0.data()), t * 8);
                    in.read(reinterpret_cast<char*>(f->voicing.data()), t * 4);
                    in.read(reinterpret_cast<char*>(f->rms.data()), t * 8);
                    loaded = static_cast<bool>(in);
                }
            }
        }
        if (!loaded) {
            auto mel = dsp::mel_spectrogram(f->wav, cfg);
            auto pitch = dsp::extract_f0(f->wav, cfg);
            auto energy = dsp::energy_track(f->wav, cfg);
            f->mel = std::move(mel.frames);
            f->f0 = std::move(pitch.f0_hz);
            f->voicing = std::move(pitch.voicing);
            f->rms = std::move(energy.rms);
            if (!cache_path.empty()) {
                std::ofstream out(cache_path, std::ios::binary);
                const int32_t t = f->mel.rows(), nm = f->mel.cols();
                out.write(reinterpret_cast<const char*>(&t), 4);
                out.write(reinterpret_cast<const char*>(&nm), 4);
                out.write(reinterpret_cast<const char*>(f->mel.data.data()),
                          static_cast<std::streamsize>(f->mel.data.size() * 8));
                out.write(reinterpret_cast<const char*>(f->f0.data()), t * 8);
                out.write(reinterpret_cast<const char*>(f->voicing.data()), t * 4);
                out.write(reinterpret_cast<const char*>(f->rms.data()), t * 8);
            }
        }
        features_.emplace(u.id, std::move(f));
    }
}

const UttFeatures& FeatureSet::get(const std::string& id) const {
    auto it = features_.find(id);
    if (it == features_.end()) throw ContractError("FeatureSet: unknown id " + id);
    return *it->second;
}

std::vector<Batch> make_batches(const FeatureSet& features, const std::string& split,
                                int batch_size, uint64_t seed) {
    if (batch_size < 1) throw ConfigError("make_batches: batch_size must be >= 1");
    auto entries = features.manifest().split_entries(split);
    if (entries.empty()) throw InputError("make_batches: split '" + split + "' is empty");

    std::vector<int> order(entries.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(seed);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);

    std::vector<Batch> batches;
    for (size_t start = 0; start < order.size(); start += batch_size) {
        Batch b;
        const size_t end = std::min(order.size(), start + batch_size);
        for (size_t i = start; i < end; ++i)
            b.items.push_back(&features.get(entries[static_cast<size_t>(order[i])]->id));

        const int B = static_cast<int>(b.items.size());
        for (const auto* it : b.items) {
            b.max_frames = std::max(b.max_frames, it->num_frames());
            b.max_phonemes = std::max(b.max_phonemes, static_cast<int>(it->utt->phonemes.size()));
        }
        const int n_mels = b.items[0]->mel.cols();
        b.mel = Tensor({B * b.max_frames, n_mels});
        b.frame_mask = Tensor({B, b.max_frames});
        b.phoneme_ids.assign(static_cast<size_t>(B) * b.max_phonemes, 0);
        b.phoneme_mask.assign(static_cast<size_t>(B) * b.max_phonemes, 0);
        for (int i = 0; i < B; ++i) {
            const auto* it = b.items[static_cast<size_t>(i)];
            const int T = it->num_frames();
            const int L = static_cast<int>(it->utt->phonemes.size());
            b.frame_lengths.push_back(T);
            b.phoneme_lengths.push_back(L);
            b.emotion_ids.push_back(it->emotion);
            b.speaker_ids.push_back(it->speaker_index);
            b.vads.push_back(it->utt->vad);
            for (int t = 0; t < T; ++t) {
                b.frame_mask.at(i, t) = 1.0;
                for (int c = 0; c < n_mels; ++c)
                    b.mel.at(i * b.max_frames + t, c) = it->mel.at(t, c);
            }
            for (int l = 0; l < L; ++l) {
                b.phoneme_ids[static_cast<size_t>(i) * b.max_phonemes + l] = it->utt->phonemes[l];
                b.phoneme_mask[static_cast<size_t>(i) * b.max_phonemes + l] = 1;
            }
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace einet::corpus
