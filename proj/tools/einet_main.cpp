// Copyright 2026 EINet Authors
// Command-line entry point: synth-corpus, train, convert, eval, plot-tracks.
//
// Licensed under the Apache License, Version 2.0

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "einet/config.hpp"
#include "einet/corpus.hpp"
#include "einet/metrics.hpp"
#include "einet/model.hpp"
#include "einet/training.hpp"

namespace fs = std::filesystem;
using namespace einet;

namespace {

config::Config resolve_config(const std::string& profile, const std::string& config_path,
                              const std::vector<std::string>& overrides) {
    config::Config cfg = config::Config::defaults(profile);
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& ov : overrides) {
        const size_t eq = ov.find('=');
        if (eq == std::string::npos)
            throw UsageError("override must look like key=value: " + ov);
        try {
            cfg.set(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }
    return cfg;
}

void echo_config(const config::Config& cfg) {
    std::cout << "# resolved configuration\n";
    for (const auto& line : cfg.lines()) std::cout << line << "\n";
    std::cout << std::flush;
}

uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash file: " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
    return h;
}

struct LoadedModel {
    nn::ParamStore store;
    std::unique_ptr<model::EinetModel> model;
    config::Config cfg;
    corpus::Manifest manifest;
};

std::unique_ptr<LoadedModel> load_model(const std::string& ckpt_path,
                                        const std::string& manifest_path) {
    auto lm = std::make_unique<LoadedModel>();
    const auto meta = training::peek_checkpoint(ckpt_path);
    lm->cfg = meta.cfg;
    lm->manifest = corpus::load_manifest(manifest_path);
    Rng rng(static_cast<uint64_t>(lm->cfg.get_int("run.seed")));
    const int n_phon = static_cast<int>(lm->manifest.phoneme_inventory.size());
    const int n_spk = static_cast<int>(lm->manifest.speakers().size());
    lm->model = std::make_unique<model::EinetModel>(
        lm->store, model::ModelConfig::from_config(lm->cfg, n_phon, n_spk), rng);
    training::load_checkpoint(ckpt_path, lm->store, /*create_params=*/false);
    return lm;
}

int cmd_synth_corpus(int n_per_emotion, const std::string& intensities_csv, uint64_t seed,
                     const std::string& out_dir, bool force, int speakers) {
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force)
        throw UsageError("output directory exists and is not empty (use --force): " + out_dir);
    corpus::ToyCorpusSpec spec;
    spec.n_per_group = n_per_emotion;
    spec.intensities.clear();
    for (const auto& tok : split(intensities_csv, ','))
        spec.intensities.push_back(std::stod(trim(tok)));
    spec.seed = seed;
    spec.n_speakers = speakers;
    const auto manifest = corpus::synth_toy_corpus(spec, out_dir);
    std::cout << "wrote " << manifest.entries.size() << " utterances to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& profile, const std::string& config_path,
              const std::vector<std::string>& overrides, const std::string& manifest_path,
              const std::string& out_dir, const std::string& resume_path) {
    config::Config cfg = resolve_config(profile, config_path, overrides);
    echo_config(cfg);
    const auto manifest = corpus::load_manifest(manifest_path);
    training::Trainer trainer(cfg, manifest, out_dir);
    if (!resume_path.empty()) trainer.resume(resume_path);
    {
        std::ofstream rc(fs::path(out_dir) / "config.resolved");
        rc << cfg.text();
    }
    trainer.train();
    std::cout << "training complete after epoch " << trainer.current_epoch() << "\n";
    return 0;
}

int cmd_convert(const std::string& ckpt, const std::string& manifest_path,
                const std::string& source_id, const std::string& wav_path,
                const std::string& phonemes_csv, const std::string& emotion_name_str,
                double intensity, uint64_t seed, double noise_scale, bool sample_residual,
                const std::string& out_path) {
    // usage errors are checked before the model is loaded
    if (!(intensity > 0.0 && intensity < 1.0))
        throw UsageError("--intensity must lie strictly inside (0,1)");
    const int emo = corpus::emotion_id(emotion_name_str);
    if (emo < 0) throw UsageError("unknown emotion: " + emotion_name_str);

    auto lm = load_model(ckpt, manifest_path);
    std::vector<int> phonemes;
    int speaker_index = 0;
    if (!source_id.empty()) {
        const corpus::Utterance* u = lm->manifest.find(source_id);
        if (!u) throw InputError("source utterance not found in manifest: " + source_id);
        phonemes = u->phonemes;
        speaker_index = lm->manifest.speaker_index(u->speaker);
    } else {
        if (wav_path.empty() || phonemes_csv.empty())
            throw UsageError("need either --source-id or both --wav and --phonemes");
        for (const auto& tok : split(phonemes_csv, ','))
            phonemes.push_back(std::stoi(trim(tok)));
    }

    model::ConvertRequest req;
    req.target_emotion = emo;
    req.intensity = intensity;
    req.seed = seed;
    req.noise_scale = noise_scale;
    req.sample_residual = sample_residual;
    const auto res = lm->model->convert(phonemes, speaker_index, req);
    dsp::write_wav(out_path, res.wav);

    std::ofstream side(out_path + ".meta");
    side << "emotion=" << emotion_name_str << "\n"
         << "intensity=" << intensity << "\n"
         << "seed=" << seed << "\n"
         << "noise_scale=" << noise_scale << "\n"
         << "checkpoint_hash=" << std::hex << file_hash(ckpt) << std::dec << "\n"
         << "vad=" << res.vad.valence << " " << res.vad.arousal << " " << res.vad.dominance
         << "\n"
         << "diverged=" << (res.mapper_diverged ? 1 : 0) << "\n";
    std::cout << "wrote " << out_path << " (" << res.wav.samples.size() << " samples)\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest_path,
             const std::string& metrics_csv, const std::string& pairs_csv,
             const std::string& out_dir, const std::string& acc_cls_cmd) {
    for (const auto& m : split(metrics_csv, ',')) {
        const std::string t = trim(m);
        if (t != "mcd" && t != "rmse_f0" && t != "ddur" && t != "msd" && t != "acc_cls")
            throw UsageError("unknown metric name: " + t);
    }
    auto lm = load_model(ckpt, manifest_path);
    const auto dspc = training::dsp_config_from(lm->cfg);
    corpus::FeatureSet features(lm->manifest, dspc);
    const auto test_items = lm->manifest.split_entries("test");
    if (test_items.empty()) throw InputError("eval: test split is empty");
    fs::create_directories(out_dir);

    const bool want_mcd = metrics_csv.find("mcd") != std::string::npos;
    const bool want_rmse = metrics_csv.find("rmse_f0") != std::string::npos;
    const bool want_ddur = metrics_csv.find("ddur") != std::string::npos;
    const bool want_msd = metrics_csv.find("msd") != std::string::npos;
    const bool want_acc = metrics_csv.find("acc_cls") != std::string::npos;

    std::ofstream report(fs::path(out_dir) / "eval_report.txt");
    std::ofstream kv(fs::path(out_dir) / "eval_report.kv");
    report << "pair\tmcd\trmse_f0\tddur\tmsd\tn\n";

    const std::vector<double> sweep = {0.1, 0.3, 0.5, 0.7, 0.9};
    for (const auto& pair_name : split(pairs_csv, ',')) {
        const auto tags = split(trim(pair_name), '-');
        if (tags.size() != 2) throw UsageError("pair must look like Neu-Hap: " + pair_name);
        auto tag2emo = [](const std::string& t) {
            if (t == "Neu") return 0;
            if (t == "Ang") return 1;
            if (t == "Hap") return 2;
            if (t == "Sad") return 3;
            if (t == "Sur") return 4;
            throw UsageError("unknown pair tag: " + t);
        };
        const int src_emo = tag2emo(tags[0]);
        const int dst_emo = tag2emo(tags[1]);

        double mcd_acc = 0.0, rmse_acc = 0.0;
        int mcd_n = 0, rmse_n = 0;
        std::vector<double> ref_durs, hyp_durs;
        std::vector<std::vector<double>> msd_samples;
        std::vector<std::tuple<std::string, std::string, std::string>> acc_items;
        int produced = 0;

        for (const auto* u : test_items) {
            if (u->emotion != src_emo) continue;
            const int spk = lm->manifest.speaker_index(u->speaker);
            for (double ei : sweep) {
                model::ConvertRequest req;
                req.target_emotion = dst_emo;
                req.intensity = ei;
                req.seed = fnv1a(u->id.data(), u->id.size());
                const auto res = lm->model->convert(u->phonemes, spk, req);
                const auto mel_h = dsp::mel_spectrogram(res.wav, dspc);
                const auto pit_h = dsp::extract_f0(res.wav, dspc);
                const auto ene_h = dsp::energy_track(res.wav, dspc);
                if (want_msd) msd_samples.push_back(metrics::msd_features(mel_h, pit_h, ene_h));
                if (ei == 0.5) {
                    ++produced;
                    const std::string out_wav =
                        (fs::path(out_dir) / (u->id + "_to_" + corpus::emotion_name(dst_emo) +
                                              ".wav")).string();
                    dsp::write_wav(out_wav, res.wav);
                    if (want_acc)
                        acc_items.emplace_back(u->id, out_wav, corpus::emotion_name(dst_emo));
                    // reference: same content id rendered in the target emotion
                    const std::string content = split(u->id, '_')[0];
                    const corpus::Utterance* ref = nullptr;
                    for (const auto& cand : lm->manifest.entries)
                        if (cand.emotion == dst_emo &&
                            split(cand.id, '_')[0] == content) {
                            ref = &cand;
                            break;
                        }
                    if (ref) {
                        const auto& rf = features.get(ref->id);
                        dsp::MelSpectrogram mel_r;
                        mel_r.frames = rf.mel;
                        mel_r.n_mels = dspc.n_mels;
                        if (want_mcd) {
                            mcd_acc += metrics::mcd(dsp::mel_cepstra(mel_r),
                                                    dsp::mel_cepstra(mel_h));
                            ++mcd_n;
                        }
                        if (want_rmse) {
                            dsp::PitchTrack pt_r;
                            pt_r.f0_hz = rf.f0;
                            pt_r.voicing = rf.voicing;
                            const auto r =
                                metrics::rmse_f0(pt_r, pit_h, rf.mel, mel_h.frames);
                            if (r) {
                                rmse_acc += *r;
                                ++rmse_n;
                            }
                        }
                        if (want_ddur) {
                            ref_durs.push_back(rf.wav.duration_seconds());
                            hyp_durs.push_back(res.wav.duration_seconds());
                        }
                    }
                }
            }
        }
        if (produced == 0) continue;
        const double pair_mcd = mcd_n ? mcd_acc / mcd_n : 0.0;
        const double pair_rmse = rmse_n ? rmse_acc / rmse_n : 0.0;
        const double pair_ddur =
            (want_ddur && !ref_durs.empty()) ? metrics::ddur(ref_durs, hyp_durs) : 0.0;
        const double pair_msd = (want_msd && msd_samples.size() > 1) ? metrics::msd(msd_samples)
                                                                     : 0.0;
        report << pair_name << "\t" << pair_mcd << "\t" << pair_rmse << "\t" << pair_ddur << "\t"
               << pair_msd << "\t" << produced << "\n";
        kv << "pair." << pair_name << ".mcd=" << pair_mcd << "\n";
        kv << "pair." << pair_name << ".rmse_f0=" << pair_rmse << "\n";
        kv << "pair." << pair_name << ".rmse_f0_domain=hz\n";
        kv << "pair." << pair_name << ".ddur=" << pair_ddur << "\n";
        kv << "pair." << pair_name << ".msd=" << pair_msd << "\n";
        kv << "pair." << pair_name << ".n=" << produced << "\n";
        if (want_acc && !acc_cls_cmd.empty()) {
            const double acc = metrics::run_acc_cls_hook(acc_cls_cmd, acc_items);
            kv << "pair." << pair_name << ".acc_cls=" << acc << "\n";
        }
    }
    std::cout << "eval report written to " << out_dir << "\n";
    return 0;
}

int cmd_plot_tracks(const std::vector<std::string>& wavs, const std::string& out_dir,
                    bool dump_mel, bool gnuplot, const std::string& profile) {
    fs::create_directories(out_dir);
    const config::Config cfg = config::Config::defaults(profile);
    const auto dspc = training::dsp_config_from(cfg);
    int failures = 0;
    for (const auto& wav_path : wavs) {
        try {
            const auto w = dsp::read_wav(wav_path);
            const std::string base = fs::path(wav_path).stem().string();
            const std::string out = (fs::path(out_dir) / (base + ".tracks")).string();
            metrics::emit_tracks(w, dspc, out, dump_mel);
            if (gnuplot) {
                std::ofstream gp(fs::path(out_dir) / (base + ".gp"));
                gp << "set title '" << base << "'\n"
                   << "set multiplot layout 2,1\n"
                   << "plot '" << out << "' using 1:2 with lines title 'f0 (hz)'\n"
                   << "plot '" << out << "' using 1:4 with lines title 'rms'\n"
                   << "unset multiplot\n";
            }
            std::cout << "wrote " << out << "\n";
        } catch (const std::exception& e) {
            std::cerr << "error: " << wav_path << ": " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == static_cast<int>(wavs.size()) && !wavs.empty() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"einet: emotional voice conversion with continuous intensity control"};
    app.require_subcommand(1);

    // synth-corpus
    auto* sc = app.add_subcommand("synth-corpus", "generate the synthetic toy corpus");
    int sc_n = 10, sc_speakers = 1;
    std::string sc_intensities = "0.2,0.5,0.8", sc_out;
    uint64_t sc_seed = 7;
    bool sc_force = false;
    sc->add_option("--n-per-emotion", sc_n, "utterances per (emotion, intensity) group");
    sc->add_option("--intensities", sc_intensities, "comma-separated intensities in (0,1)");
    sc->add_option("--seed", sc_seed, "corpus seed");
    sc->add_option("--out-dir", sc_out, "output directory")->required();
    sc->add_option("--speakers", sc_speakers, "number of synthetic speakers");
    sc->add_flag("--force", sc_force, "write into a non-empty directory");

    // train
    auto* tr = app.add_subcommand("train", "train on a manifest");
    std::string tr_profile = "tiny", tr_config, tr_manifest, tr_out = "runs/run0", tr_resume;
    std::vector<std::string> tr_set;
    tr->add_option("--profile", tr_profile, "config profile: tiny or desk");
    tr->add_option("--config", tr_config, "config file (key=value lines)");
    tr->add_option("--set", tr_set, "override, key=value (repeatable)");
    tr->add_option("--manifest", tr_manifest, "manifest path")->required();
    tr->add_option("--out-dir", tr_out, "run directory");
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");

    // convert
    auto* cv = app.add_subcommand("convert", "convert an utterance to a target emotion");
    std::string cv_ckpt, cv_manifest, cv_source, cv_wav, cv_phonemes, cv_emotion = "happy",
                cv_out = "out.wav";
    double cv_intensity = 0.5, cv_noise = 0.0;
    uint64_t cv_seed = 0;
    bool cv_residual = false;
    cv->add_option("--checkpoint", cv_ckpt, "trained checkpoint")->required();
    cv->add_option("--manifest", cv_manifest, "manifest path")->required();
    cv->add_option("--source-id", cv_source, "source utterance id from the manifest");
    cv->add_option("--wav", cv_wav, "source wav (with --phonemes)");
    cv->add_option("--phonemes", cv_phonemes, "comma-separated phoneme ids");
    cv->add_option("--emotion", cv_emotion, "target emotion name");
    cv->add_option("--intensity", cv_intensity, "target intensity, strictly inside (0,1)");
    cv->add_option("--seed", cv_seed, "sampling seed");
    cv->add_option("--noise-scale", cv_noise, "prior sampling temperature (0 = deterministic)");
    cv->add_flag("--sample-residual", cv_residual, "sample the non-intensity flow coordinates");
    cv->add_option("--out", cv_out, "output wav path");

    // eval
    auto* ev = app.add_subcommand("eval", "objective metrics over the test split");
    std::string ev_ckpt, ev_manifest, ev_metrics = "mcd,rmse_f0,ddur,msd",
                ev_pairs = "Neu-Ang,Neu-Hap,Neu-Sad,Neu-Sur", ev_out = "eval_out", ev_acc_cmd;
    ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint")->required();
    ev->add_option("--manifest", ev_manifest, "manifest path")->required();
    ev->add_option("--metrics", ev_metrics, "comma-separated metric names");
    ev->add_option("--pairs", ev_pairs, "conversion pairs, e.g. Neu-Hap");
    ev->add_option("--out-dir", ev_out, "report directory");
    ev->add_option("--acc-cls-cmd", ev_acc_cmd, "external classifier command");

    // plot-tracks
    auto* pt = app.add_subcommand("plot-tracks", "emit pitch/energy track files");
    std::vector<std::string> pt_wavs;
    std::string pt_out = "tracks_out", pt_profile = "desk";
    bool pt_mel = false, pt_gnuplot = false;
    pt->add_option("wavs", pt_wavs, "input wav files")->required();
    pt->add_option("--out-dir", pt_out, "output directory");
    pt->add_option("--profile", pt_profile, "dsp profile for framing");
    pt->add_flag("--mel", pt_mel, "also dump the mel matrix");
    pt->add_flag("--gnuplot", pt_gnuplot, "write a gnuplot script next to each track file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (sc->parsed())
            return cmd_synth_corpus(sc_n, sc_intensities, sc_seed, sc_out, sc_force, sc_speakers);
        if (tr->parsed())
            return cmd_train(tr_profile, tr_config, tr_set, tr_manifest, tr_out, tr_resume);
        if (cv->parsed())
            return cmd_convert(cv_ckpt, cv_manifest, cv_source, cv_wav, cv_phonemes, cv_emotion,
                               cv_intensity, cv_seed, cv_noise, cv_residual, cv_out);
        if (ev->parsed())
            return cmd_eval(ev_ckpt, ev_manifest, ev_metrics, ev_pairs, ev_out, ev_acc_cmd);
        if (pt->parsed()) return cmd_plot_tracks(pt_wavs, pt_out, pt_mel, pt_gnuplot, pt_profile);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
