// Copyright 2026 EINet Authors
// Loss assembly, AdamW, the alternating training loop, and checkpointing.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "einet/config.hpp"
#include "einet/corpus.hpp"
#include "einet/model.hpp"

namespace einet::training {

struct LossReport {
    double l_cls = 0.0;
    double l_fm = 0.0;
    double l_adv_g = 0.0;
    double l_f0 = 0.0;
    double l_dur = 0.0;
    double l_im = 0.0;
    double l_kl = 0.0;
    double total = 0.0;
    double l_adv_d = 0.0;

    bool all_finite() const;
    void add(const LossReport& o);
    void scale(double k);
    std::string to_pairs() const;  // "l_cls=... l_fm=... ..."
};

struct LossWeights {
    double w_cls = 1.0, w_fm = 1.0, w_adv = 1.0, w_f0 = 1.0, w_dur = 1.0, w_im = 1.0;
    double kl_weight = 1.0, kl_floor = 0.0;
    static LossWeights from_config(const config::Config& c);
};

// generator total per the final-loss sum; components arrive already weighted
double total_generator_loss(const LossReport& r);

// least-squares adversarial objective for the discriminator
// mean((real - 1)^2) + mean(fake^2), summed over scales
ad::Var discriminator_loss(ad::Graph& g, const std::vector<ad::Var>& real_scores,
                           const std::vector<ad::Var>& fake_scores);

double learning_rate(double lr_init, double decay, int epoch);

class AdamW {
public:
    AdamW(double beta1, double beta2, double eps, double weight_decay)
        : beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

    // updates every param matched by the predicate, then zeroes its grad
    void step(nn::ParamStore& store, double lr,
              const std::function<bool(const std::string&)>& match);
    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }

private:
    double beta1_, beta2_, eps_, wd_;
    int64_t t_ = 0;
};

struct Checkpoint {
    config::Config cfg;
    int epoch = 0;
    std::string rng_state;
    int64_t adam_g_steps = 0;
    int64_t adam_d_steps = 0;
};

void save_checkpoint(const std::string& path, const nn::ParamStore& store, const Checkpoint& meta);
Checkpoint load_checkpoint(const std::string& path, nn::ParamStore& store,
                           bool create_params = false);
// header-only read (config, epoch) without параметры
Checkpoint peek_checkpoint(const std::string& path);

class Trainer {
public:
    Trainer(const config::Config& cfg, const corpus::Manifest& manifest,
            const std::string& out_dir);

    // resume from a checkpoint; refuses when the stored config differs
    void resume(const std::string& checkpoint_path);

    void train();  // runs the configured number of epochs from the current one

    const nn::ParamStore& store() const { return store_; }
    nn::ParamStore& store() { return store_; }
    const model::EinetModel& model() const { return *model_; }
    const std::vector<std::string>& metric_lines() const { return metric_lines_; }
    int current_epoch() const { return epoch_; }

    // one generator+discriminator update over a batch; exposed for tests
    LossReport train_batch(const corpus::Batch& batch, int epoch, int batch_index, double lr);
    LossReport eval_item(const corpus::UttFeatures& f, uint64_t seed);

    struct ItemPlan;  // per-item derived seeds
    struct ItemStateOpaque {
        virtual ~ItemStateOpaque() = default;
    };
    // single-graph convenience wrapper used by gradient-check tests
    LossReport generator_losses_item(ad::Graph& g, nn::Binder& bind_gen,
                                     const corpus::UttFeatures& f, const ItemPlan& plan,
                                     double gamma, double beta, ad::Var& total_out);
    ItemPlan make_plan(int epoch, int batch_index, int item_index) const;

private:
    LossReport forward_item(ad::Graph& g, nn::Binder& bind, const corpus::UttFeatures& f,
                            const ItemPlan& plan, double beta, ItemStateOpaque& st_out);
    void finish_item_losses(ad::Graph& g, ItemStateOpaque& st, double gamma, double beta,
                            LossReport& r, ad::Var& total_out);

    config::Config cfg_;
    const corpus::Manifest* manifest_;
    std::string out_dir_;
    dsp::DspConfig dsp_cfg_;
    LossWeights weights_;
    nn::ParamStore store_;
    std::unique_ptr<model::EinetModel> model_;
    std::unique_ptr<corpus::FeatureSet> features_;
    std::unique_ptr<AdamW> opt_g_, opt_d_;
    emotion::EvaluatorProvider provider_;
    Rng rng_;
    int epoch_ = 0;
    std::vector<std::string> metric_lines_;

    uint64_t derive_seed(uint64_t a, uint64_t b, uint64_t c) const;
    void write_metrics_line(const std::string& line);
};

dsp::DspConfig dsp_config_from(const config::Config& c);

}  // namespace einet::training
