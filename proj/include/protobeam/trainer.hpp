#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "protobeam/encoder.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/protonet.hpp"

namespace protobeam {

// Trained artifact: encoder weights plus the preprocessing state needed to
// reproduce training-time inputs at deployment.
struct Model {
    EncoderWeights weights;
    bool data_normalization = true;
    std::optional<MinMaxStats> minmax;
    bool prototype_normalization = true;

    const MinMaxStats* stats() const {
        return (data_normalization && minmax.has_value()) ? &*minmax : nullptr;
    }
};

struct AdamWState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t t = 0;
    std::vector<std::vector<double>> m, v;

    void init_like(const EncoderWeights& w) {
        t = 0;
        m.resize(w.params.size());
        v.resize(w.params.size());
        for (std::size_t i = 0; i < w.params.size(); ++i) {
            m[i].assign(w.params[i].v.size(), 0.0);
            v[i].assign(w.params[i].v.size(), 0.0);
        }
    }
};

// Adam with decoupled weight decay.
inline void adamw_step(EncoderWeights& w, const Grads& g, AdamWState& st, double lr,
                       double weight_decay) {
    st.t += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (std::size_t p = 0; p < w.params.size(); ++p) {
        if (!w.params[p].trainable)
            continue;
        auto& wp = w.params[p].v;
        const auto& gp = g.g[p];
        auto& mp = st.m[p];
        auto& vp = st.v[p];
        for (std::size_t i = 0; i < wp.size(); ++i) {
            mp[i] = st.beta1 * mp[i] + (1.0 - st.beta1) * gp[i];
            vp[i] = st.beta2 * vp[i] + (1.0 - st.beta2) * gp[i] * gp[i];
            const double mhat = mp[i] / bc1;
            const double vhat = vp[i] / bc2;
            wp[i] -= lr * weight_decay * wp[i];
            wp[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

struct TrainingLog {
    struct Row {
        int episode = 0;
        double loss = 0.0;
        double lr = 0.0;
        double val_accuracy = 0.0;
        bool has_val = false;
    };
    std::vector<Row> rows;
    std::uint64_t seed = 0;
    double best_val_accuracy = -1.0;
    int best_episode = 0;
};

// Mean episodic accuracy in inference mode: prototypes from each sampled
// episode's support set, queries classified against them.
inline double episodic_accuracy(const Model& model, const Subset& data, const TrainConfig& cfg,
                                int episodes, std::uint64_t seed) {
    if (episodes < 1)
        throw ArgumentError("episodic_accuracy: episodes must be >= 1");
    Rng rng(mix_seed(seed, 0xeba1ULL));
    long long correct = 0, total = 0;
    for (int e = 0; e < episodes; ++e) {
        const Episode ep = sample_episode(data, cfg, rng);
        std::vector<const IQBlock*> support_blocks, query_blocks;
        for (const auto& v : ep.support_idx)
            for (int idx : v)
                support_blocks.push_back(&ep.handle->blocks[static_cast<std::size_t>(idx)].block);
        for (const auto& v : ep.query_idx)
            for (int idx : v)
                query_blocks.push_back(&ep.handle->blocks[static_cast<std::size_t>(idx)].block);
        const Matrix s_emb = encode_batch(model.weights, support_blocks, model.stats());
        const Matrix q_emb = encode_batch(model.weights, query_blocks, model.stats());

        std::map<int, Matrix> by_class;
        for (int c = 0; c < static_cast<int>(ep.classes.size()); ++c) {
            Matrix m(cfg.n_shot, s_emb.cols);
            for (int s = 0; s < cfg.n_shot; ++s)
                std::copy(s_emb.row(c * cfg.n_shot + s), s_emb.row(c * cfg.n_shot + s) + s_emb.cols,
                          m.row(s));
            by_class.emplace(ep.classes[static_cast<std::size_t>(c)], std::move(m));
        }
        const PrototypeSet protos =
            compute_prototypes(by_class, model.prototype_normalization);
        for (int c = 0; c < static_cast<int>(ep.classes.size()); ++c) {
            for (int q = 0; q < cfg.n_query; ++q) {
                const int row = c * cfg.n_query + q;
                Embedding emb(q_emb.row(row), q_emb.row(row) + q_emb.cols);
                const ClassifyResult res = classify(emb, protos);
                correct += (res.predicted == ep.classes[static_cast<std::size_t>(c)]) ? 1 : 0;
                ++total;
            }
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

// Episodic training loop. Holds every piece of state a checkpoint needs, so
// a resumed run continues the episode counter, optimizer moments and random
// streams exactly where they stopped.
class Trainer {
public:
    Trainer(TrainConfig cfg, EncoderConfig enc_cfg)
        : cfg_(cfg), enc_cfg_(enc_cfg), sample_rng_(mix_seed(cfg.seed, 0x5a3fULL)),
          augment_rng_(mix_seed(cfg.seed, 0xa06dULL)) {
        cfg.validate();
        enc_cfg.validate();
        weights_ = encoder_init(enc_cfg, mix_seed(cfg.seed, 0x1217ULL));
        opt_.init_like(weights_);
        lr_ = cfg.learning_rate;
        log_.seed = cfg.seed;
    }

    // One training episode; returns false once the stop rule fires.
    bool step(const Subset& train_data, const Subset& val_data) {
        if (stopped_)
            return false;
        if (episode_ >= cfg_.max_episodes) {
            stopped_ = true;
            return false;
        }
        ensure_stats(train_data);

        const Episode ep = sample_episode(train_data, cfg_, sample_rng_);
        if (grads_.g.empty())
            grads_.init_like(weights_);
        grads_.zero();
        Rng* aug = cfg_.augment.enabled ? &augment_rng_ : nullptr;
        const double loss =
            episode_backward(ep, weights_, cfg_, stats(), aug, grads_, true);
        if (!std::isfinite(loss)) {
            double norm = 0.0;
            for (const auto& p : weights_.params)
                if (p.trainable)
                    for (double x : p.v)
                        norm += x * x;
            throw NumericError("train: non-finite loss at episode " +
                               std::to_string(episode_ + 1) + " (seed " +
                               std::to_string(cfg_.seed) + ", parameter norm " +
                               std::to_string(std::sqrt(norm)) + ")");
        }
        adamw_step(weights_, grads_, opt_, lr_, cfg_.weight_decay);
        episode_ += 1;

        TrainingLog::Row row;
        row.episode = episode_;
        row.loss = loss;
        row.lr = lr_;

        if (episode_ % cfg_.val_interval == 0) {
            const double acc = validate(val_data);
            row.val_accuracy = acc;
            row.has_val = true;
            if (acc > best_val_) {
                best_val_ = acc;
                best_episode_ = episode_;
                best_weights_ = weights_;
                episodes_since_best_ = 0;
                decays_since_best_ = 0;
                log_.best_val_accuracy = best_val_;
                log_.best_episode = best_episode_;
            } else {
                episodes_since_best_ += cfg_.val_interval;
                if (episodes_since_best_ >= cfg_.patience_episodes) {
                    if (decays_since_best_ >= 2) {
                        stopped_ = true;
                    } else {
                        lr_ *= cfg_.lr_decay_factor;
                        decays_since_best_ += 1;
                        episodes_since_best_ = 0;
                    }
                }
            }
        }
        log_.rows.push_back(row);
        if (episode_ >= cfg_.max_episodes)
            stopped_ = true;
        return !stopped_;
    }

    void run(const Subset& train_data, const Subset& val_data) {
        if (cfg_.max_episodes == 0) {
            ensure_stats(train_data);
            stopped_ = true;
            return;
        }
        while (step(train_data, val_data)) {
        }
    }

    // Best-validation weights (falls back to the final weights when no
    // validation pass ever ran).
    Model model() const {
        Model m;
        m.weights = best_episode_ > 0 ? best_weights_ : weights_;
        m.data_normalization = cfg_.data_normalization;
        if (cfg_.data_normalization && stats_fitted_)
            m.minmax = stats_;
        m.prototype_normalization = cfg_.prototype_normalization;
        return m;
    }

    double validate(const Subset& val_data) const {
        Model m;
        m.weights = weights_;
        m.data_normalization = cfg_.data_normalization;
        if (stats_fitted_)
            m.minmax = stats_;
        m.prototype_normalization = cfg_.prototype_normalization;
        return episodic_accuracy(m, val_data, cfg_, cfg_.val_episodes,
                                 mix_seed(cfg_.seed, 0x7a11ULL));
    }

    const TrainingLog& log() const { return log_; }
    const TrainConfig& config() const { return cfg_; }
    const EncoderConfig& encoder_config() const { return enc_cfg_; }
    int episode() const { return episode_; }
    bool finished() const { return stopped_; }

    const MinMaxStats* stats() const {
        return (cfg_.data_normalization && stats_fitted_) ? &stats_ : nullptr;
    }

    // Checkpoint access (serialization lives in serialize.hpp).
    TrainConfig cfg_;
    EncoderConfig enc_cfg_;
    EncoderWeights weights_;
    EncoderWeights best_weights_;
    AdamWState opt_;
    Grads grads_;
    Rng sample_rng_;
    Rng augment_rng_;
    MinMaxStats stats_;
    bool stats_fitted_ = false;
    double lr_ = 0.0;
    int episode_ = 0;
    double best_val_ = -1.0;
    int best_episode_ = 0;
    int episodes_since_best_ = 0;
    int decays_since_best_ = 0;
    bool stopped_ = false;
    TrainingLog log_;

private:
    void ensure_stats(const Subset& train_data) {
        if (cfg_.data_normalization && !stats_fitted_) {
            stats_ = fit_minmax(train_data);
            stats_fitted_ = true;
        }
    }
};

struct TrainResult {
    Model model;
    TrainingLog log;
};

// Algorithm entry point: episodic loop with AdamW updates, periodic episodic
// validation, learning-rate decay on patience expiry and stop after two
// decays without improvement (or at max_episodes).
inline TrainResult train(const Subset& train_data, const Subset& val_data, const TrainConfig& cfg,
                         const EncoderConfig& enc_cfg = {}) {
    cfg.validate();
    Trainer trainer(cfg, enc_cfg);
    trainer.run(train_data, val_data);
    return {trainer.model(), trainer.log()};
}

inline TrainResult train(const DatasetHandle& train_data, const TrainConfig& cfg,
                         const DatasetHandle& val_data, const EncoderConfig& enc_cfg = {}) {
    return train(full_subset(train_data), full_subset(val_data), cfg, enc_cfg);
}

} // namespace protobeam
