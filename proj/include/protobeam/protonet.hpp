#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "protobeam/dataset.hpp"
#include "protobeam/embedding.hpp"
#include "protobeam/encoder.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/preprocess.hpp"
#include "protobeam/rng.hpp"

namespace protobeam {

// One few-shot task: n_way classes with disjoint support and query sets,
// referenced by block index into the source handle.
struct Episode {
    const DatasetHandle* handle = nullptr;
    std::vector<int> classes;                  // distinct beam labels
    std::vector<std::vector<int>> support_idx; // parallel to classes, n_shot each
    std::vector<std::vector<int>> query_idx;   // parallel to classes, n_query each
};

struct TrainConfig {
    int n_way = 5;
    int n_shot = 4;
    int n_query = 15;
    double learning_rate = 0.002;
    double lr_decay_factor = 0.1;
    int patience_episodes = 600; // early-stop window
    int max_episodes = 5000;
    int val_interval = 200;  // episodes between validation passes
    int val_episodes = 20;   // episodes per validation estimate
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
    AugmentConfig augment;
    bool prototype_normalization = true;
    bool data_normalization = true; // fit Eq-style min-max stats on the train split

    void validate() const {
        if (n_way < 2 || n_way > kNumBeams)
            throw ArgumentError("TrainConfig: n_way must lie in [2, " +
                                std::to_string(kNumBeams) + "]");
        if (n_shot < 1 || n_query < 1)
            throw ArgumentError("TrainConfig: n_shot and n_query must be positive");
        if (!(learning_rate > 0.0))
            throw ArgumentError("TrainConfig: learning_rate must be positive");
        if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
            throw ArgumentError("TrainConfig: lr_decay_factor must lie in (0, 1]");
        if (max_episodes < 0 || patience_episodes < 1 || val_interval < 1 || val_episodes < 1)
            throw ArgumentError("TrainConfig: episode counts must be positive");
        augment.validate();
    }
};

// Uniform class selection without replacement, then per class support and
// query draws without replacement (query from the remaining blocks).
inline Episode sample_episode(const Subset& data, const TrainConfig& cfg, Rng& rng) {
    const std::vector<int> beams = data.beams_present();
    if (static_cast<int>(beams.size()) < cfg.n_way)
        throw SamplingError("sample_episode: only " + std::to_string(beams.size()) +
                            " beams present, need " + std::to_string(cfg.n_way));
    Episode ep;
    ep.handle = data.handle;
    const std::vector<int> picks =
        rng.sample_without_replacement(static_cast<int>(beams.size()), cfg.n_way);
    for (int p : picks)
        ep.classes.push_back(beams[static_cast<std::size_t>(p)]);

    for (int beam : ep.classes) {
        const auto& pool = data.by_beam[static_cast<std::size_t>(beam)];
        const int need = cfg.n_shot + cfg.n_query;
        if (static_cast<int>(pool.size()) < need)
            throw SamplingError("sample_episode: beam " + std::to_string(beam) + " has " +
                                std::to_string(pool.size()) + " blocks, need " +
                                std::to_string(need));
        const std::vector<int> local =
            rng.sample_without_replacement(static_cast<int>(pool.size()), need);
        std::vector<int> support, query;
        for (int i = 0; i < cfg.n_shot; ++i)
            support.push_back(pool[static_cast<std::size_t>(local[static_cast<std::size_t>(i)])]);
        for (int i = cfg.n_shot; i < need; ++i)
            query.push_back(pool[static_cast<std::size_t>(local[static_cast<std::size_t>(i)])]);
        ep.support_idx.push_back(std::move(support));
        ep.query_idx.push_back(std::move(query));
    }
    return ep;
}

inline Episode sample_episode(const DatasetHandle& data, const TrainConfig& cfg, Rng& rng) {
    const Subset s = full_subset(data);
    return sample_episode(s, cfg, rng);
}

// Class prototypes as arithmetic means of the support embeddings.
inline PrototypeSet compute_prototypes(const std::map<int, Matrix>& class_embeddings) {
    PrototypeSet out;
    for (const auto& [beam, emb] : class_embeddings) {
        if (emb.rows < 1)
            throw ArgumentError("compute_prototypes: class " + std::to_string(beam) +
                                " has no embeddings");
        Embedding p(static_cast<std::size_t>(emb.cols), 0.0);
        for (int r = 0; r < emb.rows; ++r) {
            const double* row = emb.row(r);
            for (int c = 0; c < emb.cols; ++c)
                p[static_cast<std::size_t>(c)] += row[c];
        }
        for (double& x : p)
            x /= emb.rows;
        out.prototypes.emplace(beam, std::move(p));
    }
    return out;
}

inline PrototypeSet compute_prototypes(const std::map<int, Matrix>& class_embeddings,
                                       bool normalize) {
    PrototypeSet p = compute_prototypes(class_embeddings);
    return normalize ? normalize_prototypes(p) : p;
}

struct ClassifyResult {
    std::vector<int> labels;   // ascending beam order
    std::vector<double> probs; // aligned with labels
    int predicted = -1;
};

// Softmax over negative squared Euclidean distances to the prototypes,
// evaluated with max-subtraction for stability. When the prototype set is
// normalized the query embedding is unit-normalized first, so distances and
// cosine similarities rank identically. Ties break toward the smaller beam.
inline ClassifyResult classify(const Embedding& embedding, const PrototypeSet& protos) {
    if (protos.prototypes.empty())
        throw ArgumentError("classify: empty prototype set");
    if (static_cast<int>(embedding.size()) != protos.dim())
        throw ArgumentError("classify: embedding dim " + std::to_string(embedding.size()) +
                            " != prototype dim " + std::to_string(protos.dim()));
    Embedding q = embedding;
    if (protos.normalized) {
        const double n = l2_norm(q);
        if (!(n > 0.0))
            throw DegenerateDataError("classify: zero-norm query under normalization");
        for (double& x : q)
            x /= n;
    }

    ClassifyResult res;
    std::vector<double> neg_d;
    for (const auto& [beam, p] : protos.prototypes) {
        double d = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) {
            const double diff = q[i] - p[i];
            d += diff * diff;
        }
        res.labels.push_back(beam);
        neg_d.push_back(-d);
    }
    const double m = *std::max_element(neg_d.begin(), neg_d.end());
    double z = 0.0;
    res.probs.resize(neg_d.size());
    for (std::size_t i = 0; i < neg_d.size(); ++i) {
        res.probs[i] = std::exp(neg_d[i] - m);
        z += res.probs[i];
    }
    std::size_t best = 0;
    for (std::size_t i = 0; i < neg_d.size(); ++i) {
        res.probs[i] /= z;
        if (neg_d[i] > neg_d[best])
            best = i; // strict: earlier (smaller) beam wins ties
    }
    res.predicted = res.labels[best];
    return res;
}

// ---------------------------------------------------------------------------
// Episodic loss on embeddings
// ---------------------------------------------------------------------------

// Support rows are class-major (n_way * n_shot), query rows likewise
// (n_way * n_query). The loss is the mean negative log-likelihood of each
// query's true class under the softmax over negative squared distances to
// the prototypes, with prototypes differentiated through (not detached).
struct ProtoLossResult {
    double loss = 0.0;
    Matrix g_support; // d loss / d support embeddings
    Matrix g_query;   // d loss / d query embeddings
};

namespace protonet_detail {

inline void l2_normalize_rows(Matrix& m, std::vector<double>& norms) {
    norms.assign(static_cast<std::size_t>(m.rows), 0.0);
    for (int r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        double s = 0.0;
        for (int c = 0; c < m.cols; ++c)
            s += row[c] * row[c];
        const double n = std::sqrt(s);
        if (!(n > 0.0))
            throw DegenerateDataError("proto_loss: zero-norm vector under normalization");
        norms[static_cast<std::size_t>(r)] = n;
        for (int c = 0; c < m.cols; ++c)
            row[c] /= n;
    }
}

// Chain rule through v -> v/||v||: g_in = (g_out - (g_out . vhat) vhat) / ||v||.
inline void l2_normalize_backward_row(const double* vhat, double norm, const double* g_out,
                                      double* g_in, int dim) {
    double dp = 0.0;
    for (int c = 0; c < dim; ++c)
        dp += g_out[c] * vhat[c];
    for (int c = 0; c < dim; ++c)
        g_in[c] = (g_out[c] - dp * vhat[c]) / norm;
}

} // namespace protonet_detail

inline ProtoLossResult proto_loss(const Matrix& support, int n_way, int n_shot,
                                  const Matrix& query, int n_query, bool normalize,
                                  bool want_grads = true) {
    if (support.rows != n_way * n_shot || query.rows != n_way * n_query)
        throw ArgumentError("proto_loss: embedding row counts do not match the episode shape");
    const int dim = support.cols;

    // Prototypes: class means, optionally unit-normalized (queries likewise).
    Matrix protos(n_way, dim);
    for (int c = 0; c < n_way; ++c) {
        double* p = protos.row(c);
        for (int s = 0; s < n_shot; ++s) {
            const double* e = support.row(c * n_shot + s);
            for (int d = 0; d < dim; ++d)
                p[d] += e[d];
        }
        for (int d = 0; d < dim; ++d)
            p[d] /= n_shot;
    }
    Matrix protos_hat = protos;
    Matrix query_hat = query;
    std::vector<double> proto_norms, query_norms;
    if (normalize) {
        protonet_detail::l2_normalize_rows(protos_hat, proto_norms);
        protonet_detail::l2_normalize_rows(query_hat, query_norms);
    }

    const int n_q_total = n_way * n_query;
    const double inv_count = 1.0 / n_q_total;
    ProtoLossResult out;
    Matrix g_protos_hat(n_way, dim);
    Matrix g_query_hat(n_q_total, dim);

    std::vector<double> neg_d(static_cast<std::size_t>(n_way));
    std::vector<double> p_soft(static_cast<std::size_t>(n_way));
    for (int qc = 0; qc < n_way; ++qc) {
        for (int qi = 0; qi < n_query; ++qi) {
            const int qrow = qc * n_query + qi;
            const double* qv = query_hat.row(qrow);
            for (int c = 0; c < n_way; ++c) {
                const double* p = protos_hat.row(c);
                double d = 0.0;
                for (int k = 0; k < dim; ++k) {
                    const double diff = qv[k] - p[k];
                    d += diff * diff;
                }
                neg_d[static_cast<std::size_t>(c)] = -d;
            }
            const double m = *std::max_element(neg_d.begin(), neg_d.end());
            double z = 0.0;
            for (int c = 0; c < n_way; ++c) {
                p_soft[static_cast<std::size_t>(c)] = std::exp(neg_d[static_cast<std::size_t>(c)] - m);
                z += p_soft[static_cast<std::size_t>(c)];
            }
            // -log p(y) = d_true + log sum exp(-d) = d_true + m + log z
            out.loss += inv_count * (-neg_d[static_cast<std::size_t>(qc)] + m + std::log(z));

            if (!want_grads)
                continue;
            for (int c = 0; c < n_way; ++c) {
                const double soft = p_soft[static_cast<std::size_t>(c)] / z;
                // dL/dd_c = inv_count * (1{c == true} - softmax_c)
                const double gd = inv_count * ((c == qc ? 1.0 : 0.0) - soft);
                const double* p = protos_hat.row(c);
                double* gq = g_query_hat.row(qrow);
                double* gp = g_protos_hat.row(c);
                for (int k = 0; k < dim; ++k) {
                    const double diff2 = 2.0 * (qv[k] - p[k]);
                    gq[k] += gd * diff2;
                    gp[k] -= gd * diff2;
                }
            }
        }
    }

    if (!want_grads)
        return out;

    // Undo normalization, then spread prototype gradients over the means.
    Matrix g_protos(n_way, dim);
    out.g_query = Matrix(n_q_total, dim);
    if (normalize) {
        for (int c = 0; c < n_way; ++c)
            protonet_detail::l2_normalize_backward_row(
                protos_hat.row(c), proto_norms[static_cast<std::size_t>(c)], g_protos_hat.row(c),
                g_protos.row(c), dim);
        for (int r = 0; r < n_q_total; ++r)
            protonet_detail::l2_normalize_backward_row(
                query_hat.row(r), query_norms[static_cast<std::size_t>(r)], g_query_hat.row(r),
                out.g_query.row(r), dim);
    } else {
        g_protos = g_protos_hat;
        out.g_query = g_query_hat;
    }

    out.g_support = Matrix(n_way * n_shot, dim);
    for (int c = 0; c < n_way; ++c) {
        const double* gp = g_protos.row(c);
        for (int s = 0; s < n_shot; ++s) {
            double* gs = out.g_support.row(c * n_shot + s);
            for (int k = 0; k < dim; ++k)
                gs[k] = gp[k] / n_shot;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Episode loss through the encoder
// ---------------------------------------------------------------------------

namespace protonet_detail {

// Assembles the episode batch (support rows first, then queries, class-major)
// applying augmentation (training only) and min-max normalization in that
// order.
inline Tensor episode_batch(const Episode& ep, const TrainConfig& cfg, const MinMaxStats* stats,
                            Rng* augment_rng) {
    const int n_way = static_cast<int>(ep.classes.size());
    const int n_shot = static_cast<int>(ep.support_idx.front().size());
    const int n_query = static_cast<int>(ep.query_idx.front().size());
    const int total = n_way * (n_shot + n_query);
    Tensor batch(total, kBlockChannels, kBlockSamples);

    const bool augment = cfg.augment.enabled && augment_rng != nullptr;
    int row = 0;
    auto emit = [&](int block_index) {
        const IQBlock& raw = ep.handle->blocks[static_cast<std::size_t>(block_index)].block;
        const IQBlock* src = &raw;
        IQBlock tmp;
        if (augment) {
            tmp = augment_block(raw, cfg.augment, *augment_rng);
            src = &tmp;
        }
        for (int c = 0; c < kBlockChannels; ++c) {
            double* dst = batch.at(row, c);
            if (stats) {
                for (int t = 0; t < kBlockSamples; ++t)
                    dst[t] = minmax_normalize_value(src->at(c, t), *stats);
            } else {
                const double* s = &src->data[static_cast<std::size_t>(c) * kBlockSamples];
                std::copy(s, s + kBlockSamples, dst);
            }
        }
        ++row;
    };
    for (int c = 0; c < n_way; ++c)
        for (int idx : ep.support_idx[static_cast<std::size_t>(c)])
            emit(idx);
    for (int c = 0; c < n_way; ++c)
        for (int idx : ep.query_idx[static_cast<std::size_t>(c)])
            emit(idx);
    return batch;
}

inline void check_episode(const Episode& ep) {
    if (!ep.handle || ep.classes.empty() || ep.support_idx.size() != ep.classes.size() ||
        ep.query_idx.size() != ep.classes.size())
        throw ArgumentError("episode_loss: malformed episode");
}

} // namespace protonet_detail

// Episodic negative log-likelihood with prototypes computed from the
// episode's own support set (training-mode encoder statistics). Pure: does
// not touch running statistics.
inline double episode_loss(const Episode& ep, const EncoderWeights& weights,
                           const TrainConfig& cfg, const MinMaxStats* stats = nullptr,
                           Rng* augment_rng = nullptr) {
    protonet_detail::check_episode(ep);
    const int n_way = static_cast<int>(ep.classes.size());
    const int n_shot = static_cast<int>(ep.support_idx.front().size());
    const int n_query = static_cast<int>(ep.query_idx.front().size());
    const Tensor batch = protonet_detail::episode_batch(
        ep, cfg, cfg.data_normalization ? stats : nullptr, augment_rng);
    const Matrix emb = encoder_forward_train_const(weights, batch);

    Matrix support(n_way * n_shot, emb.cols), query(n_way * n_query, emb.cols);
    for (int r = 0; r < support.rows; ++r)
        std::copy(emb.row(r), emb.row(r) + emb.cols, support.row(r));
    for (int r = 0; r < query.rows; ++r)
        std::copy(emb.row(support.rows + r), emb.row(support.rows + r) + emb.cols, query.row(r));
    const ProtoLossResult res =
        proto_loss(support, n_way, n_shot, query, n_query, cfg.prototype_normalization, false);
    return res.loss;
}

// Loss plus parameter gradients; updates batchnorm running statistics when
// update_running is set. Gradient flows through the prototypes.
inline double episode_backward(const Episode& ep, EncoderWeights& weights, const TrainConfig& cfg,
                               const MinMaxStats* stats, Rng* augment_rng, Grads& grads,
                               bool update_running = true) {
    protonet_detail::check_episode(ep);
    const int n_way = static_cast<int>(ep.classes.size());
    const int n_shot = static_cast<int>(ep.support_idx.front().size());
    const int n_query = static_cast<int>(ep.query_idx.front().size());
    const Tensor batch = protonet_detail::episode_batch(
        ep, cfg, cfg.data_normalization ? stats : nullptr, augment_rng);

    EncoderActivations acts;
    const Matrix emb = encoder_forward_train(weights, batch, acts, update_running);

    Matrix support(n_way * n_shot, emb.cols), query(n_way * n_query, emb.cols);
    for (int r = 0; r < support.rows; ++r)
        std::copy(emb.row(r), emb.row(r) + emb.cols, support.row(r));
    for (int r = 0; r < query.rows; ++r)
        std::copy(emb.row(support.rows + r), emb.row(support.rows + r) + emb.cols, query.row(r));

    const ProtoLossResult res =
        proto_loss(support, n_way, n_shot, query, n_query, cfg.prototype_normalization, true);

    Matrix g_emb(emb.rows, emb.cols);
    for (int r = 0; r < support.rows; ++r)
        std::copy(res.g_support.row(r), res.g_support.row(r) + emb.cols, g_emb.row(r));
    for (int r = 0; r < query.rows; ++r)
        std::copy(res.g_query.row(r), res.g_query.row(r) + emb.cols,
                  g_emb.row(support.rows + r));
    encoder_backward(weights, acts, g_emb, grads);
    return res.loss;
}

} // namespace protobeam
