#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "protobeam/dataset.hpp"
#include "protobeam/embedding.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/pca.hpp"
#include "protobeam/protonet.hpp"
#include "protobeam/trainer.hpp"

namespace protobeam {

struct EvalReport {
    double exact_accuracy = 0.0;
    double tolerance_accuracy = 0.0;
    std::array<std::array<long long, kNumBeams>, kNumBeams> confusion{}; // [true][pred]
    std::array<double, kNumBeams> per_class_accuracy{};                  // NaN when unseen
    long long n_queries = 0;
    Protocol protocol = Protocol::kTtsa;
    int k_shot = 0;
    int tolerance = 0;
};

struct LabeledEmbeddings {
    Matrix emb;
    std::vector<int> labels;
};

// Encodes a subset in canonical beam-major order (inference mode, with the
// model's training-time normalization applied).
inline LabeledEmbeddings encode_subset(const Model& model, const Subset& subset) {
    std::vector<const IQBlock*> blocks;
    LabeledEmbeddings out;
    for (int b = 0; b < kNumBeams; ++b)
        for (int idx : subset.by_beam[static_cast<std::size_t>(b)]) {
            blocks.push_back(&subset.block(idx).block);
            out.labels.push_back(subset.block(idx).beam);
        }
    out.emb = encode_batch(model.weights, blocks, model.stats());
    return out;
}

namespace eval_detail {

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Per-beam support selection used by prototype building: k sorted positions
// into the beam's pool, drawn without replacement.
inline std::array<std::vector<int>, kNumBeams> select_support_positions(
    const Subset& support_pool, int k, std::uint64_t seed) {
    if (k < 1)
        throw ArgumentError("build_prototypes: k must be >= 1");
    std::array<std::vector<int>, kNumBeams> picks;
    for (int b = 0; b < kNumBeams; ++b) {
        const int n = static_cast<int>(support_pool.by_beam[static_cast<std::size_t>(b)].size());
        if (n < k)
            throw SamplingError("build_prototypes: beam " + std::to_string(b) + " has " +
                                std::to_string(n) + " support blocks, need " + std::to_string(k));
        Rng rng(mix_seed(seed, 0x5e1ec7ULL, static_cast<std::uint64_t>(b)));
        picks[static_cast<std::size_t>(b)] = rng.sample_without_replacement(n, k);
        std::sort(picks[static_cast<std::size_t>(b)].begin(),
                  picks[static_cast<std::size_t>(b)].end());
    }
    return picks;
}

} // namespace eval_detail

// Deployment-time adaptation: sample k support blocks per beam from the
// target-domain pool, encode them and average into prototypes (normalized
// per the model's training flag). Only prototypes are rebuilt on an unseen
// antenna; the encoder is untouched.
inline PrototypeSet build_prototypes(const Model& model, const Subset& support_pool, int k,
                                     std::uint64_t seed) {
    const auto picks = eval_detail::select_support_positions(support_pool, k, seed);
    std::vector<const IQBlock*> blocks;
    for (int b = 0; b < kNumBeams; ++b)
        for (int pos : picks[static_cast<std::size_t>(b)]) {
            const int idx = support_pool.by_beam[static_cast<std::size_t>(b)][static_cast<std::size_t>(pos)];
            blocks.push_back(&support_pool.block(idx).block);
        }
    const Matrix emb = encode_batch(model.weights, blocks, model.stats());
    std::map<int, Matrix> by_class;
    int row = 0;
    for (int b = 0; b < kNumBeams; ++b) {
        Matrix m(k, emb.cols);
        for (int i = 0; i < k; ++i, ++row)
            std::copy(emb.row(row), emb.row(row) + emb.cols, m.row(i));
        by_class.emplace(b, std::move(m));
    }
    return compute_prototypes(by_class, model.prototype_normalization);
}

// Same sampling and averaging, applied to pre-encoded per-beam pools. Used
// by sweeps so the pool is encoded once.
inline PrototypeSet build_prototypes_from_embeddings(
    const std::array<Matrix, kNumBeams>& pool_embeddings, int k, std::uint64_t seed,
    bool normalize) {
    std::map<int, Matrix> by_class;
    for (int b = 0; b < kNumBeams; ++b) {
        const Matrix& pool = pool_embeddings[static_cast<std::size_t>(b)];
        if (pool.rows < k)
            throw SamplingError("build_prototypes: beam " + std::to_string(b) + " has " +
                                std::to_string(pool.rows) + " support blocks, need " +
                                std::to_string(k));
        Rng rng(mix_seed(seed, 0x5e1ec7ULL, static_cast<std::uint64_t>(b)));
        std::vector<int> pos = rng.sample_without_replacement(pool.rows, k);
        std::sort(pos.begin(), pos.end());
        Matrix m(k, pool.cols);
        for (int i = 0; i < k; ++i)
            std::copy(pool.row(pos[static_cast<std::size_t>(i)]),
                      pool.row(pos[static_cast<std::size_t>(i)]) + pool.cols, m.row(i));
        by_class.emplace(b, std::move(m));
    }
    return compute_prototypes(by_class, normalize);
}

// Classifies pre-encoded queries. Tolerance scoring counts |pred - true| <=
// tolerance without wraparound; the confusion matrix always records the raw
// prediction.
inline EvalReport evaluate_embeddings(const LabeledEmbeddings& queries, const PrototypeSet& protos,
                                      int tolerance, Protocol protocol = Protocol::kTtsa,
                                      int k_shot = 0) {
    if (queries.emb.rows == 0)
        throw ArgumentError("evaluate: empty query pool");
    if (tolerance < 0)
        throw ArgumentError("evaluate: tolerance must be >= 0");
    EvalReport rep;
    rep.protocol = protocol;
    rep.k_shot = k_shot;
    rep.tolerance = tolerance;
    rep.n_queries = queries.emb.rows;
    long long exact = 0, within = 0;
    for (int i = 0; i < queries.emb.rows; ++i) {
        const int truth = queries.labels[static_cast<std::size_t>(i)];
        check_beam_index(truth, "evaluate");
        Embedding emb(queries.emb.row(i), queries.emb.row(i) + queries.emb.cols);
        const ClassifyResult res = classify(emb, protos);
        rep.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(res.predicted)] += 1;
        if (res.predicted == truth)
            ++exact;
        if (std::abs(res.predicted - truth) <= tolerance)
            ++within;
    }
    rep.exact_accuracy = static_cast<double>(exact) / static_cast<double>(rep.n_queries);
    rep.tolerance_accuracy = static_cast<double>(within) / static_cast<double>(rep.n_queries);
    for (int b = 0; b < kNumBeams; ++b) {
        long long row_total = 0;
        for (int p = 0; p < kNumBeams; ++p)
            row_total += rep.confusion[static_cast<std::size_t>(b)][static_cast<std::size_t>(p)];
        rep.per_class_accuracy[static_cast<std::size_t>(b)] =
            row_total == 0 ? std::numeric_limits<double>::quiet_NaN()
                           : static_cast<double>(
                                 rep.confusion[static_cast<std::size_t>(b)][static_cast<std::size_t>(b)]) /
                                 static_cast<double>(row_total);
    }
    return rep;
}

inline EvalReport evaluate(const Model& model, const PrototypeSet& protos,
                           const Subset& query_pool, int tolerance,
                           Protocol protocol = Protocol::kTtsa, int k_shot = 0) {
    if (query_pool.num_blocks() == 0)
        throw ArgumentError("evaluate: empty query pool");
    const LabeledEmbeddings queries = encode_subset(model, query_pool);
    return evaluate_embeddings(queries, protos, tolerance, protocol, k_shot);
}

// Fraction of all misclassifications that land on an index-adjacent beam.
// Returns 1.0 when there are no errors.
inline double confusion_neighbor_mass(const EvalReport& report) {
    if (report.n_queries <= 0)
        throw ArgumentError("confusion_neighbor_mass: empty report");
    long long errors = 0, adjacent = 0;
    for (int t = 0; t < kNumBeams; ++t)
        for (int p = 0; p < kNumBeams; ++p) {
            if (t == p)
                continue;
            const long long n = report.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
            errors += n;
            if (std::abs(t - p) == 1)
                adjacent += n;
        }
    if (errors == 0)
        return 1.0;
    return static_cast<double>(adjacent) / static_cast<double>(errors);
}

// ---------------------------------------------------------------------------
// k-shot sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    int k = 0;
    double mean_exact = 0.0;
    double mean_tolerance = 0.0;
    double std_exact = 0.0;
    double std_tolerance = 0.0;
};

// For each k, rebuilds prototypes `repeats` times with derived sub-seeds and
// averages the resulting accuracies. Support and query pools are encoded
// once and reused.
inline std::vector<SweepRow> kshot_sweep(const Model& model, const Subset& support_pool,
                                         const Subset& query_pool, const std::vector<int>& ks,
                                         int repeats, std::uint64_t seed, int tolerance,
                                         Protocol protocol = Protocol::kTtsa) {
    if (ks.empty())
        throw ArgumentError("kshot_sweep: empty k list");
    if (repeats < 1)
        throw ArgumentError("kshot_sweep: repeats must be >= 1");
    const int max_k = *std::max_element(ks.begin(), ks.end());
    if (support_pool.min_blocks_per_beam() < max_k ||
        static_cast<int>(support_pool.beams_present().size()) != kNumBeams)
        throw SamplingError("kshot_sweep: support pool cannot supply k = " + std::to_string(max_k) +
                            " blocks for all " + std::to_string(kNumBeams) + " beams");

    std::array<Matrix, kNumBeams> pool_embeddings;
    {
        const LabeledEmbeddings all = encode_subset(model, support_pool);
        int row = 0;
        for (int b = 0; b < kNumBeams; ++b) {
            const int n = static_cast<int>(support_pool.by_beam[static_cast<std::size_t>(b)].size());
            Matrix m(n, all.emb.cols);
            for (int i = 0; i < n; ++i, ++row)
                std::copy(all.emb.row(row), all.emb.row(row) + all.emb.cols, m.row(i));
            pool_embeddings[static_cast<std::size_t>(b)] = std::move(m);
        }
    }
    const LabeledEmbeddings queries = encode_subset(model, query_pool);

    std::vector<SweepRow> rows;
    for (int k : ks) {
        std::vector<double> exact, tol;
        for (int r = 0; r < repeats; ++r) {
            const std::uint64_t sub_seed =
                mix_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(r));
            const PrototypeSet protos = build_prototypes_from_embeddings(
                pool_embeddings, k, sub_seed, model.prototype_normalization);
            const EvalReport rep = evaluate_embeddings(queries, protos, tolerance, protocol, k);
            exact.push_back(rep.exact_accuracy);
            tol.push_back(rep.tolerance_accuracy);
        }
        SweepRow row;
        row.k = k;
        auto mean_of = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v)
                s += x;
            return s / static_cast<double>(v.size());
        };
        row.mean_exact = mean_of(exact);
        row.mean_tolerance = mean_of(tol);
        auto std_of = [&](const std::vector<double>& v, double mean) {
            double s = 0.0;
            for (double x : v)
                s += (x - mean) * (x - mean);
            return std::sqrt(s / static_cast<double>(v.size()));
        };
        row.std_exact = std_of(exact, row.mean_exact);
        row.std_tolerance = std_of(tol, row.mean_tolerance);
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Protocol runner
// ---------------------------------------------------------------------------

struct ProtocolOptions {
    TrainConfig train_cfg;
    EncoderConfig encoder_cfg;
    double query_fraction = 0.25;
    double val_fraction = 0.15;
    std::uint64_t split_seed = 0;
    std::uint64_t proto_seed = 0;
};

struct ProtocolResult {
    std::map<std::string, EvalReport> reports; // keyed by test-domain antenna id
    Model model;
    TrainingLog log;
};

// Trains once on the train domain (unless a pretrained model is supplied),
// then builds k-shot prototypes from each test domain's support pool and
// evaluates its query pool. A test domain equal to the train domain reduces
// to the TTSA split rules.
inline ProtocolResult run_protocol(Protocol protocol, const DatasetHandle& train_domain,
                                   const std::vector<const DatasetHandle*>& test_domains,
                                   const ProtocolOptions& opt, int k, int tolerance,
                                   const Model* pretrained = nullptr) {
    std::vector<const DatasetHandle*> targets = test_domains;
    if (targets.empty())
        targets.push_back(&train_domain);
    for (const DatasetHandle* t : targets) {
        const bool same = (t == &train_domain) || (t->tag == train_domain.tag);
        if (protocol == Protocol::kTtsa && !same)
            throw ArgumentError("run_protocol: TTSA test domain must equal the train domain");
    }

    const Split base =
        make_split(train_domain, train_domain, Protocol::kTtsa, opt.query_fraction, opt.split_seed);
    ProtocolResult out;
    if (pretrained) {
        out.model = *pretrained;
    } else {
        auto [train_core, val] =
            split_subset(base.train, opt.val_fraction, mix_seed(opt.split_seed, 0x7a1ULL));
        TrainResult tr = train(train_core, val, opt.train_cfg, opt.encoder_cfg);
        out.model = std::move(tr.model);
        out.log = std::move(tr.log);
    }

    for (const DatasetHandle* t : targets) {
        const bool same = (t == &train_domain) || (t->tag == train_domain.tag);
        Subset support, query;
        Protocol effective = same ? Protocol::kTtsa : Protocol::kTota;
        if (same) {
            support = base.support_pool;
            query = base.query_pool;
        } else {
            const Split s = make_split(train_domain, *t, Protocol::kTota, opt.query_fraction,
                                       mix_seed(opt.split_seed, eval_detail::fnv1a(t->tag.antenna_id)));
            support = s.support_pool;
            query = s.query_pool;
        }
        const PrototypeSet protos = build_prototypes(
            out.model, support, k, mix_seed(opt.proto_seed, eval_detail::fnv1a(t->tag.antenna_id)));
        out.reports.emplace(t->tag.antenna_id,
                            evaluate(out.model, protos, query, tolerance, effective, k));
    }
    return out;
}

} // namespace protobeam
