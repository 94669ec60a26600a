#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "protobeam/dataset.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/eval.hpp"
#include "protobeam/trainer.hpp"

namespace protobeam {

// Sequential study of the three preprocessing flags. Configurations share
// the training seed, so episode class/block selections are identical and
// accuracy differences are attributable to the flags alone.
struct AblationPlan {
    struct Row {
        std::string name;
        bool data_normalization = false;
        bool augmentation = false;
        bool prototype_normalization = false;
    };

    std::vector<Row> rows = {
        {"raw", false, false, false},
        {"data_norm", true, false, false},
        {"data_norm_augment", true, true, false},
        {"proto_norm_data_norm_augment", true, true, true},
    };
    TrainConfig base;
    EncoderConfig encoder;
    std::vector<int> ks = {2, 32};
    int subset_blocks = 500; // blocks per beam used for the reduced-scale runs
    double query_fraction = 0.25;
    double val_fraction = 0.15;

    void validate() const {
        if (rows.empty())
            throw ArgumentError("AblationPlan: no configurations");
        if (ks.empty())
            throw ArgumentError("AblationPlan: no shot counts");
        if (subset_blocks < 1)
            throw ArgumentError("AblationPlan: subset_blocks must be >= 1");
    }
};

struct AblationResult {
    std::vector<std::string> config_names;
    std::vector<int> ks;
    // accuracy[config][protocol][k_index]; protocol 0 = TTSA, 1 = TOTA
    // (TOTA is the mean over the shifted test domains).
    std::vector<std::array<std::vector<double>, 2>> accuracy;
};

inline AblationResult run_ablation(const AblationPlan& plan, const DatasetHandle& train_domain,
                                   const std::vector<const DatasetHandle*>& test_domains,
                                   std::uint64_t seed) {
    plan.validate();
    if (test_domains.empty())
        throw ArgumentError("run_ablation: no test domains");

    const DatasetHandle train_small = truncate_per_beam(train_domain, plan.subset_blocks);
    std::vector<DatasetHandle> test_small;
    test_small.reserve(test_domains.size());
    for (const DatasetHandle* t : test_domains)
        test_small.push_back(truncate_per_beam(*t, plan.subset_blocks));

    const std::uint64_t split_seed = mix_seed(seed, 0xab1a7ULL);
    const Split base =
        make_split(train_small, train_small, Protocol::kTtsa, plan.query_fraction, split_seed);
    auto [train_core, val] =
        split_subset(base.train, plan.val_fraction, mix_seed(split_seed, 0x7a1ULL));

    std::vector<Split> tota_splits;
    for (const auto& t : test_small)
        tota_splits.push_back(make_split(train_small, t, Protocol::kTota, plan.query_fraction,
                                         mix_seed(split_seed, eval_detail::fnv1a(t.tag.antenna_id))));

    AblationResult out;
    out.ks = plan.ks;
    const int repeats = 1;
    for (const auto& row : plan.rows) {
        TrainConfig cfg = plan.base;
        cfg.seed = seed;
        cfg.data_normalization = row.data_normalization;
        cfg.augment.enabled = row.augmentation;
        cfg.prototype_normalization = row.prototype_normalization;

        const TrainResult tr = train(train_core, val, cfg, plan.encoder);

        std::array<std::vector<double>, 2> acc;
        const std::vector<SweepRow> ttsa =
            kshot_sweep(tr.model, base.support_pool, base.query_pool, plan.ks, repeats,
                        mix_seed(seed, 0x77aULL), 0, Protocol::kTtsa);
        for (const auto& r : ttsa)
            acc[0].push_back(r.mean_exact);

        std::vector<double> tota_sum(plan.ks.size(), 0.0);
        for (const auto& s : tota_splits) {
            const std::vector<SweepRow> rows = kshot_sweep(
                tr.model, s.support_pool, s.query_pool, plan.ks, repeats,
                mix_seed(seed, 0x707aULL, eval_detail::fnv1a(s.query_pool.handle->tag.antenna_id)),
                0, Protocol::kTota);
            for (std::size_t i = 0; i < rows.size(); ++i)
                tota_sum[i] += rows[i].mean_exact;
        }
        for (double s : tota_sum)
            acc[1].push_back(s / static_cast<double>(tota_splits.size()));

        out.config_names.push_back(row.name);
        out.accuracy.push_back(std::move(acc));
    }
    return out;
}

} // namespace protobeam
