#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "protobeam/dataset.hpp"
#include "protobeam/embedding.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/iq_block.hpp"
#include "protobeam/rng.hpp"

namespace protobeam {

// Global extrema over every sample value of the training split. Fit once on
// training data and reused unchanged at test time.
struct MinMaxStats {
    double x_min = 0.0;
    double x_max = 0.0;

    bool valid() const { return std::isfinite(x_min) && std::isfinite(x_max) && x_min < x_max; }
};

struct AugmentConfig {
    bool enabled = true;
    double phase_lo_rad = 0.0;
    double phase_hi_rad = 2.0 * M_PI;
    double scale_lo = 0.8;
    double scale_hi = 1.2;

    void validate() const {
        if (!(scale_lo > 0.0) || !(scale_hi >= scale_lo))
            throw ArgumentError("AugmentConfig: scale range must be positive and ordered");
        if (!(phase_hi_rad >= phase_lo_rad))
            throw ArgumentError("AugmentConfig: phase range must be ordered");
    }
};

inline MinMaxStats fit_minmax(const Subset& train_set) {
    if (train_set.num_blocks() == 0)
        throw ArgumentError("fit_minmax: empty training set");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < kNumBeams; ++b) {
        for (int idx : train_set.by_beam[static_cast<std::size_t>(b)]) {
            for (double x : train_set.block(idx).block.data) {
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
        }
    }
    if (!(lo < hi))
        throw DegenerateDataError("fit_minmax: constant training data (x_min == x_max)");
    return {lo, hi};
}

inline MinMaxStats fit_minmax(const DatasetHandle& train_set) {
    return fit_minmax(full_subset(train_set));
}

inline double minmax_normalize_value(double x, const MinMaxStats& stats) {
    return 2.0 * ((x - stats.x_min) / (stats.x_max - stats.x_min)) - 1.0;
}

// Maps training-range values into [-1, 1]. Values outside the training
// extrema are not clipped.
inline IQBlock minmax_normalize(const IQBlock& block, const MinMaxStats& stats) {
    if (!stats.valid())
        throw ArgumentError("minmax_normalize: invalid stats (need x_min < x_max)");
    IQBlock out;
    for (std::size_t i = 0; i < block.data.size(); ++i)
        out.data[i] = minmax_normalize_value(block.data[i], stats);
    return out;
}

// Rotates each complex sample z = I + jQ by e^{j theta}.
inline IQBlock augment_phase_rotation(const IQBlock& block, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    IQBlock out;
    for (int t = 0; t < kBlockSamples; ++t) {
        const double i0 = block.at(0, t), q0 = block.at(1, t);
        out.at(0, t) = i0 * c - q0 * s;
        out.at(1, t) = i0 * s + q0 * c;
    }
    return out;
}

inline IQBlock augment_scale(const IQBlock& block, double s) {
    if (!(s > 0.0))
        throw ArgumentError("augment_scale: scale must be positive");
    IQBlock out;
    for (std::size_t i = 0; i < block.data.size(); ++i)
        out.data[i] = block.data[i] * s;
    return out;
}

// One training-time draw: random phase rotation then random scaling.
inline IQBlock augment_block(const IQBlock& block, const AugmentConfig& cfg, Rng& rng) {
    const double theta = rng.uniform(cfg.phase_lo_rad, cfg.phase_hi_rad);
    const double s = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    return augment_scale(augment_phase_rotation(block, theta), s);
}

} // namespace protobeam
