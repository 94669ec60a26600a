#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "protobeam/errors.hpp"

namespace protobeam {

inline constexpr int kNumBeams = 24;       // horizontal transmit beam codebook size
inline constexpr int kBlockSamples = 2048; // complex samples per capture block
inline constexpr int kBlockChannels = 2;   // row 0 = in-phase, row 1 = quadrature

inline constexpr double kSnrDbMin = -15.0;
inline constexpr double kSnrDbMax = 20.0;

// One baseband capture: a 2 x 2048 real matrix. Row 0 holds the in-phase
// samples and row 1 the quadrature samples of 2048 complex values.
struct IQBlock {
    std::vector<double> data; // row-major, data[ch * kBlockSamples + t]

    IQBlock() : data(static_cast<std::size_t>(kBlockChannels) * kBlockSamples, 0.0) {}

    double& at(int ch, int t) {
        return data[static_cast<std::size_t>(ch) * kBlockSamples + static_cast<std::size_t>(t)];
    }
    double at(int ch, int t) const {
        return data[static_cast<std::size_t>(ch) * kBlockSamples + static_cast<std::size_t>(t)];
    }

    std::span<double> i_row() { return {data.data(), kBlockSamples}; }
    std::span<double> q_row() { return {data.data() + kBlockSamples, kBlockSamples}; }
    std::span<const double> i_row() const { return {data.data(), kBlockSamples}; }
    std::span<const double> q_row() const { return {data.data() + kBlockSamples, kBlockSamples}; }

    bool all_finite() const {
        for (double x : data)
            if (!std::isfinite(x))
                return false;
        return true;
    }
};

// Identity of the RF frontend a block came from.
struct DomainTag {
    std::string antenna_id;
    std::string gain_setting;
    double snr_db = 0.0;

    bool operator==(const DomainTag&) const = default;
};

struct LabeledBlock {
    IQBlock block;
    int beam = 0; // in [0, kNumBeams)
    DomainTag domain;
};

inline void check_beam_index(int beam, const char* where) {
    if (beam < 0 || beam >= kNumBeams)
        throw ArgumentError(std::string(where) + ": beam index " + std::to_string(beam) +
                            " outside [0, " + std::to_string(kNumBeams - 1) + "]");
}

} // namespace protobeam
