#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "protobeam/dataset.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/iq_block.hpp"
#include "protobeam/rng.hpp"

namespace protobeam {

// Synthetic frontend surrogate. Each config models one RF chain whose
// impairments shift the capture distribution away from the clean domain.
struct SyntheticDomainConfig {
    std::string name = "tx0";
    double iq_gain_imbalance_db = 0.0;
    double iq_phase_imbalance_deg = 0.0;
    double cfo_normalized = 0.0;  // cycles per sample
    double phase_noise_std = 0.0; // rad per sample, random-walk increment
    double gain_db = 0.0;
    std::uint64_t seed_offset = 0;

    void validate() const {
        const double fields[] = {iq_gain_imbalance_db, iq_phase_imbalance_deg,
                                 cfo_normalized, phase_noise_std, gain_db};
        for (double f : fields)
            if (!std::isfinite(f))
                throw ArgumentError("SyntheticDomainConfig '" + name + "': non-finite field");
        if (phase_noise_std < 0.0)
            throw ArgumentError("SyntheticDomainConfig '" + name + "': phase_noise_std must be >= 0");
    }
};

// Four stock domains with progressively harsher impairments. Domain 0 is
// clean; 1 adds IQ imbalance, 2 adds carrier frequency offset, 3 adds phase
// noise on top.
inline std::vector<SyntheticDomainConfig> default_synthetic_domains() {
    std::vector<SyntheticDomainConfig> d(4);
    d[0].name = "tx0";
    d[1].name = "tx1";
    d[1].iq_gain_imbalance_db = 1.0;
    d[1].iq_phase_imbalance_deg = 2.0;
    d[2] = d[1];
    d[2].name = "tx2";
    d[2].cfo_normalized = 1e-4;
    d[3] = d[2];
    d[3].name = "tx3";
    d[3].phase_noise_std = 0.01;
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i].seed_offset = i;
    return d;
}

namespace synth_detail {

inline constexpr int kSymbolsPerBlock = 512;
inline constexpr int kSamplesPerSymbol = 4;
inline constexpr double kRrcRolloff = 0.35;
inline constexpr int kRrcSpanSymbols = 8;
inline constexpr int kBeamFirLength = 9;
inline constexpr double kBeamCrossfade = 0.5;

inline constexpr std::uint64_t kTagBeamTaps = 0xbea3517a0f1e5ULL;
inline constexpr std::uint64_t kTagPhaseNoise = 0x50a5e0000001ULL;
inline constexpr std::uint64_t kTagAwgn = 0xa36700000001ULL;

// Unit-energy root-raised-cosine pulse sampled at sps samples per symbol.
inline std::vector<double> rrc_taps(double rolloff, int span_symbols, int sps) {
    const int n_taps = span_symbols * sps + 1;
    const int mid = (n_taps - 1) / 2;
    std::vector<double> h(static_cast<std::size_t>(n_taps));
    const double beta = rolloff;
    for (int i = 0; i < n_taps; ++i) {
        const double t = static_cast<double>(i - mid) / sps; // in symbol periods
        double v;
        if (std::abs(t) < 1e-12) {
            v = 1.0 - beta + 4.0 * beta / M_PI;
        } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
            v = (beta / std::sqrt(2.0)) *
                ((1.0 + 2.0 / M_PI) * std::sin(M_PI / (4.0 * beta)) +
                 (1.0 - 2.0 / M_PI) * std::cos(M_PI / (4.0 * beta)));
        } else {
            const double num = std::sin(M_PI * t * (1.0 - beta)) +
                               4.0 * beta * t * std::cos(M_PI * t * (1.0 + beta));
            const double den = M_PI * t * (1.0 - 16.0 * beta * beta * t * t);
            v = num / den;
        }
        h[static_cast<std::size_t>(i)] = v;
    }
    double energy = 0.0;
    for (double v : h)
        energy += v * v;
    const double scale = 1.0 / std::sqrt(energy);
    for (double& v : h)
        v *= scale;
    return h;
}

} // namespace synth_detail

// The complex FIR signature of one beam. Raw taps depend on the beam index
// alone, so signatures are global across domains and seeds. Adjacent beams
// blend 50/50 with the next beam's raw taps, which makes neighboring beams
// intentionally confusable.
inline std::vector<std::complex<double>> beam_signature(int beam) {
    check_beam_index(beam, "beam_signature");
    using namespace synth_detail;
    auto raw = [](int b) {
        Rng rng(mix_seed(kTagBeamTaps, static_cast<std::uint64_t>(b)));
        std::vector<std::complex<double>> taps(kBeamFirLength);
        for (auto& t : taps) {
            const double re = rng.normal() * M_SQRT1_2;
            const double im = rng.normal() * M_SQRT1_2;
            t = {re, im};
        }
        return taps;
    };
    std::vector<std::complex<double>> h = raw(beam);
    if (beam + 1 < kNumBeams) {
        const auto next = raw(beam + 1);
        for (int i = 0; i < kBeamFirLength; ++i)
            h[static_cast<std::size_t>(i)] =
                (1.0 - kBeamCrossfade) * h[static_cast<std::size_t>(i)] +
                kBeamCrossfade * next[static_cast<std::size_t>(i)];
    }
    double energy = 0.0;
    for (const auto& t : h)
        energy += std::norm(t);
    const double scale = 1.0 / std::sqrt(energy);
    for (auto& t : h)
        t *= scale;
    return h;
}

// One synthetic capture. Deterministic in (beam, domain, snr_db, seed):
//   1. 512 QPSK symbols from a stream seeded by hash(seed), upsampled x4
//      through a root-raised-cosine pulse (roll-off 0.35, span 8) to 2048
//      complex samples;
//   2. convolution with the beam signature FIR;
//   3. domain impairments in order: gain, IQ gain/phase imbalance, CFO
//      rotation, cumulative phase-noise random walk;
//   4. complex white Gaussian noise scaled to the requested SNR.
inline IQBlock synth_beam_block(int beam, const SyntheticDomainConfig& domain,
                                double snr_db, std::uint64_t seed) {
    check_beam_index(beam, "synth_beam_block");
    domain.validate();
    if (!std::isfinite(snr_db))
        throw ArgumentError("synth_beam_block: snr_db must be finite");
    using namespace synth_detail;

    // QPSK symbol train, zero-stuffed to the block length.
    Rng sym_rng(seed);
    std::vector<std::complex<double>> x(kBlockSamples, {0.0, 0.0});
    for (int s = 0; s < kSymbolsPerBlock; ++s) {
        const std::uint64_t bits = sym_rng.below(4);
        const double re = (bits & 1u) ? M_SQRT1_2 : -M_SQRT1_2;
        const double im = (bits & 2u) ? M_SQRT1_2 : -M_SQRT1_2;
        x[static_cast<std::size_t>(s * kSamplesPerSymbol)] = {re, im};
    }

    // Pulse shaping, center-aligned (group delay compensated).
    static const std::vector<double> rrc =
        rrc_taps(kRrcRolloff, kRrcSpanSymbols, kSamplesPerSymbol);
    const int rrc_delay = (static_cast<int>(rrc.size()) - 1) / 2;
    std::vector<std::complex<double>> shaped(kBlockSamples, {0.0, 0.0});
    for (int n = 0; n < kBlockSamples; ++n) {
        std::complex<double> acc = 0.0;
        for (int k = 0; k < static_cast<int>(rrc.size()); ++k) {
            const int j = n + rrc_delay - k;
            if (j >= 0 && j < kBlockSamples)
                acc += rrc[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(j)];
        }
        shaped[static_cast<std::size_t>(n)] = acc;
    }

    // Beam FIR, center-aligned.
    const auto sig = beam_signature(beam);
    const int sig_delay = (kBeamFirLength - 1) / 2;
    std::vector<std::complex<double>> z(kBlockSamples, {0.0, 0.0});
    for (int n = 0; n < kBlockSamples; ++n) {
        std::complex<double> acc = 0.0;
        for (int k = 0; k < kBeamFirLength; ++k) {
            const int j = n + sig_delay - k;
            if (j >= 0 && j < kBlockSamples)
                acc += sig[static_cast<std::size_t>(k)] * shaped[static_cast<std::size_t>(j)];
        }
        z[static_cast<std::size_t>(n)] = acc;
    }

    // Impairments: gain, IQ imbalance, CFO, phase-noise random walk.
    const double gain = std::pow(10.0, domain.gain_db / 20.0);
    if (gain != 1.0)
        for (auto& v : z)
            v *= gain;

    if (domain.iq_gain_imbalance_db != 0.0 || domain.iq_phase_imbalance_deg != 0.0) {
        const double gi = std::pow(10.0, domain.iq_gain_imbalance_db / 40.0);
        const double gq = std::pow(10.0, -domain.iq_gain_imbalance_db / 40.0);
        const double phi = domain.iq_phase_imbalance_deg * M_PI / 180.0;
        const double cphi = std::cos(phi), sphi = std::sin(phi);
        for (auto& v : z) {
            const double i0 = v.real(), q0 = v.imag();
            v = {gi * i0, gq * (q0 * cphi + i0 * sphi)};
        }
    }

    if (domain.cfo_normalized != 0.0) {
        for (int n = 0; n < kBlockSamples; ++n) {
            const double ang = 2.0 * M_PI * domain.cfo_normalized * n;
            z[static_cast<std::size_t>(n)] *= std::complex<double>(std::cos(ang), std::sin(ang));
        }
    }

    if (domain.phase_noise_std > 0.0) {
        Rng pn_rng(mix_seed(seed, domain.seed_offset, kTagPhaseNoise));
        double theta = 0.0;
        for (auto& v : z) {
            theta += domain.phase_noise_std * pn_rng.normal();
            v *= std::complex<double>(std::cos(theta), std::sin(theta));
        }
    }

    // AWGN at the requested SNR relative to the impaired signal power.
    double sig_power = 0.0;
    for (const auto& v : z)
        sig_power += std::norm(v);
    sig_power /= kBlockSamples;
    const double noise_power = sig_power * std::pow(10.0, -snr_db / 10.0);
    const double noise_std = std::sqrt(noise_power / 2.0);
    Rng noise_rng(mix_seed(seed, domain.seed_offset, kTagAwgn));
    IQBlock out;
    for (int n = 0; n < kBlockSamples; ++n) {
        const auto& v = z[static_cast<std::size_t>(n)];
        out.at(0, n) = v.real() + noise_std * noise_rng.normal();
        out.at(1, n) = v.imag() + noise_std * noise_rng.normal();
    }
    return out;
}

// One handle per domain, each holding 24 beams x blocks_per_beam captures in
// canonical beam-major order. Block seeds mix the domain index, so no block
// repeats across domains.
inline std::map<std::string, DatasetHandle> synth_dataset(
    const std::vector<SyntheticDomainConfig>& domains, int blocks_per_beam,
    double snr_db, std::uint64_t seed) {
    if (domains.empty())
        throw ArgumentError("synth_dataset: empty domain list");
    if (blocks_per_beam < 1)
        throw ArgumentError("synth_dataset: blocks_per_beam must be >= 1");
    if (snr_db < kSnrDbMin || snr_db > kSnrDbMax)
        throw ArgumentError("synth_dataset: snr_db outside dataset range [" +
                            std::to_string(kSnrDbMin) + ", " + std::to_string(kSnrDbMax) + "]");

    std::map<std::string, DatasetHandle> out;
    for (std::size_t d = 0; d < domains.size(); ++d) {
        const auto& cfg = domains[d];
        cfg.validate();
        if (out.count(cfg.name))
            throw ArgumentError("synth_dataset: duplicate domain name '" + cfg.name + "'");
        DatasetHandle h;
        h.source = DataSource::kSynthetic;
        h.tag = DomainTag{cfg.name, "g0", snr_db};
        h.blocks.reserve(static_cast<std::size_t>(kNumBeams) * static_cast<std::size_t>(blocks_per_beam));
        for (int beam = 0; beam < kNumBeams; ++beam) {
            for (int i = 0; i < blocks_per_beam; ++i) {
                const std::uint64_t block_seed =
                    mix_seed(seed, static_cast<std::uint64_t>(d),
                             static_cast<std::uint64_t>(beam), static_cast<std::uint64_t>(i));
                LabeledBlock lb;
                lb.block = synth_beam_block(beam, cfg, snr_db, block_seed);
                lb.beam = beam;
                lb.domain = h.tag;
                h.blocks.push_back(std::move(lb));
            }
        }
        h.rebuild_index();
        out.emplace(cfg.name, std::move(h));
    }
    return out;
}

} // namespace protobeam
