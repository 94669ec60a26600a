#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "protobeam/errors.hpp"
#include "protobeam/iq_block.hpp"
#include "protobeam/rng.hpp"

namespace protobeam {

enum class DataSource { kHdf5, kSynthetic };
enum class Protocol { kTtsa, kTota };

inline const char* protocol_name(Protocol p) {
    return p == Protocol::kTtsa ? "ttsa" : "tota";
}

inline Protocol parse_protocol(const std::string& s) {
    if (s == "ttsa" || s == "TTSA")
        return Protocol::kTtsa;
    if (s == "tota" || s == "TOTA")
        return Protocol::kTota;
    throw ArgumentError("unknown protocol '" + s + "' (expected ttsa or tota)");
}

// Read-only collection of labeled blocks with per-beam indexing. Canonical
// block order is beam-major, then generation/file index within the beam.
struct DatasetHandle {
    DataSource source = DataSource::kSynthetic;
    DomainTag tag;
    std::vector<LabeledBlock> blocks;
    std::array<std::vector<int>, kNumBeams> by_beam;

    int num_blocks() const { return static_cast<int>(blocks.size()); }

    std::vector<int> beams_present() const {
        std::vector<int> out;
        for (int b = 0; b < kNumBeams; ++b)
            if (!by_beam[static_cast<std::size_t>(b)].empty())
                out.push_back(b);
        return out;
    }

    int min_blocks_per_beam() const {
        int m = -1;
        for (int b = 0; b < kNumBeams; ++b) {
            const int n = static_cast<int>(by_beam[static_cast<std::size_t>(b)].size());
            if (n > 0 && (m < 0 || n < m))
                m = n;
        }
        return m < 0 ? 0 : m;
    }

    void rebuild_index() {
        for (auto& v : by_beam)
            v.clear();
        for (int i = 0; i < num_blocks(); ++i) {
            const int beam = blocks[static_cast<std::size_t>(i)].beam;
            check_beam_index(beam, "DatasetHandle");
            by_beam[static_cast<std::size_t>(beam)].push_back(i);
        }
    }
};

// Non-owning selection of blocks inside one handle. Splits and episodes
// reference blocks by index, so disjointness is checkable by identity.
struct Subset {
    const DatasetHandle* handle = nullptr;
    std::array<std::vector<int>, kNumBeams> by_beam;

    int num_blocks() const {
        int n = 0;
        for (const auto& v : by_beam)
            n += static_cast<int>(v.size());
        return n;
    }

    std::vector<int> beams_present() const {
        std::vector<int> out;
        for (int b = 0; b < kNumBeams; ++b)
            if (!by_beam[static_cast<std::size_t>(b)].empty())
                out.push_back(b);
        return out;
    }

    int min_blocks_per_beam() const {
        int m = -1;
        for (const auto& v : by_beam) {
            const int n = static_cast<int>(v.size());
            if (n > 0 && (m < 0 || n < m))
                m = n;
        }
        return m < 0 ? 0 : m;
    }

    std::vector<int> all_indices() const {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(num_blocks()));
        for (const auto& v : by_beam)
            out.insert(out.end(), v.begin(), v.end());
        return out;
    }

    const LabeledBlock& block(int index) const {
        return handle->blocks[static_cast<std::size_t>(index)];
    }
};

inline Subset full_subset(const DatasetHandle& h) {
    Subset s;
    s.handle = &h;
    s.by_beam = h.by_beam;
    return s;
}

// Splits a subset per beam into (kept, held_out) where held_out receives
// round(fraction * n) blocks per beam. Selection is a seeded shuffle.
inline std::pair<Subset, Subset> split_subset(const Subset& s, double fraction,
                                              std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ArgumentError("split_subset: fraction must lie in (0, 1)");
    Subset kept, held;
    kept.handle = held.handle = s.handle;
    for (int b = 0; b < kNumBeams; ++b) {
        std::vector<int> idx = s.by_beam[static_cast<std::size_t>(b)];
        if (idx.empty())
            continue;
        Rng rng(mix_seed(seed, 0x5b1u, static_cast<std::uint64_t>(b)));
        rng.shuffle(idx);
        const int n_held = static_cast<int>(
            std::llround(fraction * static_cast<double>(idx.size())));
        auto& hv = held.by_beam[static_cast<std::size_t>(b)];
        auto& kv = kept.by_beam[static_cast<std::size_t>(b)];
        hv.assign(idx.begin(), idx.begin() + n_held);
        kv.assign(idx.begin() + n_held, idx.end());
        std::sort(hv.begin(), hv.end());
        std::sort(kv.begin(), kv.end());
    }
    return {kept, held};
}

// TTSA/TOTA split. TTSA partitions the single domain into a train set and a
// held-out query pool; the support pool aliases the train set. TOTA trains on
// the full train domain and partitions the test domain into support and query
// pools, so every deployment-time block comes from the unseen antenna.
struct Split {
    Protocol protocol = Protocol::kTtsa;
    Subset train;
    Subset support_pool;
    Subset query_pool;
};

inline Split make_split(const DatasetHandle& train_domain, const DatasetHandle& test_domain,
                        Protocol protocol, double query_fraction, std::uint64_t seed) {
    if (!(query_fraction > 0.0 && query_fraction < 1.0))
        throw ArgumentError("make_split: query_fraction must lie in (0, 1)");
    Split out;
    out.protocol = protocol;
    if (protocol == Protocol::kTtsa) {
        if (&train_domain != &test_domain)
            throw ArgumentError("make_split: TTSA requires the same handle for train and test");
        auto [kept, held] = split_subset(full_subset(train_domain), query_fraction, seed);
        out.train = kept;
        out.support_pool = kept;
        out.query_pool = held;
    } else {
        if (&train_domain == &test_domain || train_domain.tag == test_domain.tag)
            throw ArgumentError("make_split: TOTA requires distinct domains");
        out.train = full_subset(train_domain);
        auto [support, query] = split_subset(full_subset(test_domain), query_fraction, seed);
        out.support_pool = support;
        out.query_pool = query;
    }
    return out;
}

// Concatenates handles (e.g. the per-gain datasets of one antenna) into a
// pooled handle under a new tag. Blocks are re-ordered into canonical
// beam-major order, preserving source order within each beam.
inline DatasetHandle merge_handles(const std::vector<const DatasetHandle*>& parts,
                                   const DomainTag& tag) {
    if (parts.empty())
        throw ArgumentError("merge_handles: empty handle list");
    DatasetHandle out;
    out.source = parts.front()->source;
    out.tag = tag;
    for (int b = 0; b < kNumBeams; ++b)
        for (const DatasetHandle* h : parts)
            for (int i : h->by_beam[static_cast<std::size_t>(b)])
                out.blocks.push_back(h->blocks[static_cast<std::size_t>(i)]);
    out.rebuild_index();
    return out;
}

// First n blocks per beam in canonical order; used by ablation runs.
inline DatasetHandle truncate_per_beam(const DatasetHandle& h, int n) {
    if (n < 0)
        throw ArgumentError("truncate_per_beam: n must be >= 0");
    DatasetHandle out;
    out.source = h.source;
    out.tag = h.tag;
    for (int b = 0; b < kNumBeams; ++b) {
        const auto& idx = h.by_beam[static_cast<std::size_t>(b)];
        const int take = std::min<int>(n, static_cast<int>(idx.size()));
        for (int i = 0; i < take; ++i)
            out.blocks.push_back(h.blocks[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    }
    out.rebuild_index();
    return out;
}

} // namespace protobeam
