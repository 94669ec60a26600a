#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "protobeam/errors.hpp"

namespace protobeam {

using Embedding = std::vector<double>;

inline double dot(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline double l2_norm(const Embedding& v) { return std::sqrt(dot(v, v)); }

// Beam label -> class prototype in embedding space.
struct PrototypeSet {
    std::map<int, Embedding> prototypes;
    bool normalized = false;

    std::size_t size() const { return prototypes.size(); }
    int dim() const {
        return prototypes.empty() ? 0 : static_cast<int>(prototypes.begin()->second.size());
    }
};

// Scales every prototype to unit Euclidean norm. Idempotent and
// direction-preserving.
inline PrototypeSet normalize_prototypes(const PrototypeSet& protos) {
    PrototypeSet out;
    out.normalized = true;
    for (const auto& [beam, p] : protos.prototypes) {
        const double n = l2_norm(p);
        if (!(n > 0.0))
            throw DegenerateDataError("normalize_prototypes: prototype for beam " +
                                      std::to_string(beam) + " has zero norm");
        Embedding q(p.size());
        for (std::size_t i = 0; i < p.size(); ++i)
            q[i] = p[i] / n;
        out.prototypes.emplace(beam, std::move(q));
    }
    return out;
}

} // namespace protobeam
