#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "protobeam/embedding.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/rng.hpp"
#include "protobeam/tensor.hpp"

namespace protobeam {

struct PcaProjection {
    std::array<std::vector<double>, 2> components; // orthonormal directions
    std::array<double, 2> explained_variance;      // top-2 covariance eigenvalues
    std::vector<int> prototype_labels;
    std::vector<std::array<double, 2>> projected_prototypes;
    std::vector<int> query_labels;
    std::vector<std::array<double, 2>> projected_queries;
};

namespace pca_detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Columns of V are
// the eigenvectors of A's original value.
inline void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& eigenvalues,
                         std::vector<double>& v) {
    auto A = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r) * n + c]; };
    auto V = [&](int r, int c) -> double& { return v[static_cast<std::size_t>(r) * n + c]; };
    v.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        V(i, i) = 1.0;

    double fro = 0.0;
    for (double x : a)
        fro += x * x;
    const double tol = 1e-24 * std::max(fro, 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q)
                off += A(p, q) * A(p, q);
        if (off <= tol)
            break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (apq == 0.0)
                    continue;
                const double app = A(p, p), aqq = A(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    eigenvalues.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        eigenvalues[static_cast<std::size_t>(i)] = A(i, i);
}

inline void fix_sign(std::vector<double>& comp) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < comp.size(); ++i)
        if (std::abs(comp[i]) > std::abs(comp[arg]))
            arg = i;
    if (comp[arg] < 0.0)
        for (double& x : comp)
            x = -x;
}

} // namespace pca_detail

// Top-2 principal directions of the pooled prototype + query embeddings
// (queries capped by seeded subsampling). Components are orthonormal with
// the largest-magnitude entry of each made positive; explained variance is
// the corresponding sample-covariance eigenvalue.
inline PcaProjection pca_project(const PrototypeSet& protos, const Matrix& query_emb,
                                 const std::vector<int>& query_labels, int query_cap = 2000,
                                 std::uint64_t seed = 0) {
    const int dim = protos.dim();
    if (dim == 0)
        throw ArgumentError("pca_project: empty prototype set");
    if (query_emb.rows != static_cast<int>(query_labels.size()))
        throw ArgumentError("pca_project: query labels do not match embedding rows");
    if (query_emb.rows > 0 && query_emb.cols != dim)
        throw ArgumentError("pca_project: query dim != prototype dim");
    if (query_cap < 0)
        throw ArgumentError("pca_project: query_cap must be >= 0");

    std::vector<int> pick;
    if (query_emb.rows > query_cap) {
        Rng rng(mix_seed(seed, 0xbca5ULL));
        pick = rng.sample_without_replacement(query_emb.rows, query_cap);
        std::sort(pick.begin(), pick.end());
    } else {
        pick.resize(static_cast<std::size_t>(query_emb.rows));
        for (int i = 0; i < query_emb.rows; ++i)
            pick[static_cast<std::size_t>(i)] = i;
    }

    const int n_rows = static_cast<int>(protos.size()) + static_cast<int>(pick.size());
    Matrix pooled(n_rows, dim);
    PcaProjection out;
    int r = 0;
    for (const auto& [beam, p] : protos.prototypes) {
        std::copy(p.begin(), p.end(), pooled.row(r));
        out.prototype_labels.push_back(beam);
        ++r;
    }
    for (int i : pick) {
        std::copy(query_emb.row(i), query_emb.row(i) + dim, pooled.row(r));
        out.query_labels.push_back(query_labels[static_cast<std::size_t>(i)]);
        ++r;
    }

    // Need at least two distinct points for a covariance.
    bool distinct = false;
    for (int i = 1; i < n_rows && !distinct; ++i)
        for (int c = 0; c < dim; ++c)
            if (pooled.at(i, c) != pooled.at(0, c)) {
                distinct = true;
                break;
            }
    if (n_rows < 2 || !distinct)
        throw ArgumentError("pca_project: need at least 2 distinct embedding points");

    std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
    for (int i = 0; i < n_rows; ++i)
        for (int c = 0; c < dim; ++c)
            mean[static_cast<std::size_t>(c)] += pooled.at(i, c);
    for (double& m : mean)
        m /= n_rows;
    for (int i = 0; i < n_rows; ++i)
        for (int c = 0; c < dim; ++c)
            pooled.at(i, c) -= mean[static_cast<std::size_t>(c)];

    std::vector<double> cov(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < n_rows; ++i) {
        const double* row = pooled.row(i);
        for (int a = 0; a < dim; ++a)
            for (int b = a; b < dim; ++b)
                cov[static_cast<std::size_t>(a) * dim + b] += row[a] * row[b];
    }
    const double inv = 1.0 / (n_rows - 1);
    for (int a = 0; a < dim; ++a)
        for (int b = a; b < dim; ++b) {
            cov[static_cast<std::size_t>(a) * dim + b] *= inv;
            cov[static_cast<std::size_t>(b) * dim + a] = cov[static_cast<std::size_t>(a) * dim + b];
        }

    std::vector<double> eigenvalues, v;
    pca_detail::jacobi_eigen(cov, dim, eigenvalues, v);
    std::vector<int> order(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i)
        order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return eigenvalues[static_cast<std::size_t>(a)] > eigenvalues[static_cast<std::size_t>(b)];
    });
    for (int k = 0; k < 2; ++k) {
        const int col = order[static_cast<std::size_t>(k)];
        auto& comp = out.components[static_cast<std::size_t>(k)];
        comp.resize(static_cast<std::size_t>(dim));
        for (int row2 = 0; row2 < dim; ++row2)
            comp[static_cast<std::size_t>(row2)] = v[static_cast<std::size_t>(row2) * dim + col];
        pca_detail::fix_sign(comp);
        out.explained_variance[static_cast<std::size_t>(k)] =
            eigenvalues[static_cast<std::size_t>(col)];
    }

    auto project = [&](int row_idx) {
        std::array<double, 2> p{0.0, 0.0};
        const double* row = pooled.row(row_idx);
        for (int k = 0; k < 2; ++k)
            for (int c = 0; c < dim; ++c)
                p[static_cast<std::size_t>(k)] +=
                    row[c] * out.components[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
        return p;
    };
    const int n_protos = static_cast<int>(protos.size());
    for (int i = 0; i < n_protos; ++i)
        out.projected_prototypes.push_back(project(i));
    for (int i = 0; i < static_cast<int>(pick.size()); ++i)
        out.projected_queries.push_back(project(n_protos + i));
    return out;
}

} // namespace protobeam
