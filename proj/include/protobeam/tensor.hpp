#pragma once

#include <cstddef>
#include <vector>

namespace protobeam {

// Batch of multichannel 1-D signals, contiguous time-major innermost.
struct Tensor {
    int n = 0;
    int channels = 0;
    int length = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int c_, int l_)
        : n(n_), channels(c_), length(l_),
          v(static_cast<std::size_t>(n_) * c_ * l_, 0.0) {}

    double* at(int i, int c) {
        return v.data() + (static_cast<std::size_t>(i) * channels + c) * length;
    }
    const double* at(int i, int c) const {
        return v.data() + (static_cast<std::size_t>(i) * channels + c) * length;
    }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

} // namespace protobeam
