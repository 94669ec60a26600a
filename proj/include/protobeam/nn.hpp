#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "protobeam/errors.hpp"
#include "protobeam/tensor.hpp"

namespace protobeam {
namespace nn {

// ---------------------------------------------------------------------------
// 1-D convolution
// ---------------------------------------------------------------------------

struct ConvSpec {
    int in_ch = 0;
    int out_ch = 0;
    int kernel = 1;
    int stride = 1;
    int pad = 0;

    int out_len(int in_len) const { return (in_len + 2 * pad - kernel) / stride + 1; }
    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_ch) * in_ch * kernel;
    }
};

// Valid output range [t_lo, t_hi) for kernel offset k: 0 <= t*s + k - p < in_len.
inline void conv_tap_range(int in_len, int out_len, int k, int stride, int pad, int& t_lo,
                           int& t_hi) {
    int lo = 0;
    const int shift = k - pad;
    if (shift < 0)
        lo = (-shift + stride - 1) / stride;
    int hi = out_len;
    const int max_x = in_len - 1 - shift;
    if (max_x < 0)
        hi = 0;
    else
        hi = std::min(out_len, max_x / stride + 1);
    t_lo = lo;
    t_hi = std::max(hi, lo);
}

// y[i][oc][t] = b[oc] + sum_{ic,k} w[oc][ic][k] * x[i][ic][t*stride + k - pad]
inline void conv1d_forward(const ConvSpec& s, const double* w, const double* b, const Tensor& x,
                           Tensor& y) {
    const int in_len = x.length;
    const int out_len = s.out_len(in_len);
    y = Tensor(x.n, s.out_ch, out_len);
    for (int i = 0; i < x.n; ++i) {
        for (int oc = 0; oc < s.out_ch; ++oc) {
            double* yo = y.at(i, oc);
            const double bias = b ? b[oc] : 0.0;
            for (int t = 0; t < out_len; ++t)
                yo[t] = bias;
            for (int ic = 0; ic < s.in_ch; ++ic) {
                const double* xi = x.at(i, ic);
                const double* wp = w + (static_cast<std::size_t>(oc) * s.in_ch + ic) * s.kernel;
                for (int k = 0; k < s.kernel; ++k) {
                    const double wk = wp[k];
                    int t_lo, t_hi;
                    conv_tap_range(in_len, out_len, k, s.stride, s.pad, t_lo, t_hi);
                    const double* xs = xi + (k - s.pad);
                    if (s.stride == 1) {
                        for (int t = t_lo; t < t_hi; ++t)
                            yo[t] += wk * xs[t];
                    } else {
                        for (int t = t_lo; t < t_hi; ++t)
                            yo[t] += wk * xs[static_cast<std::size_t>(t) * s.stride];
                    }
                }
            }
        }
    }
}

// Gradients wrt input (optional), weights and bias. gw/gb are accumulated
// into, so callers zero them when starting a fresh backward pass.
inline void conv1d_backward(const ConvSpec& s, const double* w, const Tensor& x, const Tensor& gy,
                            Tensor* gx, double* gw, double* gb) {
    const int in_len = x.length;
    const int out_len = gy.length;
    if (gx)
        *gx = Tensor(x.n, s.in_ch, in_len);
    for (int i = 0; i < x.n; ++i) {
        for (int oc = 0; oc < s.out_ch; ++oc) {
            const double* g = gy.at(i, oc);
            if (gb) {
                double acc = 0.0;
                for (int t = 0; t < out_len; ++t)
                    acc += g[t];
                gb[oc] += acc;
            }
            for (int ic = 0; ic < s.in_ch; ++ic) {
                const double* xi = x.at(i, ic);
                double* gxi = gx ? gx->at(i, ic) : nullptr;
                const std::size_t woff = (static_cast<std::size_t>(oc) * s.in_ch + ic) * s.kernel;
                for (int k = 0; k < s.kernel; ++k) {
                    int t_lo, t_hi;
                    conv_tap_range(in_len, out_len, k, s.stride, s.pad, t_lo, t_hi);
                    const int shift = k - s.pad;
                    if (gw) {
                        // Four-way unrolled accumulation in a fixed order.
                        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                        int t = t_lo;
                        if (s.stride == 1) {
                            const double* xs = xi + shift;
                            for (; t + 3 < t_hi; t += 4) {
                                a0 += g[t] * xs[t];
                                a1 += g[t + 1] * xs[t + 1];
                                a2 += g[t + 2] * xs[t + 2];
                                a3 += g[t + 3] * xs[t + 3];
                            }
                            for (; t < t_hi; ++t)
                                a0 += g[t] * xs[t];
                        } else {
                            for (; t < t_hi; ++t)
                                a0 += g[t] * xi[static_cast<std::size_t>(t) * s.stride + shift];
                        }
                        gw[woff + static_cast<std::size_t>(k)] += (a0 + a1) + (a2 + a3);
                    }
                    if (gxi) {
                        const double wk = w[woff + static_cast<std::size_t>(k)];
                        if (s.stride == 1) {
                            double* gxs = gxi + shift;
                            for (int tt = t_lo; tt < t_hi; ++tt)
                                gxs[tt] += wk * g[tt];
                        } else {
                            for (int tt = t_lo; tt < t_hi; ++tt)
                                gxi[static_cast<std::size_t>(tt) * s.stride + shift] += wk * g[tt];
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Batch normalization over (batch, time) per channel
// ---------------------------------------------------------------------------

inline constexpr double kBnEpsilon = 1e-5;

// Per-channel batch statistics retained for the backward pass. xhat is
// recomputed from the cached input in backward, which keeps dense-block
// memory linear in the final feature-map width.
struct BatchNormCache {
    std::vector<double> mean;
    std::vector<double> inv_std;
};

// Training mode: batch statistics over (batch, time) for the first use_ch
// channels of x; updates running stats in place when non-null.
inline void batchnorm_forward_train(const double* gamma, const double* beta, const Tensor& x,
                                    int use_ch, Tensor& y, BatchNormCache& cache,
                                    double* running_mean, double* running_var, double momentum) {
    const int C = use_ch;
    const std::size_t count = static_cast<std::size_t>(x.n) * x.length;
    y = Tensor(x.n, C, x.length);
    cache.mean.assign(static_cast<std::size_t>(C), 0.0);
    cache.inv_std.assign(static_cast<std::size_t>(C), 0.0);
    for (int c = 0; c < C; ++c) {
        double sum = 0.0;
        for (int i = 0; i < x.n; ++i) {
            const double* xi = x.at(i, c);
            for (int t = 0; t < x.length; ++t)
                sum += xi[t];
        }
        const double mean = sum / static_cast<double>(count);
        double ssq = 0.0;
        for (int i = 0; i < x.n; ++i) {
            const double* xi = x.at(i, c);
            for (int t = 0; t < x.length; ++t) {
                const double d = xi[t] - mean;
                ssq += d * d;
            }
        }
        const double var = ssq / static_cast<double>(count);
        const double inv_std = 1.0 / std::sqrt(var + kBnEpsilon);
        cache.mean[static_cast<std::size_t>(c)] = mean;
        cache.inv_std[static_cast<std::size_t>(c)] = inv_std;
        const double g = gamma[c], bt = beta[c];
        for (int i = 0; i < x.n; ++i) {
            const double* xi = x.at(i, c);
            double* yo = y.at(i, c);
            for (int t = 0; t < x.length; ++t)
                yo[t] = g * (xi[t] - mean) * inv_std + bt;
        }
        if (running_mean && running_var) {
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean;
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var;
        }
    }
}

// Inference mode: running statistics only, so outputs are independent of the
// batch composition.
inline void batchnorm_forward_eval(const double* gamma, const double* beta,
                                   const double* running_mean, const double* running_var,
                                   const Tensor& x, int use_ch, Tensor& y) {
    y = Tensor(x.n, use_ch, x.length);
    for (int c = 0; c < use_ch; ++c) {
        const double inv_std = 1.0 / std::sqrt(running_var[c] + kBnEpsilon);
        const double g = gamma[c], bt = beta[c], m = running_mean[c];
        for (int i = 0; i < x.n; ++i) {
            const double* xi = x.at(i, c);
            double* yo = y.at(i, c);
            for (int t = 0; t < x.length; ++t)
                yo[t] = g * (xi[t] - m) * inv_std + bt;
        }
    }
}

// Backward through batch statistics. x is the forward input (first use_ch
// channels); gx receives d/dx sized (n, use_ch, len).
inline void batchnorm_backward(const double* gamma, const Tensor& x, int use_ch,
                               const BatchNormCache& cache, const Tensor& gy, Tensor& gx,
                               double* ggamma, double* gbeta) {
    const double count = static_cast<double>(gy.n) * gy.length;
    gx = Tensor(gy.n, use_ch, gy.length);
    for (int c = 0; c < use_ch; ++c) {
        const double mean = cache.mean[static_cast<std::size_t>(c)];
        const double inv_std = cache.inv_std[static_cast<std::size_t>(c)];
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (int i = 0; i < gy.n; ++i) {
            const double* g = gy.at(i, c);
            const double* xi = x.at(i, c);
            for (int t = 0; t < gy.length; ++t) {
                sum_gy += g[t];
                sum_gy_xhat += g[t] * (xi[t] - mean) * inv_std;
            }
        }
        ggamma[c] += sum_gy_xhat;
        gbeta[c] += sum_gy;
        const double scale = gamma[c] * inv_std / count;
        for (int i = 0; i < gy.n; ++i) {
            const double* g = gy.at(i, c);
            const double* xi = x.at(i, c);
            double* gxo = gx.at(i, c);
            for (int t = 0; t < gy.length; ++t) {
                const double xhat = (xi[t] - mean) * inv_std;
                gxo[t] = scale * (count * g[t] - sum_gy - xhat * sum_gy_xhat);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pointwise and pooling layers
// ---------------------------------------------------------------------------

inline void relu_forward(const Tensor& x, Tensor& y) {
    y = Tensor(x.n, x.channels, x.length);
    for (std::size_t i = 0; i < x.v.size(); ++i)
        y.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
}

inline void relu_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
    gx = Tensor(x.n, x.channels, x.length);
    for (std::size_t i = 0; i < x.v.size(); ++i)
        gx.v[i] = x.v[i] > 0.0 ? gy.v[i] : 0.0;
}

// Max pool, kernel 3, stride 2, pad 1. Ties resolve to the earliest index.
inline void maxpool3_forward(const Tensor& x, Tensor& y, std::vector<std::int32_t>& argmax) {
    const int out_len = (x.length + 2 - 3) / 2 + 1;
    y = Tensor(x.n, x.channels, out_len);
    argmax.assign(y.v.size(), 0);
    std::size_t oidx = 0;
    for (int i = 0; i < x.n; ++i) {
        for (int c = 0; c < x.channels; ++c) {
            const double* xi = x.at(i, c);
            double* yo = y.at(i, c);
            for (int t = 0; t < out_len; ++t, ++oidx) {
                const int start = 2 * t - 1;
                double best = -std::numeric_limits<double>::infinity();
                int best_j = -1;
                for (int k = 0; k < 3; ++k) {
                    const int j = start + k;
                    if (j < 0 || j >= x.length)
                        continue;
                    if (xi[j] > best) {
                        best = xi[j];
                        best_j = j;
                    }
                }
                yo[t] = best;
                argmax[oidx] = best_j;
            }
        }
    }
}

inline void maxpool3_backward(const Tensor& x, const Tensor& gy,
                              const std::vector<std::int32_t>& argmax, Tensor& gx) {
    gx = Tensor(x.n, x.channels, x.length);
    std::size_t oidx = 0;
    for (int i = 0; i < gy.n; ++i) {
        for (int c = 0; c < gy.channels; ++c) {
            const double* g = gy.at(i, c);
            double* gxo = gx.at(i, c);
            for (int t = 0; t < gy.length; ++t, ++oidx)
                gxo[argmax[oidx]] += g[t];
        }
    }
}

// Average pool, kernel 2, stride 2 (even input length).
inline void avgpool2_forward(const Tensor& x, Tensor& y) {
    const int out_len = x.length / 2;
    y = Tensor(x.n, x.channels, out_len);
    for (int i = 0; i < x.n; ++i) {
        for (int c = 0; c < x.channels; ++c) {
            const double* xi = x.at(i, c);
            double* yo = y.at(i, c);
            for (int t = 0; t < out_len; ++t)
                yo[t] = 0.5 * (xi[2 * t] + xi[2 * t + 1]);
        }
    }
}

inline void avgpool2_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
    gx = Tensor(x.n, x.channels, x.length);
    for (int i = 0; i < gy.n; ++i) {
        for (int c = 0; c < gy.channels; ++c) {
            const double* g = gy.at(i, c);
            double* gxo = gx.at(i, c);
            for (int t = 0; t < gy.length; ++t) {
                gxo[2 * t] = 0.5 * g[t];
                gxo[2 * t + 1] = 0.5 * g[t];
            }
        }
    }
}

inline void global_avgpool_forward(const Tensor& x, Matrix& y) {
    y = Matrix(x.n, x.channels);
    const double inv = 1.0 / x.length;
    for (int i = 0; i < x.n; ++i)
        for (int c = 0; c < x.channels; ++c) {
            const double* xi = x.at(i, c);
            double acc = 0.0;
            for (int t = 0; t < x.length; ++t)
                acc += xi[t];
            y.at(i, c) = acc * inv;
        }
}

inline void global_avgpool_backward(const Matrix& gy, int length, Tensor& gx) {
    gx = Tensor(gy.rows, gy.cols, length);
    const double inv = 1.0 / length;
    for (int i = 0; i < gy.rows; ++i)
        for (int c = 0; c < gy.cols; ++c) {
            const double g = gy.at(i, c) * inv;
            double* gxo = gx.at(i, c);
            for (int t = 0; t < length; ++t)
                gxo[t] = g;
        }
}

// ---------------------------------------------------------------------------
// Fully connected head
// ---------------------------------------------------------------------------

// y[i][o] = b[o] + sum_c w[o][c] * x[i][c]
inline void linear_forward(const double* w, const double* b, const Matrix& x, int out_dim,
                           Matrix& y) {
    y = Matrix(x.rows, out_dim);
    for (int i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double* yo = y.row(i);
        for (int o = 0; o < out_dim; ++o) {
            const double* wo = w + static_cast<std::size_t>(o) * x.cols;
            double acc = b ? b[o] : 0.0;
            for (int c = 0; c < x.cols; ++c)
                acc += wo[c] * xi[c];
            yo[o] = acc;
        }
    }
}

inline void linear_backward(const double* w, const Matrix& x, const Matrix& gy, Matrix& gx,
                            double* gw, double* gb) {
    const int out_dim = gy.cols;
    gx = Matrix(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        const double* g = gy.row(i);
        double* gxi = gx.row(i);
        for (int o = 0; o < out_dim; ++o) {
            const double go = g[o];
            if (gb)
                gb[o] += go;
            const double* wo = w + static_cast<std::size_t>(o) * x.cols;
            double* gwo = gw + static_cast<std::size_t>(o) * x.cols;
            for (int c = 0; c < x.cols; ++c) {
                gwo[c] += go * xi[c];
                gxi[c] += go * wo[c];
            }
        }
    }
}

// Concatenation along the channel axis (DenseNet growth).
inline void concat_channels(const Tensor& a, const Tensor& b, Tensor& out) {
    out = Tensor(a.n, a.channels + b.channels, a.length);
    for (int i = 0; i < a.n; ++i) {
        for (int c = 0; c < a.channels; ++c)
            std::copy(a.at(i, c), a.at(i, c) + a.length, out.at(i, c));
        for (int c = 0; c < b.channels; ++c)
            std::copy(b.at(i, c), b.at(i, c) + b.length, out.at(i, a.channels + c));
    }
}

} // namespace nn
} // namespace protobeam
