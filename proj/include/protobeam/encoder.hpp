#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "protobeam/embedding.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/iq_block.hpp"
#include "protobeam/nn.hpp"
#include "protobeam/preprocess.hpp"
#include "protobeam/rng.hpp"
#include "protobeam/tensor.hpp"

namespace protobeam {

// DenseNet-style 1-D convolutional encoder:
//   stem: conv(k7, s2) from 2 channels to stem_channels, max-pool(k3, s2)
//   dense layer: batchnorm -> relu -> conv(k3, pad 1) producing growth_rate
//     channels, concatenated onto the running feature map
//   transition between blocks: 1x1 conv compressing channels, avg-pool s2
//   head: global average pool over time, linear map to embedding_dim
struct EncoderConfig {
    int num_dense_blocks = 3;
    int layers_per_block = 5;
    int growth_rate = 16;
    int stem_channels = 32;
    double transition_compression = 0.5;
    int embedding_dim = 128;
    int input_length = kBlockSamples;
    bool small_mode = false; // shrinks every width for finite-difference tests

    // Dimensions actually built; small_mode overrides the widths.
    EncoderConfig resolved() const {
        EncoderConfig r = *this;
        if (small_mode) {
            r.num_dense_blocks = 1;
            r.layers_per_block = 2;
            r.growth_rate = 2;
            r.stem_channels = 4;
            r.embedding_dim = 4;
            r.input_length = 64;
        }
        return r;
    }

    void validate() const {
        const EncoderConfig r = resolved();
        if (r.num_dense_blocks < 1 || r.layers_per_block < 1 || r.growth_rate < 1 ||
            r.stem_channels < 1 || r.embedding_dim < 1 || r.input_length < 16)
            throw ArgumentError("EncoderConfig: dimensions must be positive (input_length >= 16)");
        if (!(r.transition_compression > 0.0 && r.transition_compression <= 1.0))
            throw ArgumentError("EncoderConfig: transition_compression must lie in (0, 1]");
    }
};

struct ParamArray {
    std::string name;
    std::vector<int> shape;
    std::vector<double> v;
    bool trainable = true;

    std::size_t count() const { return v.size(); }
};

// Static channel/length schedule derived from a resolved config.
struct EncoderPlan {
    struct BlockDims {
        int ch_start = 0; // feature-map width entering the block
        int ch_end = 0;   // width after all layers
        int len = 0;
    };
    struct TransDims {
        int in_ch = 0, out_ch = 0, in_len = 0, out_len = 0;
    };

    int stem_conv_len = 0;
    int stem_pool_len = 0;
    std::vector<BlockDims> blocks;
    std::vector<TransDims> transitions;
    int final_channels = 0;
    int final_len = 0;
};

inline EncoderPlan make_encoder_plan(const EncoderConfig& resolved) {
    EncoderPlan p;
    p.stem_conv_len = (resolved.input_length + 2 * 3 - 7) / 2 + 1;
    p.stem_pool_len = (p.stem_conv_len + 2 * 1 - 3) / 2 + 1;
    int ch = resolved.stem_channels;
    int len = p.stem_pool_len;
    for (int b = 0; b < resolved.num_dense_blocks; ++b) {
        EncoderPlan::BlockDims bd;
        bd.ch_start = ch;
        bd.ch_end = ch + resolved.layers_per_block * resolved.growth_rate;
        bd.len = len;
        p.blocks.push_back(bd);
        ch = bd.ch_end;
        if (b + 1 < resolved.num_dense_blocks) {
            EncoderPlan::TransDims td;
            td.in_ch = ch;
            td.out_ch = std::max(1, static_cast<int>(std::floor(
                                        ch * resolved.transition_compression)));
            td.in_len = len;
            td.out_len = len / 2;
            p.transitions.push_back(td);
            ch = td.out_ch;
            len = td.out_len;
        }
    }
    p.final_channels = ch;
    p.final_len = len;
    if (p.stem_pool_len < 2 || p.final_len < 1)
        throw ArgumentError("EncoderConfig: input_length too short for the pooling schedule");
    return p;
}

// Named parameter arrays in canonical order, plus the config and seed they
// were created from. Batchnorm running statistics travel as non-trainable
// buffers.
struct EncoderWeights {
    EncoderConfig config;
    std::uint64_t init_seed = 0;
    std::vector<ParamArray> params;
    std::map<std::string, int> index;

    void rebuild_index() {
        index.clear();
        for (int i = 0; i < static_cast<int>(params.size()); ++i)
            index.emplace(params[static_cast<std::size_t>(i)].name, i);
    }

    ParamArray& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end())
            throw ArgumentError("EncoderWeights: no parameter '" + name + "'");
        return params[static_cast<std::size_t>(it->second)];
    }
    const ParamArray& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end())
            throw ArgumentError("EncoderWeights: no parameter '" + name + "'");
        return params[static_cast<std::size_t>(it->second)];
    }

    std::size_t num_trainable() const {
        std::size_t n = 0;
        for (const auto& p : params)
            if (p.trainable)
                n += p.count();
        return n;
    }

    bool all_finite() const {
        for (const auto& p : params)
            for (double x : p.v)
                if (!std::isfinite(x))
                    return false;
        return true;
    }
};

namespace encoder_detail {

inline void add_param(EncoderWeights& w, const std::string& name, std::vector<int> shape,
                      bool trainable, double fill = 0.0) {
    ParamArray p;
    p.name = name;
    p.shape = std::move(shape);
    std::size_t n = 1;
    for (int d : p.shape)
        n *= static_cast<std::size_t>(d);
    p.v.assign(n, fill);
    p.trainable = trainable;
    w.params.push_back(std::move(p));
}

inline void he_init(std::vector<double>& v, int fan_in, Rng& rng) {
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (double& x : v)
        x = std_dev * rng.normal();
}

inline std::string block_layer(int b, int l, const char* leaf) {
    return "block" + std::to_string(b) + ".layer" + std::to_string(l) + "." + leaf;
}

} // namespace encoder_detail

inline EncoderWeights encoder_init(const EncoderConfig& config, std::uint64_t seed) {
    using namespace encoder_detail;
    config.validate();
    const EncoderConfig r = config.resolved();
    const EncoderPlan plan = make_encoder_plan(r);

    EncoderWeights w;
    w.config = config;
    w.init_seed = seed;
    Rng rng(mix_seed(seed, 0xe2c0de12ULL));

    add_param(w, "stem.conv.w", {r.stem_channels, kBlockChannels, 7}, true);
    add_param(w, "stem.conv.b", {r.stem_channels}, true);
    he_init(w.params[0].v, kBlockChannels * 7, rng);

    for (int b = 0; b < r.num_dense_blocks; ++b) {
        for (int l = 0; l < r.layers_per_block; ++l) {
            const int ch_in = plan.blocks[static_cast<std::size_t>(b)].ch_start + l * r.growth_rate;
            add_param(w, block_layer(b, l, "bn.gamma"), {ch_in}, true, 1.0);
            add_param(w, block_layer(b, l, "bn.beta"), {ch_in}, true, 0.0);
            add_param(w, block_layer(b, l, "bn.running_mean"), {ch_in}, false, 0.0);
            add_param(w, block_layer(b, l, "bn.running_var"), {ch_in}, false, 1.0);
            add_param(w, block_layer(b, l, "conv.w"), {r.growth_rate, ch_in, 3}, true);
            he_init(w.params.back().v, ch_in * 3, rng);
            add_param(w, block_layer(b, l, "conv.b"), {r.growth_rate}, true);
        }
        if (b + 1 < r.num_dense_blocks) {
            const auto& td = plan.transitions[static_cast<std::size_t>(b)];
            add_param(w, "trans" + std::to_string(b) + ".conv.w", {td.out_ch, td.in_ch, 1}, true);
            he_init(w.params.back().v, td.in_ch, rng);
            add_param(w, "trans" + std::to_string(b) + ".conv.b", {td.out_ch}, true);
        }
    }

    add_param(w, "head.linear.w", {r.embedding_dim, plan.final_channels}, true);
    {
        auto& lin = w.params.back().v;
        const double std_dev = std::sqrt(1.0 / plan.final_channels);
        for (double& x : lin)
            x = std_dev * rng.normal();
    }
    add_param(w, "head.linear.b", {r.embedding_dim}, true);

    w.rebuild_index();
    return w;
}

// Everything the backward pass needs from one forward evaluation.
struct EncoderActivations {
    Tensor input;
    Tensor stem_conv_out;
    std::vector<std::int32_t> stem_argmax;
    // One running feature map per dense block; layer l's batchnorm input is
    // the channel prefix of width ch_start + l * growth.
    std::vector<Tensor> block_features;
    std::vector<std::vector<nn::BatchNormCache>> bn_caches;
    std::vector<Tensor> trans_conv_out; // transition conv output (pre-pool)
    Matrix gap_out;
};

// Gradient arrays aligned with EncoderWeights::params.
struct Grads {
    std::vector<std::vector<double>> g;

    void init_like(const EncoderWeights& w) {
        g.resize(w.params.size());
        for (std::size_t i = 0; i < w.params.size(); ++i)
            g[i].assign(w.params[i].v.size(), 0.0);
    }
    void zero() {
        for (auto& v : g)
            std::fill(v.begin(), v.end(), 0.0);
    }
    double* of(const EncoderWeights& w, const std::string& name) {
        auto it = w.index.find(name);
        if (it == w.index.end())
            throw ArgumentError("Grads: no parameter '" + name + "'");
        return g[static_cast<std::size_t>(it->second)].data();
    }
};

namespace encoder_detail {

// Shared forward walk. In training mode batch statistics are used for every
// batchnorm (and optionally folded into the running stats); in eval mode the
// stored running statistics are used, which makes the result independent of
// batch composition.
inline Matrix forward_impl(const EncoderWeights& w_const, EncoderWeights* w_mut,
                           const Tensor& input, bool training, EncoderActivations* acts,
                           bool update_running) {
    const EncoderWeights& w = w_const;
    const EncoderConfig r = w.config.resolved();
    const EncoderPlan plan = make_encoder_plan(r);
    if (input.channels != kBlockChannels || input.length != r.input_length)
        throw ArgumentError("encoder: input shape mismatch (expected " +
                            std::to_string(kBlockChannels) + "x" +
                            std::to_string(r.input_length) + ")");

    if (acts)
        acts->input = input;

    // Stem.
    nn::ConvSpec stem_spec{kBlockChannels, r.stem_channels, 7, 2, 3};
    Tensor stem_out;
    nn::conv1d_forward(stem_spec, w.at("stem.conv.w").v.data(), w.at("stem.conv.b").v.data(),
                       input, stem_out);
    Tensor pooled;
    std::vector<std::int32_t> argmax;
    nn::maxpool3_forward(stem_out, pooled, argmax);
    if (acts) {
        acts->stem_conv_out = std::move(stem_out);
        acts->stem_argmax = std::move(argmax);
        acts->block_features.clear();
        acts->bn_caches.assign(static_cast<std::size_t>(r.num_dense_blocks), {});
        acts->trans_conv_out.clear();
    }

    Tensor current = std::move(pooled);
    const Tensor* gap_src = nullptr;
    for (int b = 0; b < r.num_dense_blocks; ++b) {
        const auto& bd = plan.blocks[static_cast<std::size_t>(b)];
        // Feature map wide enough for the whole block; prefix = block input.
        Tensor features(current.n, bd.ch_end, bd.len);
        for (int i = 0; i < current.n; ++i)
            for (int c = 0; c < current.channels; ++c)
                std::copy(current.at(i, c), current.at(i, c) + current.length, features.at(i, c));

        if (acts)
            acts->bn_caches[static_cast<std::size_t>(b)].resize(
                static_cast<std::size_t>(r.layers_per_block));

        for (int l = 0; l < r.layers_per_block; ++l) {
            const int ch_in = bd.ch_start + l * r.growth_rate;
            const auto& gamma = w.at(block_layer(b, l, "bn.gamma")).v;
            const auto& beta = w.at(block_layer(b, l, "bn.beta")).v;
            Tensor bn_out;
            if (training) {
                nn::BatchNormCache local_cache;
                nn::BatchNormCache& cache =
                    acts ? acts->bn_caches[static_cast<std::size_t>(b)][static_cast<std::size_t>(l)]
                         : local_cache;
                double* rm = nullptr;
                double* rv = nullptr;
                if (update_running && w_mut) {
                    rm = w_mut->at(block_layer(b, l, "bn.running_mean")).v.data();
                    rv = w_mut->at(block_layer(b, l, "bn.running_var")).v.data();
                }
                nn::batchnorm_forward_train(gamma.data(), beta.data(), features, ch_in, bn_out,
                                            cache, rm, rv, 0.1);
            } else {
                nn::batchnorm_forward_eval(gamma.data(), beta.data(),
                                           w.at(block_layer(b, l, "bn.running_mean")).v.data(),
                                           w.at(block_layer(b, l, "bn.running_var")).v.data(),
                                           features, ch_in, bn_out);
            }
            Tensor relu_out;
            nn::relu_forward(bn_out, relu_out);
            nn::ConvSpec spec{ch_in, r.growth_rate, 3, 1, 1};
            Tensor conv_out;
            nn::conv1d_forward(spec, w.at(block_layer(b, l, "conv.w")).v.data(),
                               w.at(block_layer(b, l, "conv.b")).v.data(), relu_out, conv_out);
            for (int i = 0; i < conv_out.n; ++i)
                for (int c = 0; c < conv_out.channels; ++c)
                    std::copy(conv_out.at(i, c), conv_out.at(i, c) + conv_out.length,
                              features.at(i, ch_in + c));
        }

        if (b + 1 < r.num_dense_blocks) {
            const auto& td = plan.transitions[static_cast<std::size_t>(b)];
            nn::ConvSpec tspec{td.in_ch, td.out_ch, 1, 1, 0};
            Tensor tconv;
            nn::conv1d_forward(tspec, w.at("trans" + std::to_string(b) + ".conv.w").v.data(),
                               w.at("trans" + std::to_string(b) + ".conv.b").v.data(), features,
                               tconv);
            Tensor tpool;
            nn::avgpool2_forward(tconv, tpool);
            if (acts) {
                acts->block_features.push_back(std::move(features));
                acts->trans_conv_out.push_back(std::move(tconv));
            }
            current = std::move(tpool);
        } else {
            if (acts) {
                acts->block_features.push_back(std::move(features));
                gap_src = &acts->block_features.back();
            } else {
                current = std::move(features);
                gap_src = &current;
            }
        }
    }

    Matrix gap;
    nn::global_avgpool_forward(*gap_src, gap);
    if (acts)
        acts->gap_out = gap;
    Matrix emb;
    nn::linear_forward(w.at("head.linear.w").v.data(), w.at("head.linear.b").v.data(), gap,
                       r.embedding_dim, emb);
    return emb;
}

} // namespace encoder_detail

inline Matrix encoder_forward_train(EncoderWeights& w, const Tensor& input,
                                    EncoderActivations& acts, bool update_running = true) {
    return encoder_detail::forward_impl(w, &w, input, true, &acts, update_running);
}

// Loss-preserving variant for finite-difference checks: training-mode
// statistics without mutating the running buffers.
inline Matrix encoder_forward_train_const(const EncoderWeights& w, const Tensor& input) {
    return encoder_detail::forward_impl(w, nullptr, input, true, nullptr, false);
}

inline Matrix encoder_forward_eval(const EncoderWeights& w, const Tensor& input) {
    return encoder_detail::forward_impl(w, nullptr, input, false, nullptr, false);
}

// Backward through the whole encoder given d(loss)/d(embeddings).
inline void encoder_backward(const EncoderWeights& w, const EncoderActivations& acts,
                             const Matrix& g_emb, Grads& grads) {
    using namespace encoder_detail;
    const EncoderConfig r = w.config.resolved();
    const EncoderPlan plan = make_encoder_plan(r);

    Matrix g_gap;
    nn::linear_backward(w.at("head.linear.w").v.data(), acts.gap_out, g_emb, g_gap,
                        grads.of(w, "head.linear.w"), grads.of(w, "head.linear.b"));
    Tensor g_current;
    nn::global_avgpool_backward(g_gap, plan.final_len, g_current);

    for (int b = r.num_dense_blocks - 1; b >= 0; --b) {
        const auto& bd = plan.blocks[static_cast<std::size_t>(b)];
        const Tensor& features = acts.block_features[static_cast<std::size_t>(b)];

        // Gradient wrt the block's full feature map.
        Tensor g_features;
        if (b + 1 < r.num_dense_blocks) {
            const auto& td = plan.transitions[static_cast<std::size_t>(b)];
            Tensor g_tconv;
            nn::avgpool2_backward(acts.trans_conv_out[static_cast<std::size_t>(b)], g_current,
                                  g_tconv);
            nn::ConvSpec tspec{td.in_ch, td.out_ch, 1, 1, 0};
            const std::string tw = "trans" + std::to_string(b) + ".conv.w";
            const std::string tb = "trans" + std::to_string(b) + ".conv.b";
            nn::conv1d_backward(tspec, w.at(tw).v.data(), features, g_tconv, &g_features,
                                grads.of(w, tw), grads.of(w, tb));
        } else {
            g_features = std::move(g_current);
        }

        for (int l = r.layers_per_block - 1; l >= 0; --l) {
            const int ch_in = bd.ch_start + l * r.growth_rate;
            const auto& cache =
                acts.bn_caches[static_cast<std::size_t>(b)][static_cast<std::size_t>(l)];
            const auto& gamma = w.at(block_layer(b, l, "bn.gamma")).v;
            const auto& beta = w.at(block_layer(b, l, "bn.beta")).v;

            // Slice off the gradient of this layer's conv output.
            Tensor g_conv_out(g_features.n, r.growth_rate, bd.len);
            for (int i = 0; i < g_features.n; ++i)
                for (int c = 0; c < r.growth_rate; ++c)
                    std::copy(g_features.at(i, ch_in + c), g_features.at(i, ch_in + c) + bd.len,
                              g_conv_out.at(i, c));

            // Recompute the layer's relu output (the conv input).
            Tensor relu_out(g_features.n, ch_in, bd.len);
            for (int c = 0; c < ch_in; ++c) {
                const double mean = cache.mean[static_cast<std::size_t>(c)];
                const double inv_std = cache.inv_std[static_cast<std::size_t>(c)];
                const double gm = gamma[static_cast<std::size_t>(c)];
                const double bt = beta[static_cast<std::size_t>(c)];
                for (int i = 0; i < g_features.n; ++i) {
                    const double* xi = features.at(i, c);
                    double* ro = relu_out.at(i, c);
                    for (int t = 0; t < bd.len; ++t) {
                        const double y = gm * (xi[t] - mean) * inv_std + bt;
                        ro[t] = y > 0.0 ? y : 0.0;
                    }
                }
            }

            nn::ConvSpec spec{ch_in, r.growth_rate, 3, 1, 1};
            const std::string cw = block_layer(b, l, "conv.w");
            const std::string cb = block_layer(b, l, "conv.b");
            Tensor g_relu;
            nn::conv1d_backward(spec, w.at(cw).v.data(), relu_out, g_conv_out, &g_relu,
                                grads.of(w, cw), grads.of(w, cb));

            Tensor g_bn_out;
            nn::relu_backward(relu_out, g_relu, g_bn_out);

            Tensor g_bn_in;
            nn::batchnorm_backward(gamma.data(), features, ch_in, cache, g_bn_out, g_bn_in,
                                   grads.of(w, block_layer(b, l, "bn.gamma")),
                                   grads.of(w, block_layer(b, l, "bn.beta")));

            // Fold into the running feature-map gradient prefix.
            for (int i = 0; i < g_features.n; ++i)
                for (int c = 0; c < ch_in; ++c) {
                    double* dst = g_features.at(i, c);
                    const double* src = g_bn_in.at(i, c);
                    for (int t = 0; t < bd.len; ++t)
                        dst[t] += src[t];
                }
        }

        // Gradient entering the block (prefix of width ch_start).
        g_current = Tensor(g_features.n, bd.ch_start, bd.len);
        for (int i = 0; i < g_features.n; ++i)
            for (int c = 0; c < bd.ch_start; ++c)
                std::copy(g_features.at(i, c), g_features.at(i, c) + bd.len, g_current.at(i, c));
    }

    Tensor g_stem_out;
    nn::maxpool3_backward(acts.stem_conv_out, g_current, acts.stem_argmax, g_stem_out);
    nn::ConvSpec stem_spec{kBlockChannels, r.stem_channels, 7, 2, 3};
    nn::conv1d_backward(stem_spec, w.at("stem.conv.w").v.data(), acts.input, g_stem_out, nullptr,
                        grads.of(w, "stem.conv.w"), grads.of(w, "stem.conv.b"));
}

// ---------------------------------------------------------------------------
// IQBlock entry points (inference mode)
// ---------------------------------------------------------------------------

inline Tensor blocks_to_tensor(const std::vector<const IQBlock*>& blocks,
                               const MinMaxStats* stats = nullptr) {
    Tensor t(static_cast<int>(blocks.size()), kBlockChannels, kBlockSamples);
    for (int i = 0; i < t.n; ++i) {
        const IQBlock& b = *blocks[static_cast<std::size_t>(i)];
        if (stats) {
            for (int c = 0; c < kBlockChannels; ++c) {
                double* dst = t.at(i, c);
                for (int s = 0; s < kBlockSamples; ++s)
                    dst[s] = minmax_normalize_value(b.at(c, s), *stats);
            }
        } else {
            std::copy(b.data.begin(), b.data.end(), t.at(i, 0));
        }
    }
    return t;
}

inline Matrix encode_batch(const EncoderWeights& w, const std::vector<const IQBlock*>& blocks,
                           const MinMaxStats* stats = nullptr) {
    const EncoderConfig r = w.config.resolved();
    if (r.input_length != kBlockSamples)
        throw ArgumentError("encode_batch: encoder expects input length " +
                            std::to_string(r.input_length) + ", blocks have " +
                            std::to_string(kBlockSamples));
    if (blocks.empty())
        return Matrix(0, r.embedding_dim);
    if (!w.all_finite())
        throw ArgumentError("encode_batch: weights contain non-finite values");
    const Tensor input = blocks_to_tensor(blocks, stats);
    return encoder_forward_eval(w, input);
}

inline Embedding encode(const EncoderWeights& w, const IQBlock& block,
                        const MinMaxStats* stats = nullptr) {
    if (!block.all_finite())
        throw ArgumentError("encode: block contains non-finite samples");
    const Matrix m = encode_batch(w, {&block}, stats);
    return Embedding(m.row(0), m.row(0) + m.cols);
}

} // namespace protobeam
