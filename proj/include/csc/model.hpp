#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csc/augment.hpp"
#include "csc/image.hpp"
#include "csc/rng.hpp"

namespace csc {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        data.assign(n, 0.0f);
    }
    std::size_t size() const { return data.size(); }
    void zero() { std::fill(data.begin(), data.end(), 0.0f); }
};

struct ModelSpec {
    int input_size = 64;
    std::vector<int> conv_channels = {8, 16, 32};
    int hidden = 1024;
    double dropout_p = 0.5;
    int num_classes = 2;

    // conv: 3x3, stride 1, pad 1, relu, then 2x2 maxpool (floor).
    int feature_map_size() const {
        int s = input_size;
        for (std::size_t i = 0; i < conv_channels.size(); ++i) s /= 2;
        return s;
    }
    int flat_size() const {
        int s = feature_map_size();
        return conv_channels.empty() ? 3 * s * s : conv_channels.back() * s * s;
    }
};

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
    j = {{"input_size", s.input_size},
         {"conv_channels", s.conv_channels},
         {"hidden", s.hidden},
         {"dropout_p", s.dropout_p},
         {"num_classes", s.num_classes}};
}
inline void from_json(const nlohmann::json& j, ModelSpec& s) {
    j.at("input_size").get_to(s.input_size);
    j.at("conv_channels").get_to(s.conv_channels);
    j.at("hidden").get_to(s.hidden);
    j.at("dropout_p").get_to(s.dropout_p);
    j.at("num_classes").get_to(s.num_classes);
}

// Tensor order: per conv block W [oc,ic,3,3] then b [oc]; fc1 W [hidden,flat],
// fc1 b; fc2 W [classes,hidden]; fc2 b.
struct ModelParams {
    std::vector<Tensor> tensors;

    static ModelParams shaped(const ModelSpec& spec) {
        ModelParams p;
        int in_c = 3;
        for (int oc : spec.conv_channels) {
            p.tensors.emplace_back(std::vector<int>{oc, in_c, 3, 3});
            p.tensors.emplace_back(std::vector<int>{oc});
            in_c = oc;
        }
        p.tensors.emplace_back(std::vector<int>{spec.hidden, spec.flat_size()});
        p.tensors.emplace_back(std::vector<int>{spec.hidden});
        p.tensors.emplace_back(std::vector<int>{spec.num_classes, spec.hidden});
        p.tensors.emplace_back(std::vector<int>{spec.num_classes});
        return p;
    }

    // Seeded He-style uniform init (bound sqrt(6 / fan_in)) for weights, zero
    // biases: keeps activation scale roughly constant through the relu conv
    // stack. zero_head leaves the final FC at zero so an untrained model
    // outputs exactly 0.5.
    static ModelParams init(const ModelSpec& spec, std::uint64_t seed, bool zero_head = false) {
        ModelParams p = shaped(spec);
        CounterRng rng(seed, 0xC5C);
        for (std::size_t t = 0; t + 2 < p.tensors.size(); t += 2) {
            Tensor& w = p.tensors[t];
            std::size_t fan_in = w.size() / static_cast<std::size_t>(w.shape[0]);
            float bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
            for (float& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
        }
        if (!zero_head) {
            Tensor& w = p.tensors[p.tensors.size() - 2];
            std::size_t fan_in = w.size() / static_cast<std::size_t>(w.shape[0]);
            float bound = static_cast<float>(std::sqrt(1.0 / static_cast<double>(fan_in)));
            for (float& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
        }
        return p;
    }
};

struct TrainConfig {
    int batch_size = 32;
    int max_epochs = 50;
    int patience = 10;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1) throw ModelError("batch_size must be >= 1");
        if (patience > max_epochs) throw ModelError("patience must be <= max_epochs");
    }
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long t = 0;

    static AdamState shaped(const ModelParams& p) {
        AdamState s;
        for (const auto& tns : p.tensors) {
            s.m.emplace_back(tns.shape);
            s.v.emplace_back(tns.shape);
        }
        return s;
    }
};

inline void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
                      const TrainConfig& cfg) {
    state.t += 1;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        float* th = params.tensors[i].data.data();
        const float* g = grads[i].data.data();
        float* m = state.m[i].data.data();
        float* v = state.v[i].data.data();
        const std::size_t n = params.tensors[i].size();
        for (std::size_t k = 0; k < n; ++k) {
            double gk = g[k];
            double mk = b1 * m[k] + (1.0 - b1) * gk;
            double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
            m[k] = static_cast<float>(mk);
            v[k] = static_cast<float>(vk);
            double mhat = mk / bc1;
            double vhat = vk / bc2;
            th[k] = static_cast<float>(th[k] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps));
        }
    }
}

namespace nn {

// Planes are [C, H, W] row-major float buffers.

inline void conv3x3_same(const float* in, int in_c, int h, int w, const float* weight,
                         const float* bias, int out_c, float* out) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int oc = 0; oc < out_c; ++oc) {
        float* op = out + oc * plane;
        std::fill(op, op + plane, bias[oc]);
        for (int ic = 0; ic < in_c; ++ic) {
            const float* ip = in + ic * plane;
            const float* k = weight + ((oc * in_c + ic) * 9);
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const float kv = k[ky * 3 + kx];
                    if (kv == 0.0f) continue;
                    const int dy = ky - 1, dx = kx - 1;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    for (int y = y0; y < y1; ++y) {
                        float* orow = op + static_cast<std::size_t>(y) * w;
                        const float* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
                        for (int x = x0; x < x1; ++x) orow[x] += kv * irow[x];
                    }
                }
            }
        }
    }
}

// Gradients of conv3x3_same w.r.t. input, weights, bias.
inline void conv3x3_same_backward(const float* in, int in_c, int h, int w, const float* weight,
                                  int out_c, const float* dout, float* din, float* dweight,
                                  float* dbias) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    if (din) std::fill(din, din + in_c * plane, 0.0f);
    for (int oc = 0; oc < out_c; ++oc) {
        const float* dop = dout + oc * plane;
        float db = 0.0f;
        for (std::size_t i = 0; i < plane; ++i) db += dop[i];
        dbias[oc] += db;
        for (int ic = 0; ic < in_c; ++ic) {
            const float* ip = in + ic * plane;
            float* dip = din ? din + ic * plane : nullptr;
            const float* k = weight + ((oc * in_c + ic) * 9);
            float* dk = dweight + ((oc * in_c + ic) * 9);
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const int dy = ky - 1, dx = kx - 1;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    const float kv = k[ky * 3 + kx];
                    float acc = 0.0f;
                    for (int y = y0; y < y1; ++y) {
                        const float* dorow = dop + static_cast<std::size_t>(y) * w;
                        const float* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
                        float* dirow = dip ? dip + static_cast<std::size_t>(y + dy) * w + dx : nullptr;
                        for (int x = x0; x < x1; ++x) {
                            acc += dorow[x] * irow[x];
                            if (dirow) dirow[x] += dorow[x] * kv;
                        }
                    }
                    dk[ky * 3 + kx] += acc;
                }
            }
        }
    }
}

inline void relu_inplace(float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] < 0) x[i] = 0;
}

// 2x2 maxpool, stride 2, floor semantics; argmax index recorded for backprop.
// Ties resolve to the first element in scan order.
inline void maxpool2x2(const float* in, int c, int h, int w, float* out, int* argmax) {
    const int oh = h / 2, ow = w / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
    for (int ch = 0; ch < c; ++ch) {
        const float* ip = in + ch * plane;
        float* op = out + ch * oplane;
        int* ap = argmax + ch * oplane;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                int base = (2 * y) * w + 2 * x;
                int best = base;
                float bv = ip[base];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        int idx = (2 * y + dy) * w + (2 * x + dx);
                        if (ip[idx] > bv) {
                            bv = ip[idx];
                            best = idx;
                        }
                    }
                op[y * ow + x] = bv;
                ap[y * ow + x] = best;
            }
        }
    }
}

inline void fc_forward(const float* in, int in_n, const float* weight, const float* bias,
                       int out_n, float* out) {
    for (int o = 0; o < out_n; ++o) {
        const float* wr = weight + static_cast<std::size_t>(o) * in_n;
        float acc = bias[o];
        for (int i = 0; i < in_n; ++i) acc += wr[i] * in[i];
        out[o] = acc;
    }
}

inline void fc_backward(const float* in, int in_n, const float* weight, int out_n,
                        const float* dout, float* din, float* dweight, float* dbias) {
    if (din) std::fill(din, din + in_n, 0.0f);
    for (int o = 0; o < out_n; ++o) {
        const float d = dout[o];
        dbias[o] += d;
        const float* wr = weight + static_cast<std::size_t>(o) * in_n;
        float* dwr = dweight + static_cast<std::size_t>(o) * in_n;
        for (int i = 0; i < in_n; ++i) {
            dwr[i] += d * in[i];
            if (din) din[i] += d * wr[i];
        }
    }
}

inline void softmax(const float* logits, int n, float* probs) {
    float mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += std::exp(static_cast<double>(logits[i]) - mx);
    for (int i = 0; i < n; ++i)
        probs[i] = static_cast<float>(std::exp(static_cast<double>(logits[i]) - mx) / sum);
}

}  // namespace nn

// Converts an image to a [3, S, S] float buffer in [0, 1].
inline std::vector<float> image_to_input(const FundusImage& img, const ModelSpec& spec) {
    if (img.width != spec.input_size || img.height != spec.input_size)
        throw ModelError("image dimensions do not match model input size");
    const std::size_t plane = static_cast<std::size_t>(spec.input_size) * spec.input_size;
    std::vector<float> x(3 * plane);
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) x[c * plane + i] = img.pixels[i][c] / 255.0f;
    return x;
}

enum class RunMode { Eval, Train };

// Per-sample forward cache for backprop.
struct ForwardCache {
    std::vector<std::vector<float>> conv_pre;   // after conv, pre-relu
    std::vector<std::vector<float>> pooled;     // after relu+pool (input to next block)
    std::vector<std::vector<int>> pool_argmax;
    std::vector<float> fc1_out;                 // post-dropout in train mode
    std::vector<float> dropout_mask;            // scale factors (0 or 1/(1-p))
    std::vector<float> logits;
    std::vector<float> probs;
};

inline void forward_sample(const ModelSpec& spec, const ModelParams& params,
                           const std::vector<float>& input, RunMode mode,
                           std::uint64_t dropout_key, ForwardCache& cache) {
    int s = spec.input_size;
    int in_c = 3;
    const std::vector<float>* cur = &input;
    const std::size_t n_blocks = spec.conv_channels.size();
    cache.conv_pre.assign(n_blocks, {});
    cache.pooled.assign(n_blocks, {});
    cache.pool_argmax.assign(n_blocks, {});
    for (std::size_t blk = 0; blk < n_blocks; ++blk) {
        int oc = spec.conv_channels[blk];
        const Tensor& w = params.tensors[2 * blk];
        const Tensor& b = params.tensors[2 * blk + 1];
        cache.conv_pre[blk].resize(static_cast<std::size_t>(oc) * s * s);
        nn::conv3x3_same(cur->data(), in_c, s, s, w.data.data(), b.data.data(), oc,
                         cache.conv_pre[blk].data());
        std::vector<float> act = cache.conv_pre[blk];
        nn::relu_inplace(act.data(), act.size());
        int os = s / 2;
        cache.pooled[blk].resize(static_cast<std::size_t>(oc) * os * os);
        cache.pool_argmax[blk].resize(cache.pooled[blk].size());
        nn::maxpool2x2(act.data(), oc, s, s, cache.pooled[blk].data(),
                       cache.pool_argmax[blk].data());
        cur = &cache.pooled[blk];
        s = os;
        in_c = oc;
    }

    const int flat = spec.flat_size();
    const Tensor& w1 = params.tensors[2 * n_blocks];
    const Tensor& b1 = params.tensors[2 * n_blocks + 1];
    const Tensor& w2 = params.tensors[2 * n_blocks + 2];
    const Tensor& b2 = params.tensors[2 * n_blocks + 3];

    cache.fc1_out.resize(static_cast<std::size_t>(spec.hidden));
    nn::fc_forward(cur->data(), flat, w1.data.data(), b1.data.data(), spec.hidden,
                   cache.fc1_out.data());

    cache.dropout_mask.assign(static_cast<std::size_t>(spec.hidden), 1.0f);
    if (mode == RunMode::Train && spec.dropout_p > 0) {
        CounterRng rng(dropout_key, 0xD20);
        const float keep = static_cast<float>(1.0 - spec.dropout_p);
        for (int i = 0; i < spec.hidden; ++i)
            cache.dropout_mask[static_cast<std::size_t>(i)] =
                rng.next_double() < spec.dropout_p ? 0.0f : 1.0f / keep;
        for (int i = 0; i < spec.hidden; ++i)
            cache.fc1_out[static_cast<std::size_t>(i)] *= cache.dropout_mask[static_cast<std::size_t>(i)];
    }

    cache.logits.resize(static_cast<std::size_t>(spec.num_classes));
    nn::fc_forward(cache.fc1_out.data(), spec.hidden, w2.data.data(), b2.data.data(),
                   spec.num_classes, cache.logits.data());
    cache.probs.resize(cache.logits.size());
    nn::softmax(cache.logits.data(), spec.num_classes, cache.probs.data());
}

inline std::vector<std::vector<float>> forward(const ModelSpec& spec, const ModelParams& params,
                                               const std::vector<std::vector<float>>& batch,
                                               RunMode mode = RunMode::Eval,
                                               std::uint64_t dropout_seed = 0) {
    std::vector<std::vector<float>> out;
    out.reserve(batch.size());
    ForwardCache cache;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        forward_sample(spec, params, batch[i], mode, dropout_seed + i, cache);
        out.push_back(cache.probs);
    }
    return out;
}

inline double loss_cross_entropy(const std::vector<std::vector<float>>& probs,
                                 const std::vector<int>& labels) {
    if (probs.size() != labels.size() || probs.empty())
        throw ModelError("probs/labels size mismatch");
    double total = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        int y = labels[i];
        if (y < 0 || y >= static_cast<int>(probs[i].size()))
            throw ModelError("label out of range");
        double p = std::max(static_cast<double>(probs[i][static_cast<std::size_t>(y)]), 1e-12);
        total += -std::log(p);
    }
    return total / static_cast<double>(probs.size());
}

// Accumulates gradients of mean cross-entropy into `grads` (must be shaped and
// zeroed by the caller); returns the batch loss. Same dropout masks as the
// forward pass with the same dropout_seed.
inline double gradients(const ModelSpec& spec, const ModelParams& params,
                        const std::vector<std::vector<float>>& batch,
                        const std::vector<int>& labels, std::uint64_t dropout_seed,
                        std::vector<Tensor>& grads,
                        std::vector<std::vector<float>>* probs_out = nullptr) {
    if (batch.size() != labels.size() || batch.empty())
        throw ModelError("batch/labels size mismatch");
    const std::size_t n_blocks = spec.conv_channels.size();
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double total_loss = 0;

    ForwardCache cache;
    for (std::size_t si = 0; si < batch.size(); ++si) {
        forward_sample(spec, params, batch[si], RunMode::Train, dropout_seed + si, cache);
        if (probs_out) probs_out->push_back(cache.probs);
        int y = labels[si];
        if (y < 0 || y >= spec.num_classes) throw ModelError("label out of range");
        total_loss += -std::log(std::max(static_cast<double>(cache.probs[static_cast<std::size_t>(y)]), 1e-12));

        // d loss / d logits = (p - onehot) / N
        std::vector<float> dlogits(static_cast<std::size_t>(spec.num_classes));
        for (int k = 0; k < spec.num_classes; ++k)
            dlogits[static_cast<std::size_t>(k)] =
                static_cast<float>((cache.probs[static_cast<std::size_t>(k)] - (k == y ? 1.0 : 0.0)) * inv_n);

        const Tensor& w1 = params.tensors[2 * n_blocks];
        const Tensor& w2 = params.tensors[2 * n_blocks + 2];
        Tensor& gw1 = grads[2 * n_blocks];
        Tensor& gb1 = grads[2 * n_blocks + 1];
        Tensor& gw2 = grads[2 * n_blocks + 2];
        Tensor& gb2 = grads[2 * n_blocks + 3];

        std::vector<float> dfc1(static_cast<std::size_t>(spec.hidden));
        nn::fc_backward(cache.fc1_out.data(), spec.hidden, w2.data.data(), spec.num_classes,
                        dlogits.data(), dfc1.data(), gw2.data.data(), gb2.data.data());
        for (int i = 0; i < spec.hidden; ++i) dfc1[static_cast<std::size_t>(i)] *= cache.dropout_mask[static_cast<std::size_t>(i)];

        const int flat = spec.flat_size();
        const std::vector<float>& flat_in = n_blocks > 0 ? cache.pooled[n_blocks - 1] : batch[si];
        // fc1 input gradient needed only when conv blocks exist
        std::vector<float> dflat(static_cast<std::size_t>(flat));
        nn::fc_backward(flat_in.data(), flat, w1.data.data(), spec.hidden, dfc1.data(),
                        n_blocks > 0 ? dflat.data() : nullptr, gw1.data.data(), gb1.data.data());

        // Backprop through the conv blocks in reverse.
        std::vector<float> dpooled = std::move(dflat);
        for (std::size_t blk = n_blocks; blk-- > 0;) {
            int oc = spec.conv_channels[blk];
            int s = spec.input_size;
            for (std::size_t k = 0; k <= blk; ++k) s /= 2;
            int pre_s = s * 2;  // spatial size before this block's pool
            const std::size_t pre_plane = static_cast<std::size_t>(pre_s) * pre_s;

            // Unpool: route gradient to argmax positions; kill where pre-relu <= 0.
            std::vector<float> dact(static_cast<std::size_t>(oc) * pre_plane, 0.0f);
            const auto& amax = cache.pool_argmax[blk];
            for (int ch = 0; ch < oc; ++ch) {
                const std::size_t obase = static_cast<std::size_t>(ch) * s * s;
                const std::size_t ibase = static_cast<std::size_t>(ch) * pre_plane;
                for (std::size_t i = 0; i < static_cast<std::size_t>(s) * s; ++i)
                    dact[ibase + static_cast<std::size_t>(amax[obase + i])] += dpooled[obase + i];
            }
            const std::vector<float>& pre = cache.conv_pre[blk];
            for (std::size_t i = 0; i < dact.size(); ++i)
                if (pre[i] <= 0) dact[i] = 0;

            int ic = blk == 0 ? 3 : spec.conv_channels[blk - 1];
            const std::vector<float>& block_in = blk == 0 ? batch[si] : cache.pooled[blk - 1];
            const Tensor& w = params.tensors[2 * blk];
            Tensor& gw = grads[2 * blk];
            Tensor& gb = grads[2 * blk + 1];
            std::vector<float> din;
            float* din_ptr = nullptr;
            if (blk > 0) {
                din.resize(static_cast<std::size_t>(ic) * pre_plane);
                din_ptr = din.data();
            }
            nn::conv3x3_same_backward(block_in.data(), ic, pre_s, pre_s, w.data.data(), oc,
                                      dact.data(), din_ptr, gw.data.data(), gb.data.data());
            dpooled = std::move(din);
        }
    }
    return total_loss * inv_n;
}

inline double predict(const ModelSpec& spec, const ModelParams& params, const FundusImage& img) {
    ForwardCache cache;
    forward_sample(spec, params, image_to_input(img, spec), RunMode::Eval, 0, cache);
    return cache.probs[1];
}

// ---- training ----

struct TrainExample {
    FundusImage image;
    int label = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0, train_acc = 0;
    double val_loss = 0, val_acc = 0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> history;
    int best_epoch = 0;  // 1-based
    double best_val_loss = 0;
};

// Patience rule: stop after `patience` consecutive epochs without a strict
// decrease of the validation loss; the best epoch's weights are kept.
struct EarlyStopper {
    int patience;
    double best_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int since_improve = 0;

    explicit EarlyStopper(int patience_epochs) : patience(patience_epochs) {}

    // Returns true if training should stop after this epoch. `improved()` right
    // after tells whether this epoch became the new best.
    bool observe(int epoch, double val_loss) {
        if (val_loss < best_loss) {
            best_loss = val_loss;
            best_epoch = epoch;
            since_improve = 0;
            improved_ = true;
            return false;
        }
        improved_ = false;
        return ++since_improve >= patience;
    }
    bool improved() const { return improved_; }

  private:
    bool improved_ = false;
};

inline std::pair<double, double> evaluate_set(const ModelSpec& spec, const ModelParams& params,
                                              const std::vector<TrainExample>& set) {
    ForwardCache cache;
    double loss = 0;
    int correct = 0;
    for (const auto& ex : set) {
        forward_sample(spec, params, image_to_input(ex.image, spec), RunMode::Eval, 0, cache);
        loss += -std::log(std::max(static_cast<double>(cache.probs[static_cast<std::size_t>(ex.label)]), 1e-12));
        int pred = cache.probs[1] >= 0.5f ? 1 : 0;
        if (pred == ex.label) ++correct;
    }
    return {loss / static_cast<double>(set.size()),
            static_cast<double>(correct) / static_cast<double>(set.size())};
}

inline TrainResult train(const ModelSpec& spec, const std::vector<TrainExample>& train_set,
                         const std::vector<TrainExample>& val_set, const TrainConfig& cfg,
                         const AugmentParams* augment = nullptr) {
    cfg.validate();
    if (train_set.empty() || val_set.empty()) throw ModelError("empty train or val set");

    ModelParams params = ModelParams::init(spec, cfg.seed);
    AdamState adam = AdamState::shaped(params);
    std::vector<Tensor> grads;
    for (const auto& t : params.tensors) grads.emplace_back(t.shape);

    TrainResult result;
    EarlyStopper stopper(cfg.patience);
    ModelParams best = params;
    const std::size_t n = train_set.size();

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        CounterRng shuffle_rng(cfg.seed, 0xE90C + static_cast<std::uint64_t>(epoch));
        seeded_shuffle(order, shuffle_rng);

        double epoch_loss = 0;
        int correct = 0;
        std::size_t pos = 0;
        int batch_no = 0;
        while (pos < n) {
            std::size_t bs = std::min(static_cast<std::size_t>(cfg.batch_size), n - pos);
            std::vector<std::vector<float>> batch;
            std::vector<int> labels;
            batch.reserve(bs);
            for (std::size_t k = 0; k < bs; ++k) {
                std::size_t idx = order[pos + k];
                const TrainExample& ex = train_set[idx];
                FundusImage img = ex.image;
                if (augment) {
                    AugmentParams ap = *augment;
                    ap.seed = augment->seed ^ cfg.seed;
                    img = augment_sample(img, ap,
                                         static_cast<std::uint64_t>(epoch - 1) * n + idx);
                }
                batch.push_back(image_to_input(img, spec));
                labels.push_back(ex.label);
            }
            for (auto& g : grads) g.zero();
            std::uint64_t dkey = (static_cast<std::uint64_t>(epoch) << 32) |
                                 (static_cast<std::uint64_t>(batch_no) << 8);
            std::vector<std::vector<float>> probs;
            double loss = gradients(spec, params, batch, labels, dkey ^ cfg.seed, grads, &probs);
            epoch_loss += loss * static_cast<double>(bs);
            adam_step(params, grads, adam, cfg);

            // Training accuracy from the train-mode pass (dropout active), as
            // common training loops report it.
            for (std::size_t k = 0; k < bs; ++k)
                if ((probs[k][1] >= 0.5f ? 1 : 0) == labels[k]) ++correct;
            pos += bs;
            ++batch_no;
        }

        auto [val_loss, val_acc] = evaluate_set(spec, params, val_set);
        EpochStats st;
        st.epoch = epoch;
        st.train_loss = epoch_loss / static_cast<double>(n);
        st.train_acc = static_cast<double>(correct) / static_cast<double>(n);
        st.val_loss = val_loss;
        st.val_acc = val_acc;
        result.history.push_back(st);

        bool stop = stopper.observe(epoch, val_loss);
        if (stopper.improved()) best = params;
        if (stop) break;
    }
    result.best_epoch = stopper.best_epoch;
    result.best_val_loss = stopper.best_loss;
    result.params = std::move(best);
    return result;
}

// ---- serialization ----
// magic 'CSCM', u32 LE version, u32 LE JSON length + ModelSpec JSON,
// then per tensor: u32 rank, u32 dims..., f32 LE row-major values.

inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {
inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ModelError("truncated model file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace detail

inline void save_model(const ModelParams& params, const ModelSpec& spec, const std::string& path) {
    static_assert(sizeof(float) == 4);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelError("cannot write model file: " + path);
    out.write("CSCM", 4);
    detail::write_u32(out, kModelFormatVersion);
    std::string js = nlohmann::json(spec).dump();
    detail::write_u32(out, static_cast<std::uint32_t>(js.size()));
    out.write(js.data(), static_cast<std::streamsize>(js.size()));
    for (const auto& t : params.tensors) {
        detail::write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) detail::write_u32(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * 4));
    }
    if (!out) throw ModelError("write failed: " + path);
}

inline std::pair<ModelParams, ModelSpec> load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot open model file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CSCM", 4) != 0) throw ModelError("unrecognized format");
    std::uint32_t version = detail::read_u32(in);
    if (version != kModelFormatVersion)
        throw ModelError("unsupported model format version " + std::to_string(version));
    std::uint32_t jlen = detail::read_u32(in);
    std::string js(jlen, '\0');
    in.read(js.data(), jlen);
    if (!in) throw ModelError("truncated model file");
    ModelSpec spec = nlohmann::json::parse(js).get<ModelSpec>();

    ModelParams expected = ModelParams::shaped(spec);
    ModelParams params;
    for (const auto& shape_t : expected.tensors) {
        std::uint32_t rank = detail::read_u32(in);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(detail::read_u32(in));
        if (shape != shape_t.shape) throw ModelError("tensor shape mismatch in model file");
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * 4));
        if (!in) throw ModelError("truncated model file");
        params.tensors.push_back(std::move(t));
    }
    return {std::move(params), spec};
}

}  // namespace csc
