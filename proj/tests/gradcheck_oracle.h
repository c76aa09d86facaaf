#pragma once

#include <cmath>

#include "csc/model.hpp"

namespace gradcheck {

using namespace csc;
// Independent double-precision shadow network used as the finite-difference
// oracle. Mirrors the architecture contract (3x3 same-pad conv, relu, 2x2
// maxpool, fc, inverted dropout, softmax + mean cross-entropy) with naive loops.
struct Shadow {
    const ModelSpec& spec;
    std::vector<std::vector<double>> params;  // same tensor order, double copies

    Shadow(const ModelSpec& s, const ModelParams& p) : spec(s) {
        for (const auto& t : p.tensors) params.emplace_back(t.data.begin(), t.data.end());
    }

    double loss(const std::vector<std::vector<float>>& batch, const std::vector<int>& labels,
                std::uint64_t dropout_seed) const {
        double total = 0;
        for (std::size_t si = 0; si < batch.size(); ++si) {
            std::vector<double> x(batch[si].begin(), batch[si].end());
            int s = spec.input_size;
            int in_c = 3;
            for (std::size_t blk = 0; blk < spec.conv_channels.size(); ++blk) {
                int oc = spec.conv_channels[blk];
                const auto& w = params[2 * blk];
                const auto& b = params[2 * blk + 1];
                std::vector<double> conv(static_cast<std::size_t>(oc) * s * s);
                for (int o = 0; o < oc; ++o)
                    for (int y = 0; y < s; ++y)
                        for (int xx = 0; xx < s; ++xx) {
                            double acc = b[static_cast<std::size_t>(o)];
                            for (int ic = 0; ic < in_c; ++ic)
                                for (int ky = -1; ky <= 1; ++ky)
                                    for (int kx = -1; kx <= 1; ++kx) {
                                        int sy = y + ky, sx = xx + kx;
                                        if (sy < 0 || sx < 0 || sy >= s || sx >= s) continue;
                                        acc += w[((static_cast<std::size_t>(o) * in_c + ic) * 9) +
                                                 static_cast<std::size_t>(ky + 1) * 3 + (kx + 1)] *
                                               x[(static_cast<std::size_t>(ic) * s + sy) * s + sx];
                                    }
                            conv[(static_cast<std::size_t>(o) * s + y) * s + xx] = std::max(acc, 0.0);
                        }
                int os = s / 2;
                std::vector<double> pooled(static_cast<std::size_t>(oc) * os * os);
                for (int o = 0; o < oc; ++o)
                    for (int y = 0; y < os; ++y)
                        for (int xx = 0; xx < os; ++xx) {
                            double m = -1e300;
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx)
                                    m = std::max(m, conv[(static_cast<std::size_t>(o) * s + 2 * y + dy) * s +
                                                         2 * xx + dx]);
                            pooled[(static_cast<std::size_t>(o) * os + y) * os + xx] = m;
                        }
                x = std::move(pooled);
                s = os;
                in_c = oc;
            }
            std::size_t nb = spec.conv_channels.size();
            const auto& w1 = params[2 * nb];
            const auto& b1 = params[2 * nb + 1];
            const auto& w2 = params[2 * nb + 2];
            const auto& b2 = params[2 * nb + 3];
            std::vector<double> h(static_cast<std::size_t>(spec.hidden));
            for (int o = 0; o < spec.hidden; ++o) {
                double acc = b1[static_cast<std::size_t>(o)];
                for (std::size_t i = 0; i < x.size(); ++i)
                    acc += w1[static_cast<std::size_t>(o) * x.size() + i] * x[i];
                h[static_cast<std::size_t>(o)] = acc;
            }
            if (spec.dropout_p > 0) {
                // same mask stream as the implementation's train mode
                CounterRng rng(dropout_seed + si, 0xD20);
                double keep = 1.0 - spec.dropout_p;
                for (int i = 0; i < spec.hidden; ++i) {
                    bool dropped = rng.next_double() < spec.dropout_p;
                    h[static_cast<std::size_t>(i)] *= dropped ? 0.0 : 1.0 / keep;
                }
            }
            std::vector<double> logits(static_cast<std::size_t>(spec.num_classes));
            for (int o = 0; o < spec.num_classes; ++o) {
                double acc = b2[static_cast<std::size_t>(o)];
                for (int i = 0; i < spec.hidden; ++i)
                    acc += w2[static_cast<std::size_t>(o) * spec.hidden + i] * h[static_cast<std::size_t>(i)];
                logits[static_cast<std::size_t>(o)] = acc;
            }
            double mx = *std::max_element(logits.begin(), logits.end());
            double sum = 0;
            for (double l : logits) sum += std::exp(l - mx);
            double p = std::exp(logits[static_cast<std::size_t>(labels[si])] - mx) / sum;
            total += -std::log(std::max(p, 1e-12));
        }
        return total / static_cast<double>(batch.size());
    }
};

std::vector<std::vector<float>> random_batch(const ModelSpec& spec, int n, CounterRng& rng) {
    std::vector<std::vector<float>> batch;
    const std::size_t sz = 3 * static_cast<std::size_t>(spec.input_size) * spec.input_size;
    for (int i = 0; i < n; ++i) {
        std::vector<float> x(sz);
        for (auto& v : x) v = static_cast<float>(rng.next_double());
        batch.push_back(std::move(x));
    }
    return batch;
}

// Kink guard: finite differences are unreliable when a relu pre-activation or a
// maxpool margin sits within h of the switch point.
bool near_kink(const ModelSpec& spec, const ModelParams& params,
               const std::vector<std::vector<float>>& batch, double margin) {
    ForwardCache cache;
    for (const auto& x : batch) {
        forward_sample(spec, params, x, RunMode::Eval, 0, cache);
        for (const auto& pre : cache.conv_pre)
            for (float v : pre)
                if (std::abs(v) < margin) return true;
        // A perturbed weight can flip a near-tied 2x2 pool window and make the
        // finite difference inconsistent, so require a margin between the max
        // and the runner-up of each window (on the relu'd activations).
        int s = spec.input_size;
        for (std::size_t blk = 0; blk < cache.pooled.size(); ++blk) {
            const auto& pre = cache.conv_pre[blk];
            const int oc = spec.conv_channels[blk];
            const int os = s / 2;
            for (int ch = 0; ch < oc; ++ch)
                for (int y = 0; y < os; ++y)
                    for (int xx = 0; xx < os; ++xx) {
                        float best = -1.0f, second = -1.0f;
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                float v = pre[(static_cast<std::size_t>(ch) * s + 2 * y + dy) * s +
                                              2 * xx + dx];
                                v = std::max(v, 0.0f);
                                if (v > best) {
                                    second = best;
                                    best = v;
                                } else if (v > second) {
                                    second = v;
                                }
                            }
                        if (best > 0 && best - second < margin) return true;
                    }
            s = os;
        }
    }
    return false;
}
}  // namespace gradcheck
