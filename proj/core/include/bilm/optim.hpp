#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bilm/tensor.hpp"

namespace bilm {

struct OptimConfig {
    double base_lr = 2e-4;
    std::int64_t warmup_steps = 30000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-6;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    int accumulate_gradients = 4;
};

// Inverse-sqrt schedule with linear warmup: linear ramp up to base_lr at
// t == warmup_steps, then decay by sqrt(warmup/t). Step counts start at 1.
inline double lr_at(const OptimConfig& cfg, std::int64_t step) {
    double t = static_cast<double>(step);
    double w = static_cast<double>(cfg.warmup_steps);
    return cfg.base_lr * std::min(t / w, std::sqrt(w / t));
}

// Scales all gradients in place so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm) {
    double sq = 0;
    for (const auto& g : grads) {
        for (T v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
    }
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        T s = static_cast<T>(max_norm / norm);
        for (auto& g : grads) {
            for (T& v : g.data) v *= s;
        }
    }
    return norm;
}

// AdamW state for one parameter tensor.
template <typename T>
struct AdamSlot {
    Tensor<T> m;
    Tensor<T> v;
};

template <typename T>
struct AdamState {
    std::vector<AdamSlot<T>> slots;
    std::int64_t step = 0;

    void init(const std::vector<Tensor<T>>& params) {
        slots.clear();
        slots.reserve(params.size());
        for (const auto& p : params) slots.push_back({Tensor<T>(p.shape), Tensor<T>(p.shape)});
        step = 0;
    }
};

// One AdamW update over a parameter list, decoupled weight decay, bias
// correction; decay is skipped for tensors flagged in no_decay (norms, biases).
template <typename T>
void adam_step(std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, const OptimConfig& cfg, double lr,
               const std::vector<bool>& no_decay) {
    state.step += 1;
    double b1 = cfg.beta1, b2 = cfg.beta2;
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        const Tensor<T>& g = grads[i];
        AdamSlot<T>& s = state.slots[i];
        double wd = no_decay[i] ? 0.0 : cfg.weight_decay;
        for (size_t j = 0; j < p.data.size(); ++j) {
            double gj = static_cast<double>(g.data[j]);
            double mj = b1 * static_cast<double>(s.m.data[j]) + (1.0 - b1) * gj;
            double vj = b2 * static_cast<double>(s.v.data[j]) + (1.0 - b2) * gj * gj;
            s.m.data[j] = static_cast<T>(mj);
            s.v.data[j] = static_cast<T>(vj);
            double mhat = mj / bc1;
            double vhat = vj / bc2;
            double pj = static_cast<double>(p.data[j]);
            pj -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + wd * pj);
            p.data[j] = static_cast<T>(pj);
        }
    }
}

}  // namespace bilm
