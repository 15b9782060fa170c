#ifndef SFWM_OPTIM_HPP
#define SFWM_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "sfwm/common.hpp"
#include "sfwm/mat.hpp"

namespace sfwm {

// Named parameters plus their first/second optimizer moments. Exclusively
// owned by one training loop; iteration order is the map order, which keeps
// updates deterministic.
template <typename T>
struct ParamStore {
    std::map<std::string, Mat<T>> params;
    std::map<std::string, Mat<T>> m;
    std::map<std::string, Mat<T>> v;
    int64_t step = 0;

    void add(const std::string& name, Mat<T> value) {
        m.emplace(name, Mat<T>(value.rows, value.cols));
        v.emplace(name, Mat<T>(value.rows, value.cols));
        params.emplace(name, std::move(value));
    }

    const Mat<T>& at(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw DependencyError("unknown parameter '" + name + "'");
        return it->second;
    }

    size_t count() const {
        size_t n = 0;
        for (const auto& [k, p] : params) n += p.size();
        return n;
    }
};

// Insert zero gradients for parameters a graph did not touch this step
// (e.g. the null context token on a batch with no dropout draws).
template <typename T>
void complete_grads(const ParamStore<T>& store, std::map<std::string, Mat<T>>& grads) {
    for (const auto& [name, p] : store.params)
        if (grads.find(name) == grads.end()) grads.emplace(name, Mat<T>(p.rows, p.cols));
}

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-6;
};

// Decoupled weight decay AdamW with bias-corrected moments.
template <typename T>
void adamw_step(ParamStore<T>& store, const std::map<std::string, Mat<T>>& grads, double lr,
                const AdamWConfig& cfg = {}) {
    store.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(store.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(store.step));
    for (auto& [name, p] : store.params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw NumericError("adamw_step: missing gradient for '" + name + "'");
        const Mat<T>& g = git->second;
        if (!g.same_shape(p)) throw NumericError("adamw_step: gradient shape mismatch for '" + name + "'");
        Mat<T>& mm = store.m.at(name);
        Mat<T>& vv = store.v.at(name);
        for (size_t i = 0; i < p.v.size(); ++i) {
            const double gi = static_cast<double>(g.v[i]);
            double pi = static_cast<double>(p.v[i]);
            pi -= lr * cfg.weight_decay * pi;
            const double mi = cfg.beta1 * static_cast<double>(mm.v[i]) + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * static_cast<double>(vv.v[i]) + (1.0 - cfg.beta2) * gi * gi;
            mm.v[i] = static_cast<T>(mi);
            vv.v[i] = static_cast<T>(vi);
            pi -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
            p.v[i] = static_cast<T>(pi);
        }
    }
}

// Linear warmup to base_lr, then cosine decay to zero.
struct LrSchedule {
    double base_lr = 1.5e-4;
    int64_t warmup_steps = 500;
    int64_t total_steps = 3000;
};

inline double lr_at(const LrSchedule& s, int64_t step) {
    if (s.warmup_steps >= s.total_steps) throw ConfigError("lr schedule: warmup must precede total");
    if (step < 0 || step > s.total_steps) throw ConfigError("lr schedule: step out of range");
    if (step < s.warmup_steps)
        return s.base_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    const double progress = static_cast<double>(step - s.warmup_steps) /
                            static_cast<double>(s.total_steps - s.warmup_steps);
    return s.base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace sfwm

#endif
