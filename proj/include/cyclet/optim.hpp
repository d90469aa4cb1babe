#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cyclet/error.hpp"
#include "cyclet/tensor.hpp"

namespace cyclet {

struct NamedParam {
    std::string name;
    std::string group; // "backbone" | "head"
    Tensor t;
};

// Non-owning view over one freeze unit. When trainable is false an optimizer
// step leaves every member bit-identical.
struct ParamGroup {
    std::string name;
    bool trainable = true;
    std::vector<NamedParam*> params;
};

// Staircase schedule: lr(e) = lr0 * decay_factor^floor(e / decay_period).
struct LrSchedule {
    double lr0 = 1e-3;
    double decay_factor = 0.1;
    int decay_period = 20;

    double lr_at(int epoch) const {
        if (epoch < 0) throw ShapeError("lr_at: epoch must be >= 0, got " + std::to_string(epoch));
        if (decay_period <= 0) throw ConfigError("lr schedule: decay_period must be positive");
        return lr0 * std::pow(decay_factor, double(epoch / decay_period));
    }
};

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

// Decoupled-weight-decay Adam. Moments are keyed by parameter name so they
// survive freeze/unfreeze transitions; a single step counter drives bias
// correction for every parameter.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    const AdamWConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return step_count_; }

    void step(const std::vector<ParamGroup>& groups, double lr) {
        ++step_count_;
        const float c1 = float(1.0 / (1.0 - std::pow(cfg_.beta1, double(step_count_))));
        const float c2 = float(1.0 / (1.0 - std::pow(cfg_.beta2, double(step_count_))));
        const float b1 = float(cfg_.beta1), b2 = float(cfg_.beta2);
        const float eps = float(cfg_.eps);
        const float flr = float(lr);
        const float wd = float(cfg_.weight_decay);
        for (const ParamGroup& g : groups) {
            if (!g.trainable) continue;
            for (NamedParam* p : g.params) {
                Tensor& t = p->t;
                if (t.g.size() != t.v.size())
                    throw ShapeError("adamw_step: missing gradient for trainable parameter '" + p->name + "'");
                Moments& mom = slot(p->name, t.v.size());
                for (std::size_t i = 0; i < t.v.size(); ++i) {
                    const float grad = t.g[i];
                    mom.m[i] = b1 * mom.m[i] + (1.0f - b1) * grad;
                    mom.v[i] = b2 * mom.v[i] + (1.0f - b2) * grad * grad;
                    const float mhat = mom.m[i] * c1;
                    const float vhat = mom.v[i] * c2;
                    t.v[i] -= flr * (mhat / (std::sqrt(vhat) + eps) + wd * t.v[i]);
                }
            }
        }
    }

    bool has_moments(const std::string& name) const { return slots_.count(name) != 0; }

private:
    struct Moments {
        std::vector<float> m, v;
    };

    Moments& slot(const std::string& name, std::size_t n) {
        auto [it, inserted] = slots_.try_emplace(name);
        if (inserted) {
            it->second.m.assign(n, 0.0f);
            it->second.v.assign(n, 0.0f);
        } else if (it->second.m.size() != n) {
            throw ShapeError("adamw_step: moment buffers for '" + name + "' do not match parameter size");
        }
        return it->second;
    }

    AdamWConfig cfg_;
    std::map<std::string, Moments> slots_;
    std::int64_t step_count_ = 0;
};

inline void zero_grads(const std::vector<ParamGroup>& groups) {
    for (const ParamGroup& g : groups)
        if (g.trainable)
            for (NamedParam* p : g.params) p->t.zero_grad();
}

} // namespace cyclet
