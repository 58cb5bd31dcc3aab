#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hoigraph/common.hpp"
#include "hoigraph/tensor.hpp"

namespace hoigraph {

struct AdamConfig {
    double lr = 2e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over a fixed list of parameter tensors. Moment buffers line up with
// the parameter list by position, so the attach order must be stable (the
// model registers parameters in a fixed order).
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void attach(const std::vector<Tensor>& params) {
        params_ = params;
        m_.clear();
        v_.clear();
        for (const auto& p : params_) {
            m_.emplace_back(p.numel(), 0.0);
            v_.emplace_back(p.numel(), 0.0);
        }
        t_ = 0;
    }

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& vals = params_[k].values();
            const auto& grad = params_[k].grad();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < vals.size(); ++i) {
                double g = grad[i];
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                double mhat = m[i] / bc1;
                double vhat = v[i] / bc2;
                vals[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    // Serialization access.
    std::uint64_t step_count() const { return t_; }
    const std::vector<std::vector<double>>& m() const { return m_; }
    const std::vector<std::vector<double>>& v() const { return v_; }
    void restore(std::uint64_t t, std::vector<std::vector<double>> m,
                 std::vector<std::vector<double>> v) {
        if (m.size() != params_.size() || v.size() != params_.size()) {
            throw ContractError("Adam::restore: moment count does not match parameter count");
        }
        for (std::size_t k = 0; k < params_.size(); ++k) {
            if (m[k].size() != params_[k].numel() || v[k].size() != params_[k].numel()) {
                throw ContractError("Adam::restore: moment size mismatch at parameter " +
                                    std::to_string(k));
            }
        }
        t_ = t;
        m_ = std::move(m);
        v_ = std::move(v);
    }

private:
    AdamConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t t_ = 0;
};

// Step-decay schedule: the rate drops by a fixed factor every `every` epochs.
inline double decayed_lr(double lr0, std::size_t epoch, double factor = 0.8,
                         std::size_t every = 10) {
    double lr = lr0;
    for (std::size_t k = 0; k < epoch / every; ++k) lr *= factor;
    return lr;
}

}  // namespace hoigraph
