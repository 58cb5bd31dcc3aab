#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hoigraph/common.hpp"
#include "hoigraph/tensor.hpp"

namespace hoigraph {

// All learnable parameters start uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
// Variance-preserving uniform init: Var = 1/fan_in, so signal magnitude
// survives the deep trunk even with normalization switched off.
inline Tensor init_param(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in) {
    double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor::from(rows, cols, std::move(v), true);
}

// Named parameter list in registration order. The order doubles as the Adam
// moment layout and the checkpoint layout, so registration must be stable.
struct ParamRegistry {
    std::vector<std::pair<std::string, Tensor>> items;

    Tensor add(std::string name, Tensor t) {
        for (const auto& [n, unused] : items) {
            if (n == name) throw ContractError("duplicate parameter name: " + name);
        }
        items.emplace_back(std::move(name), t);
        return t;
    }

    std::vector<Tensor> tensors() const {
        std::vector<Tensor> out;
        out.reserve(items.size());
        for (const auto& [n, t] : items) out.push_back(t);
        return out;
    }

    Tensor find(const std::string& name) const {
        for (const auto& [n, t] : items)
            if (n == name) return t;
        throw ContractError("unknown parameter: " + name);
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [unused, t] : items) n += t.numel();
        return n;
    }
};

// Non-learned state that still belongs in checkpoints (batch-norm running
// statistics). Pointers stay valid because layers outlive the registry users.
struct BufferRegistry {
    std::vector<std::pair<std::string, std::vector<double>*>> items;

    void add(std::string name, std::vector<double>* buf) {
        for (const auto& [n, unused] : items) {
            if (n == name) throw ContractError("duplicate buffer name: " + name);
        }
        items.emplace_back(std::move(name), buf);
    }
};

struct LinearLayer {
    Tensor w, b;

    LinearLayer() = default;
    LinearLayer(Rng& rng, std::size_t in, std::size_t out)
        : w(init_param(rng, in, out, in)), b(init_param(rng, 1, out, in)) {}

    Tensor apply(Tape& tape, const Tensor& x) const {
        return tape.add_rowvec(tape.matmul(x, w), b);
    }

    void reg(ParamRegistry& pr, const std::string& prefix) {
        pr.add(prefix + ".w", w);
        pr.add(prefix + ".b", b);
    }
};

// Batch normalization with running statistics; `enabled = false` turns the
// layer into an exact identity for tiny-batch runs.
struct BatchNormLayer {
    Tensor gamma, beta;
    std::vector<double> running_mean, running_var;
    bool enabled = true;

    BatchNormLayer() = default;
    BatchNormLayer(std::size_t d, bool enabled_)
        : gamma(Tensor::full(1, d, 1.0, true)),
          beta(Tensor::zeros(1, d, true)),
          running_mean(d, 0.0),
          running_var(d, 1.0),
          enabled(enabled_) {}

    Tensor apply(Tape& tape, const Tensor& x, bool training) {
        if (!enabled) return x;
        return tape.batchnorm(x, gamma, beta, running_mean, running_var, training);
    }

    void reg(ParamRegistry& pr, BufferRegistry& br, const std::string& prefix) {
        if (!enabled) return;  // identity layers carry no state
        pr.add(prefix + ".gamma", gamma);
        pr.add(prefix + ".beta", beta);
        br.add(prefix + ".running_mean", &running_mean);
        br.add(prefix + ".running_var", &running_var);
    }
};

}  // namespace hoigraph
