#pragma once

#include <cassert>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <utility>

#include "hoigraph/common.hpp"

namespace hoigraph {

// Dense row-major double tensor. Rank is 2 everywhere in this project
// (scalars are 1x1). A tensor is a cheap shared handle; ops on a Tape
// produce fresh tensors and record how gradients flow back.
struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized like values iff requires_grad
    bool requires_grad = false;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
        return make({rows, cols}, std::vector<double>(rows * cols, 0.0), requires_grad);
    }

    static Tensor full(std::size_t rows, std::size_t cols, double v, bool requires_grad = false) {
        return make({rows, cols}, std::vector<double>(rows * cols, v), requires_grad);
    }

    static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false) {
        if (values.size() != rows * cols) {
            throw ShapeError("tensor: " + std::to_string(values.size()) +
                             " values cannot fill shape " + shape_str(rows, cols));
        }
        return make({rows, cols}, std::move(values), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return make({1, 1}, {v}, requires_grad);
    }

    static Tensor row(std::vector<double> values, bool requires_grad = false) {
        std::size_t n = values.size();
        return make({1, n}, std::move(values), requires_grad);
    }

    static Tensor col(std::vector<double> values, bool requires_grad = false) {
        std::size_t n = values.size();
        return make({n, 1}, std::move(values), requires_grad);
    }

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t rows() const { return impl_->shape[0]; }
    std::size_t cols() const { return impl_->shape[1]; }
    std::size_t numel() const { return impl_->values.size(); }
    bool requires_grad() const { return impl_->requires_grad; }

    // A Tensor is a handle; like a smart pointer, a const handle still allows
    // mutating the shared payload (the optimizer and backward pass rely on it).
    std::vector<double>& values() const { return impl_->values; }
    std::vector<double>& grad() const {
        if (!impl_->requires_grad) throw ContractError("tensor has no gradient buffer");
        return impl_->grad;
    }

    double& at(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }
    double grad_at(std::size_t r, std::size_t c) const { return impl_->grad[r * cols() + c]; }
    double item() const {
        if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str());
        return impl_->values[0];
    }

    void zero_grad() {
        if (impl_->requires_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }

    bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }

    std::string shape_str() const { return shape_str(rows(), cols()); }
    static std::string shape_str(std::size_t r, std::size_t c) {
        return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
    }

private:
    static Tensor make(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad) {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>();
        t.impl_->shape = std::move(shape);
        t.impl_->values = std::move(values);
        t.impl_->requires_grad = requires_grad;
        if (requires_grad) t.impl_->grad.assign(t.impl_->values.size(), 0.0);
        return t;
    }

    std::shared_ptr<TensorImpl> impl_;
};

enum class Activation { relu, leaky_relu, tanh, sigmoid };

// Boolean n x n mask, row-major.
struct Mask {
    std::size_t n = 0;
    std::vector<std::uint8_t> m;

    Mask() = default;
    explicit Mask(std::size_t n_) : n(n_), m(n_ * n_, 0) {}
    std::uint8_t at(std::size_t i, std::size_t j) const { return m[i * n + j]; }
    void set(std::size_t i, std::size_t j, bool v) { m[i * n + j] = v ? 1 : 0; }
};

// Records one forward pass; replaying the closures in reverse order is the
// backward pass. Recording order is a topological order by construction, so
// no sorting is needed. A tape is single-threaded and rebuilt per forward.
class Tape {
public:
    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

    void backward(const Tensor& loss) {
        if (loss.numel() != 1) {
            throw ContractError("backward: loss must be scalar, got " + loss.shape_str());
        }
        if (!loss.requires_grad()) {
            throw ContractError("backward: loss was not produced by taped operations");
        }
        loss.grad()[0] += 1.0;
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    }

    Tensor matmul(const Tensor& a, const Tensor& b) {
        if (a.cols() != b.rows()) {
            throw ShapeError("matmul shape mismatch: " + a.shape_str() + " * " + b.shape_str());
        }
        std::size_t m = a.rows(), k = a.cols(), n = b.cols();
        Tensor out = Tensor::zeros(m, n, a.requires_grad() || b.requires_grad());
        const double* av = a.values().data();
        const double* bv = b.values().data();
        double* ov = out.values().data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                double aip = av[i * k + p];
                if (aip == 0.0) continue;
                const double* brow = bv + p * n;
                double* orow = ov + i * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
            }
        }
        if (out.requires_grad()) {
            record([a, b, out, m, k, n]() {
                const auto& go = out.grad();
                if (a.requires_grad()) {
                    auto& ga = a.grad();
                    const auto& bv2 = b.values();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            double s = 0.0;
                            for (std::size_t j = 0; j < n; ++j)
                                s += go[i * n + j] * bv2[p * n + j];
                            ga[i * k + p] += s;
                        }
                }
                if (b.requires_grad()) {
                    auto& gb = b.grad();
                    const auto& av2 = a.values();
                    for (std::size_t p = 0; p < k; ++p)
                        for (std::size_t j = 0; j < n; ++j) {
                            double s = 0.0;
                            for (std::size_t i = 0; i < m; ++i)
                                s += av2[i * k + p] * go[i * n + j];
                            gb[p * n + j] += s;
                        }
                }
            });
        }
        return out;
    }

    Tensor add(const Tensor& a, const Tensor& b) {
        require_same_shape("add", a, b);
        Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad() || b.requires_grad());
        for (std::size_t i = 0; i < a.numel(); ++i)
            out.values()[i] = a.values()[i] + b.values()[i];
        if (out.requires_grad()) {
            record([a, b, out]() {
                const auto& go = out.grad();
                if (a.requires_grad()) {
                    auto& ga = a.grad();
                    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                }
                if (b.requires_grad()) {
                    auto& gb = b.grad();
                    for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
                }
            });
        }
        return out;
    }

    // x: N x d, bias: 1 x d broadcast over rows
    Tensor add_rowvec(const Tensor& x, const Tensor& bias) {
        if (bias.rows() != 1 || bias.cols() != x.cols()) {
            throw ShapeError("add_rowvec shape mismatch: " + x.shape_str() + " + " +
                             bias.shape_str());
        }
        std::size_t n = x.rows(), d = x.cols();
        Tensor out = Tensor::zeros(n, d, x.requires_grad() || bias.requires_grad());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                out.at(i, j) = x.at(i, j) + bias.at(0, j);
        if (out.requires_grad()) {
            record([x, bias, out, n, d]() {
                const auto& go = out.grad();
                if (x.requires_grad()) {
                    auto& gx = x.grad();
                    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
                }
                if (bias.requires_grad()) {
                    auto& gb = bias.grad();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) gb[j] += go[i * d + j];
                }
            });
        }
        return out;
    }

    Tensor mul(const Tensor& a, const Tensor& b) {
        require_same_shape("mul", a, b);
        Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad() || b.requires_grad());
        for (std::size_t i = 0; i < a.numel(); ++i)
            out.values()[i] = a.values()[i] * b.values()[i];
        if (out.requires_grad()) {
            record([a, b, out]() {
                const auto& go = out.grad();
                if (a.requires_grad()) {
                    auto& ga = a.grad();
                    const auto& bv = b.values();
                    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
                }
                if (b.requires_grad()) {
                    auto& gb = b.grad();
                    const auto& av = a.values();
                    for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
                }
            });
        }
        return out;
    }

    Tensor scale(const Tensor& a, double s) {
        Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad());
        for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = s * a.values()[i];
        if (out.requires_grad()) {
            record([a, out, s]() {
                const auto& go = out.grad();
                auto& ga = a.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += s * go[i];
            });
        }
        return out;
    }

    Tensor sum(const Tensor& a) {
        Tensor out = Tensor::zeros(1, 1, a.requires_grad());
        double s = 0.0;
        for (double v : a.values()) s += v;
        out.values()[0] = s;
        if (out.requires_grad()) {
            record([a, out]() {
                double g = out.grad()[0];
                auto& ga = a.grad();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
            });
        }
        return out;
    }

    Tensor activation(const Tensor& x, Activation kind, double slope = 0.2) {
        Tensor out = Tensor::zeros(x.rows(), x.cols(), x.requires_grad());
        const auto& xv = x.values();
        auto& ov = out.values();
        switch (kind) {
            case Activation::relu:
                for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
                break;
            case Activation::leaky_relu:
                for (std::size_t i = 0; i < xv.size(); ++i)
                    ov[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
                break;
            case Activation::tanh:
                for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = std::tanh(xv[i]);
                break;
            case Activation::sigmoid:
                for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-xv[i]));
                break;
        }
        if (out.requires_grad()) {
            record([x, out, kind, slope]() {
                const auto& go = out.grad();
                const auto& xv2 = x.values();
                const auto& ov2 = out.values();
                auto& gx = x.grad();
                switch (kind) {
                    case Activation::relu:
                        for (std::size_t i = 0; i < go.size(); ++i)
                            gx[i] += xv2[i] > 0.0 ? go[i] : 0.0;
                        break;
                    case Activation::leaky_relu:
                        for (std::size_t i = 0; i < go.size(); ++i)
                            gx[i] += xv2[i] > 0.0 ? go[i] : slope * go[i];
                        break;
                    case Activation::tanh:
                        for (std::size_t i = 0; i < go.size(); ++i)
                            gx[i] += go[i] * (1.0 - ov2[i] * ov2[i]);
                        break;
                    case Activation::sigmoid:
                        for (std::size_t i = 0; i < go.size(); ++i)
                            gx[i] += go[i] * ov2[i] * (1.0 - ov2[i]);
                        break;
                }
            });
        }
        return out;
    }

    Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }
    Tensor tanh(const Tensor& x) { return activation(x, Activation::tanh); }
    Tensor leaky_relu(const Tensor& x, double slope = 0.2) {
        return activation(x, Activation::leaky_relu, slope);
    }

    // Softmax within each row over mask-true positions. Mask-false positions
    // are exactly zero; a row with an empty mask stays all-zero. Row sums are
    // accumulated in value order so the result is independent of how the
    // masked positions are indexed.
    Tensor masked_row_softmax(const Tensor& scores, const Mask& mask) {
        if (scores.rows() != scores.cols() || scores.rows() != mask.n) {
            throw ShapeError("masked_row_softmax: scores " + scores.shape_str() +
                             " do not match mask of size " + std::to_string(mask.n));
        }
        std::size_t n = mask.n;
        Tensor out = Tensor::zeros(n, n, scores.requires_grad());
        std::vector<double> terms;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j)
                if (mask.at(i, j) && scores.at(i, j) > mx) mx = scores.at(i, j);
            if (mx == -std::numeric_limits<double>::infinity()) continue;  // empty row
            terms.clear();
            for (std::size_t j = 0; j < n; ++j)
                if (mask.at(i, j)) terms.push_back(std::exp(scores.at(i, j) - mx));
            double z = canonical_sum(terms);
            for (std::size_t j = 0; j < n; ++j)
                if (mask.at(i, j)) out.at(i, j) = std::exp(scores.at(i, j) - mx) / z;
        }
        if (out.requires_grad()) {
            Mask mask_copy = mask;
            record([scores, out, mask_copy, n]() {
                const auto& go = out.grad();
                const auto& ov = out.values();
                auto& gs = scores.grad();
                for (std::size_t i = 0; i < n; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        if (mask_copy.at(i, j)) dot += go[i * n + j] * ov[i * n + j];
                    for (std::size_t j = 0; j < n; ++j)
                        if (mask_copy.at(i, j))
                            gs[i * n + j] += ov[i * n + j] * (go[i * n + j] - dot);
                }
            });
        }
        return out;
    }

    // Mean over rows of -log softmax(logits)[target].
    Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
        std::size_t n = logits.rows(), c = logits.cols();
        if (targets.size() != n) {
            throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                             " targets for " + std::to_string(n) + " rows");
        }
        for (int t : targets) {
            if (t < 0 || static_cast<std::size_t>(t) >= c) {
                throw std::out_of_range("cross_entropy: target " + std::to_string(t) +
                                        " outside [0, " + std::to_string(c) + ")");
            }
        }
        Tensor out = Tensor::zeros(1, 1, logits.requires_grad());
        std::vector<double> probs(n * c);
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = logits.at(i, 0);
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
            double z = 0.0;
            for (std::size_t j = 0; j < c; ++j) z += std::exp(logits.at(i, j) - mx);
            for (std::size_t j = 0; j < c; ++j)
                probs[i * c + j] = std::exp(logits.at(i, j) - mx) / z;
            loss -= logits.at(i, static_cast<std::size_t>(targets[i])) - mx - std::log(z);
        }
        out.values()[0] = loss / static_cast<double>(n);
        if (out.requires_grad()) {
            std::vector<int> tcopy = targets;
            record([logits, out, probs = std::move(probs), tcopy, n, c]() {
                double g = out.grad()[0] / static_cast<double>(n);
                auto& gl = logits.grad();
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < c; ++j) gl[i * c + j] += g * probs[i * c + j];
                    gl[i * c + static_cast<std::size_t>(tcopy[i])] -= g;
                }
            });
        }
        return out;
    }

    Tensor concat_cols(const Tensor& a, const Tensor& b) {
        if (a.rows() != b.rows()) {
            throw ShapeError("concat_cols row mismatch: " + a.shape_str() + " | " +
                             b.shape_str());
        }
        std::size_t n = a.rows(), p = a.cols(), q = b.cols();
        Tensor out = Tensor::zeros(n, p + q, a.requires_grad() || b.requires_grad());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < p; ++j) out.at(i, j) = a.at(i, j);
            for (std::size_t j = 0; j < q; ++j) out.at(i, p + j) = b.at(i, j);
        }
        if (out.requires_grad()) {
            record([a, b, out, n, p, q]() {
                const auto& go = out.grad();
                if (a.requires_grad()) {
                    auto& ga = a.grad();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < p; ++j)
                            ga[i * p + j] += go[i * (p + q) + j];
                }
                if (b.requires_grad()) {
                    auto& gb = b.grad();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < q; ++j)
                            gb[i * q + j] += go[i * (p + q) + p + j];
                }
            });
        }
        return out;
    }

    Tensor concat_rows(const std::vector<Tensor>& parts) {
        if (parts.empty()) throw ContractError("concat_rows: no parts");
        std::size_t c = parts[0].cols(), n = 0;
        bool rg = false;
        for (const auto& p : parts) {
            if (p.cols() != c) {
                throw ShapeError("concat_rows column mismatch: " + p.shape_str());
            }
            n += p.rows();
            rg = rg || p.requires_grad();
        }
        Tensor out = Tensor::zeros(n, c, rg);
        std::size_t r = 0;
        for (const auto& p : parts) {
            std::copy(p.values().begin(), p.values().end(), out.values().begin() + r * c);
            r += p.rows();
        }
        if (rg) {
            record([parts, out, c]() {
                const auto& go = out.grad();
                std::size_t r2 = 0;
                for (const auto& p : parts) {
                    if (p.requires_grad()) {
                        auto& gp = p.grad();
                        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[r2 * c + i];
                    }
                    r2 += p.rows();
                }
            });
        }
        return out;
    }

    // Gather rows; gradient scatters back additively, so repeated indices
    // accumulate. This is also the embedding lookup.
    Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
        std::size_t c = x.cols();
        for (std::size_t i : idx) {
            if (i >= x.rows()) {
                throw std::out_of_range("select_rows: index " + std::to_string(i) +
                                        " outside [0, " + std::to_string(x.rows()) + ")");
            }
        }
        Tensor out = Tensor::zeros(idx.size(), c, x.requires_grad());
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy(x.values().begin() + static_cast<std::ptrdiff_t>(idx[i] * c),
                      x.values().begin() + static_cast<std::ptrdiff_t>((idx[i] + 1) * c),
                      out.values().begin() + static_cast<std::ptrdiff_t>(i * c));
        if (out.requires_grad()) {
            record([x, out, idx, c]() {
                const auto& go = out.grad();
                auto& gx = x.grad();
                for (std::size_t i = 0; i < idx.size(); ++i)
                    for (std::size_t j = 0; j < c; ++j) gx[idx[i] * c + j] += go[i * c + j];
            });
        }
        return out;
    }

    Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t count) {
        if (r0 + count > x.rows()) {
            throw ShapeError("slice_rows: [" + std::to_string(r0) + ", " +
                             std::to_string(r0 + count) + ") outside " + x.shape_str());
        }
        std::size_t c = x.cols();
        Tensor out = Tensor::zeros(count, c, x.requires_grad());
        std::copy(x.values().begin() + static_cast<std::ptrdiff_t>(r0 * c),
                  x.values().begin() + static_cast<std::ptrdiff_t>((r0 + count) * c),
                  out.values().begin());
        if (out.requires_grad()) {
            record([x, out, r0, count, c]() {
                const auto& go = out.grad();
                auto& gx = x.grad();
                for (std::size_t i = 0; i < count * c; ++i) gx[r0 * c + i] += go[i];
            });
        }
        return out;
    }

    Tensor mean_rows(const Tensor& x) {
        std::size_t n = x.rows(), c = x.cols();
        Tensor out = Tensor::zeros(1, c, x.requires_grad());
        for (std::size_t j = 0; j < c; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += x.at(i, j);
            out.at(0, j) = s / static_cast<double>(n);
        }
        if (out.requires_grad()) {
            record([x, out, n, c]() {
                const auto& go = out.grad();
                auto& gx = x.grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        gx[i * c + j] += go[j] / static_cast<double>(n);
            });
        }
        return out;
    }

    // Batch normalization over the rows of x (each column is one feature).
    // Training mode normalizes with batch statistics (biased variance) and
    // folds them into the running buffers; eval mode normalizes with the
    // running buffers, which act as constants. Batch statistics reduce
    // across node rows, hence the value-ordered sums.
    Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     std::vector<double>& running_mean, std::vector<double>& running_var,
                     bool training, double momentum = 0.1, double eps = 1e-5) {
        std::size_t n = x.rows(), d = x.cols();
        if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
            throw ShapeError("batchnorm: gamma " + gamma.shape_str() + " / beta " +
                             beta.shape_str() + " do not match " + x.shape_str());
        }
        if (running_mean.size() != d || running_var.size() != d) {
            throw ShapeError("batchnorm: running buffers sized " +
                             std::to_string(running_mean.size()) + " for " +
                             std::to_string(d) + " features");
        }
        std::vector<double> mean(d), var(d);
        if (training) {
            std::vector<double> terms(n);
            for (std::size_t j = 0; j < d; ++j) {
                for (std::size_t i = 0; i < n; ++i) terms[i] = x.at(i, j);
                mean[j] = canonical_sum(terms) / static_cast<double>(n);
                for (std::size_t i = 0; i < n; ++i) {
                    double dev = x.at(i, j) - mean[j];
                    terms[i] = dev * dev;
                }
                var[j] = canonical_sum(terms) / static_cast<double>(n);
                running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mean[j];
                running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var[j];
            }
        } else {
            mean = running_mean;
            var = running_var;
        }
        bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
        Tensor out = Tensor::zeros(n, d, rg);
        std::vector<double> inv_std(d);
        for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                out.at(i, j) =
                    gamma.at(0, j) * (x.at(i, j) - mean[j]) * inv_std[j] + beta.at(0, j);
        if (rg) {
            record([x, gamma, beta, out, mean = std::move(mean), inv_std = std::move(inv_std),
                    training, n, d]() {
                const auto& go = out.grad();
                const auto& xv = x.values();
                const auto& gv = gamma.values();
                if (beta.requires_grad()) {
                    auto& gb = beta.grad();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) gb[j] += go[i * d + j];
                }
                if (gamma.requires_grad()) {
                    auto& gg = gamma.grad();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j)
                            gg[j] += go[i * d + j] * (xv[i * d + j] - mean[j]) * inv_std[j];
                }
                if (x.requires_grad()) {
                    auto& gx = x.grad();
                    if (!training) {
                        for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < d; ++j)
                                gx[i * d + j] += go[i * d + j] * gv[j] * inv_std[j];
                    } else {
                        // Batch statistics depend on x, so fold their
                        // derivatives back in per column.
                        for (std::size_t j = 0; j < d; ++j) {
                            double sum_dxhat = 0.0, sum_dxhat_xc = 0.0;
                            for (std::size_t i = 0; i < n; ++i) {
                                double dxhat = go[i * d + j] * gv[j];
                                sum_dxhat += dxhat;
                                sum_dxhat_xc += dxhat * (xv[i * d + j] - mean[j]);
                            }
                            double inv_n = 1.0 / static_cast<double>(n);
                            for (std::size_t i = 0; i < n; ++i) {
                                double dxhat = go[i * d + j] * gv[j];
                                double xc = xv[i * d + j] - mean[j];
                                gx[i * d + j] +=
                                    inv_std[j] *
                                    (dxhat - inv_n * sum_dxhat -
                                     xc * inv_std[j] * inv_std[j] * inv_n * sum_dxhat_xc);
                            }
                        }
                    }
                }
            });
        }
        return out;
    }

    // scores[i][j] = u[i] + v[j] for column vectors u, v of length n.
    Tensor outer_pair_sum(const Tensor& u, const Tensor& v) {
        if (u.cols() != 1 || v.cols() != 1 || u.rows() != v.rows()) {
            throw ShapeError("outer_pair_sum expects matching column vectors, got " +
                             u.shape_str() + " and " + v.shape_str());
        }
        std::size_t n = u.rows();
        Tensor out = Tensor::zeros(n, n, u.requires_grad() || v.requires_grad());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                out.at(i, j) = u.values()[i] + v.values()[j];
        if (out.requires_grad()) {
            record([u, v, out, n]() {
                const auto& go = out.grad();
                if (u.requires_grad()) {
                    auto& gu = u.grad();
                    for (std::size_t i = 0; i < n; ++i) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j) s += go[i * n + j];
                        gu[i] += s;
                    }
                }
                if (v.requires_grad()) {
                    auto& gv = v.grad();
                    for (std::size_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < n; ++i) s += go[i * n + j];
                        gv[j] += s;
                    }
                }
            });
        }
        return out;
    }

    // Z = A * Y where A is an adjacency over graph nodes (n x n) and Y holds
    // node features (n x d). The reduction runs across nodes, so terms are
    // accumulated in value order; see canonical_sum.
    Tensor adj_matmul(const Tensor& adj, const Tensor& y) {
        if (adj.cols() != y.rows() || adj.rows() != adj.cols()) {
            throw ShapeError("adj_matmul shape mismatch: " + adj.shape_str() + " * " +
                             y.shape_str());
        }
        std::size_t n = adj.rows(), d = y.cols();
        Tensor out = Tensor::zeros(n, d, adj.requires_grad() || y.requires_grad());
        std::vector<double> terms;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                terms.clear();
                for (std::size_t p = 0; p < n; ++p) {
                    double a = adj.at(i, p);
                    if (a != 0.0) terms.push_back(a * y.at(p, j));
                }
                out.at(i, j) = canonical_sum(terms);
            }
        }
        if (out.requires_grad()) {
            record([adj, y, out, n, d]() {
                const auto& go = out.grad();
                if (adj.requires_grad()) {
                    auto& ga = adj.grad();
                    const auto& yv = y.values();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t p = 0; p < n; ++p) {
                            double s = 0.0;
                            for (std::size_t j = 0; j < d; ++j)
                                s += go[i * d + j] * yv[p * d + j];
                            ga[i * n + p] += s;
                        }
                }
                if (y.requires_grad()) {
                    auto& gy = y.grad();
                    const auto& av = adj.values();
                    for (std::size_t p = 0; p < n; ++p)
                        for (std::size_t j = 0; j < d; ++j) {
                            double s = 0.0;
                            for (std::size_t i = 0; i < n; ++i)
                                s += av[i * n + p] * go[i * d + j];
                            gy[p * d + j] += s;
                        }
                }
            });
        }
        return out;
    }

private:
    void record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }

    static void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
        if (a.rows() != b.rows() || a.cols() != b.cols()) {
            throw ShapeError(std::string(op) + " shape mismatch: " + a.shape_str() + " vs " +
                             b.shape_str());
        }
    }

    std::vector<std::function<void()>> entries_;
};

// Row-wise softmax on plain values; used for turning averaged logits into
// prediction distributions (no gradient needed there).
inline std::vector<double> softmax_row(std::span<const double> logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - mx);
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - mx) / z;
    return out;
}

}  // namespace hoigraph
