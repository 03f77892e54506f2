#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ccast/errors.hpp"

namespace ccast {

/// Dense 64-bit tensor handle. Copies share storage; use clone() for a deep
/// copy. Gradients live beside the values and are allocated on first use.
class Tensor {
public:
    struct Impl {
        std::vector<std::size_t> shape;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
    };

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value,
                       bool requires_grad = false);
    static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar_value(double v);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->values.size(); }
    std::vector<double>& values() { return impl_->values; }
    const std::vector<double>& values() const { return impl_->values; }
    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void set_requires_grad(bool b) { impl_->requires_grad = b; }

    /// Gradient buffer; allocates zeros on first access.
    std::vector<double>& grad();
    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    void zero_grad();

    double scalar() const;
    Tensor clone() const;
    std::string shape_str() const;

    std::shared_ptr<Impl> impl_;

private:
    explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
};

/// Dynamic reverse-mode tape. Build one Graph per forward pass and per
/// thread; parameters shared across graphs must not be mutated while any
/// graph is live. With recording off the ops run forward-only.
class Graph {
public:
    explicit Graph(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& a);
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double c);
    Tensor add_scalar(const Tensor& a, double c);
    Tensor exp(const Tensor& a);
    Tensor gelu(const Tensor& a);
    Tensor mean(const Tensor& a);
    Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);
    Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
    std::vector<Tensor> split(const Tensor& a, std::size_t axis,
                              const std::vector<std::size_t>& sizes);
    Tensor softmax(const Tensor& a, std::size_t axis);
    Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                      double eps = 1e-5);
    /// y = x[m,k] * w[k,n] + b[n] broadcast over rows.
    Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
    Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                        std::size_t heads);
    Tensor mse_loss(const Tensor& pred, const Tensor& target);
    /// mu + exp(log_sigma) * eps; eps is the externally supplied noise.
    Tensor gaussian_reparam(const Tensor& mu, const Tensor& log_sigma, const Tensor& eps);
    /// out[i] = x[index[i]]; backward scatter-adds. index entries must be
    /// valid positions in x.
    Tensor gather(const Tensor& x, const std::vector<std::size_t>& index,
                  std::vector<std::size_t> out_shape);

    /// Reverse sweep from a scalar loss; accumulates into the grad buffers
    /// of every tensor on the tape that requires grad.
    void backward(const Tensor& loss);

    std::size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

private:
    struct Record {
        std::function<void()> backward;
        Tensor out;
    };

    Tensor result(std::vector<std::size_t> shape, std::vector<double> values,
                  bool track, std::function<void()> bw);

    std::vector<Record> records_;
    bool recording_ = true;
};

}  // namespace ccast
