#include "ccast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ccast {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

std::string fmt_shape(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "}";
    return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw DataError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                    b.shape_str());
}

[[noreturn]] void shape_fail1(const char* op, const Tensor& a, const std::string& detail) {
    throw DataError(std::string(op) + ": bad shape " + a.shape_str() + " (" + detail + ")");
}

void ensure_grad(const Tensor& t) {
    if (t.impl_->grad.empty()) t.impl_->grad.assign(t.numel(), 0.0);
}

/// Axis decomposition: treat the tensor as outer x axis x inner.
struct AxisView {
    std::size_t outer;
    std::size_t n;
    std::size_t inner;
};

AxisView axis_view(const std::vector<std::size_t>& shape, std::size_t axis) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    return {outer, shape[axis], inner};
}

constexpr double k_inv_sqrt2 = 0.70710678118654752440;
constexpr double k_inv_sqrt2pi = 0.39894228040143267794;

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto impl = std::make_shared<Impl>();
    impl->values.assign(shape_numel(shape), 0.0);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
}

Tensor Tensor::from_values(std::vector<std::size_t> shape, std::vector<double> values,
                           bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw DataError("tensor: " + fmt_shape(shape) + " cannot hold " +
                        std::to_string(values.size()) + " values");
    }
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar_value(double v) { return from_values({1}, {v}); }

std::vector<double>& Tensor::grad() {
    ensure_grad(*this);
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_ && !impl_->grad.empty()) {
        std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }
}

double Tensor::scalar() const {
    if (numel() != 1) throw DataError("tensor: scalar() on shape " + shape_str());
    return impl_->values[0];
}

Tensor Tensor::clone() const {
    Tensor t = from_values(impl_->shape, impl_->values, impl_->requires_grad);
    return t;
}

std::string Tensor::shape_str() const {
    return impl_ ? fmt_shape(impl_->shape) : "{undefined}";
}

Tensor Graph::result(std::vector<std::size_t> shape, std::vector<double> values,
                     bool track, std::function<void()> bw) {
    Tensor out = Tensor::from_values(std::move(shape), std::move(values));
    if (recording_ && track) {
        out.set_requires_grad(true);
        ensure_grad(out);
        records_.push_back({std::move(bw), out});
    }
    return out;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        shape_fail("matmul", a, b);
    }
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<double> out(m * n, 0.0);
    const double* pa = a.values().data();
    const double* pb = b.values().data();

    #pragma omp parallel for schedule(static) if (m * n * k > 16384)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
        const auto ii = static_cast<std::size_t>(i);
        for (std::size_t l = 0; l < k; ++l) {
            const double av = pa[ii * k + l];
            const double* brow = pb + l * n;
            double* crow = out.data() + ii * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }

    bool track = a.requires_grad() || b.requires_grad();
    Tensor res = result({m, n}, std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, b, res, m, k, n] {
            const double* dc = res.impl_->grad.data();
            if (a.requires_grad()) {
                ensure_grad(a);
                double* da = a.impl_->grad.data();
                const double* pb2 = b.values().data();
                #pragma omp parallel for schedule(static) if (m * n * k > 16384)
                for (long long i = 0; i < static_cast<long long>(m); ++i) {
                    const auto ii = static_cast<std::size_t>(i);
                    for (std::size_t l = 0; l < k; ++l) {
                        double s = 0.0;
                        const double* dcrow = dc + ii * n;
                        const double* brow = pb2 + l * n;
                        for (std::size_t j = 0; j < n; ++j) s += dcrow[j] * brow[j];
                        da[ii * k + l] += s;
                    }
                }
            }
            if (b.requires_grad()) {
                ensure_grad(b);
                double* db = b.impl_->grad.data();
                const double* pa2 = a.values().data();
                #pragma omp parallel for schedule(static) if (m * n * k > 16384)
                for (long long l = 0; l < static_cast<long long>(k); ++l) {
                    const auto ll = static_cast<std::size_t>(l);
                    for (std::size_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::size_t i2 = 0; i2 < m; ++i2) {
                            s += pa2[i2 * k + ll] * dc[i2 * n + j];
                        }
                        db[ll * n + j] += s;
                    }
                }
            }
        };
    }
    return res;
}

Tensor Graph::transpose(const Tensor& a) {
    if (a.rank() != 2) shape_fail1("transpose", a, "needs rank 2");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
    }
    bool track = a.requires_grad();
    Tensor res = result({n, m}, std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, res, m, n] {
            ensure_grad(a);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    a.impl_->grad[i * n + j] += res.impl_->grad[j * m + i];
                }
            }
        };
    }
    return res;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail("add", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    bool track = a.requires_grad() || b.requires_grad();
    Tensor res = result(a.shape(), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, b, res] {
            if (a.requires_grad()) {
                ensure_grad(a);
                for (std::size_t i = 0; i < res.numel(); ++i) {
                    a.impl_->grad[i] += res.impl_->grad[i];
                }
            }
            if (b.requires_grad()) {
                ensure_grad(b);
                for (std::size_t i = 0; i < res.numel(); ++i) {
                    b.impl_->grad[i] += res.impl_->grad[i];
                }
            }
        };
    }
    return res;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    bool track = a.requires_grad() || b.requires_grad();
    Tensor res = result(a.shape(), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, b, res] {
            if (a.requires_grad()) {
                ensure_grad(a);
                for (std::size_t i = 0; i < res.numel(); ++i) {
                    a.impl_->grad[i] += res.impl_->grad[i];
                }
            }
            if (b.requires_grad()) {
                ensure_grad(b);
                for (std::size_t i = 0; i < res.numel(); ++i) {
                    b.impl_->grad[i] -= res.impl_->grad[i];
                }
            }
        };
    }
    return res;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail("mul", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    bool track = a.requires_grad() || b.requires_grad();
    Tensor res = result(a.shape(), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, b, res] {
            if (a.requires_grad()) {
                ensure_grad(a);
                for (std::size_t i = 0; i < res.numel(); ++i) {
                    a.impl_->grad[i] += res.impl_->grad[i] * b.values()[i];
                }
            }
            if (b.requires_grad()) {
                ensure_grad(b);
                for (std::size_t i = 0; i < res.numel(); ++i) {
                    b.impl_->grad[i] += res.impl_->grad[i] * a.values()[i];
                }
            }
        };
    }
    return res;
}

Tensor Graph::scale(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    bool track = a.requires_grad();
    Tensor res = result(a.shape(), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, res, c] {
            ensure_grad(a);
            for (std::size_t i = 0; i < res.numel(); ++i) {
                a.impl_->grad[i] += res.impl_->grad[i] * c;
            }
        };
    }
    return res;
}

Tensor Graph::add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + c;
    bool track = a.requires_grad();
    Tensor res = result(a.shape(), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, res] {
            ensure_grad(a);
            for (std::size_t i = 0; i < res.numel(); ++i) {
                a.impl_->grad[i] += res.impl_->grad[i];
            }
        };
    }
    return res;
}

Tensor Graph::exp(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
    bool track = a.requires_grad();
    Tensor res = result(a.shape(), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, res] {
            ensure_grad(a);
            for (std::size_t i = 0; i < res.numel(); ++i) {
                a.impl_->grad[i] += res.impl_->grad[i] * res.values()[i];
            }
        };
    }
    return res;
}

Tensor Graph::gelu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double x = a.values()[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * k_inv_sqrt2));
    }
    bool track = a.requires_grad();
    Tensor res = result(a.shape(), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, res] {
            ensure_grad(a);
            for (std::size_t i = 0; i < res.numel(); ++i) {
                double x = a.values()[i];
                double phi = 0.5 * (1.0 + std::erf(x * k_inv_sqrt2));
                double pdf = k_inv_sqrt2pi * std::exp(-0.5 * x * x);
                a.impl_->grad[i] += res.impl_->grad[i] * (phi + x * pdf);
            }
        };
    }
    return res;
}

Tensor Graph::mean(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    const double n = static_cast<double>(a.numel());
    bool track = a.requires_grad();
    Tensor res = result({1}, {s / n}, track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, res, n] {
            ensure_grad(a);
            double g = res.impl_->grad[0] / n;
            for (std::size_t i = 0; i < a.numel(); ++i) a.impl_->grad[i] += g;
        };
    }
    return res;
}

Tensor Graph::reshape(const Tensor& a, std::vector<std::size_t> shape) {
    if (shape_numel(shape) != a.numel()) {
        shape_fail1("reshape", a, "target " + fmt_shape(shape));
    }
    bool track = a.requires_grad();
    Tensor res = result(std::move(shape), a.values(), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, res] {
            ensure_grad(a);
            for (std::size_t i = 0; i < res.numel(); ++i) {
                a.impl_->grad[i] += res.impl_->grad[i];
            }
        };
    }
    return res;
}

Tensor Graph::concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw DataError("concat: no inputs");
    const auto& ref = parts.front().shape();
    if (axis >= ref.size()) shape_fail1("concat", parts.front(), "axis out of range");
    std::size_t axis_total = 0;
    for (const auto& p : parts) {
        if (p.rank() != ref.size()) shape_fail("concat", parts.front(), p);
        for (std::size_t d = 0; d < ref.size(); ++d) {
            if (d != axis && p.shape()[d] != ref[d]) shape_fail("concat", parts.front(), p);
        }
        axis_total += p.shape()[axis];
    }
    std::vector<std::size_t> out_shape = ref;
    out_shape[axis] = axis_total;
    AxisView v = axis_view(out_shape, axis);
    std::vector<double> out(shape_numel(out_shape));

    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t pn = p.shape()[axis];
        for (std::size_t o = 0; o < v.outer; ++o) {
            const double* src = p.values().data() + o * pn * v.inner;
            double* dst = out.data() + (o * v.n + offset) * v.inner;
            std::copy(src, src + pn * v.inner, dst);
        }
        offset += pn;
    }

    bool track = std::any_of(parts.begin(), parts.end(),
                             [](const Tensor& t) { return t.requires_grad(); });
    Tensor res = result(std::move(out_shape), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [parts, res, v, axis] {
            std::size_t offset = 0;
            for (const auto& p : parts) {
                const std::size_t pn = p.shape()[axis];
                if (p.requires_grad()) {
                    ensure_grad(p);
                    for (std::size_t o = 0; o < v.outer; ++o) {
                        const double* src = res.impl_->grad.data() + (o * v.n + offset) * v.inner;
                        double* dst = p.impl_->grad.data() + o * pn * v.inner;
                        for (std::size_t i = 0; i < pn * v.inner; ++i) dst[i] += src[i];
                    }
                }
                offset += pn;
            }
        };
    }
    return res;
}

std::vector<Tensor> Graph::split(const Tensor& a, std::size_t axis,
                                 const std::vector<std::size_t>& sizes) {
    if (axis >= a.rank()) shape_fail1("split", a, "axis out of range");
    std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (total != a.shape()[axis]) {
        shape_fail1("split", a, "sizes sum to " + std::to_string(total));
    }
    AxisView v = axis_view(a.shape(), axis);
    std::vector<Tensor> outs;
    std::size_t offset = 0;
    for (std::size_t sz : sizes) {
        std::vector<std::size_t> out_shape = a.shape();
        out_shape[axis] = sz;
        std::vector<double> out(shape_numel(out_shape));
        for (std::size_t o = 0; o < v.outer; ++o) {
            const double* src = a.values().data() + (o * v.n + offset) * v.inner;
            std::copy(src, src + sz * v.inner, out.data() + o * sz * v.inner);
        }
        bool track = a.requires_grad();
        const std::size_t this_offset = offset;
        Tensor res = result(std::move(out_shape), std::move(out), track, nullptr);
        if (recording_ && track) {
            records_.back().backward = [a, res, v, sz, this_offset] {
                ensure_grad(a);
                for (std::size_t o = 0; o < v.outer; ++o) {
                    const double* src = res.impl_->grad.data() + o * sz * v.inner;
                    double* dst = a.impl_->grad.data() + (o * v.n + this_offset) * v.inner;
                    for (std::size_t i = 0; i < sz * v.inner; ++i) dst[i] += src[i];
                }
            };
        }
        outs.push_back(std::move(res));
        offset += sz;
    }
    return outs;
}

Tensor Graph::softmax(const Tensor& a, std::size_t axis) {
    if (axis >= a.rank()) shape_fail1("softmax", a, "axis out of range");
    AxisView v = axis_view(a.shape(), axis);
    std::vector<double> out(a.numel());
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
            const std::size_t base = o * v.n * v.inner + in;
            double mx = -1e308;
            for (std::size_t i = 0; i < v.n; ++i) {
                mx = std::max(mx, a.values()[base + i * v.inner]);
            }
            double sum = 0.0;
            for (std::size_t i = 0; i < v.n; ++i) {
                double e = std::exp(a.values()[base + i * v.inner] - mx);
                out[base + i * v.inner] = e;
                sum += e;
            }
            for (std::size_t i = 0; i < v.n; ++i) out[base + i * v.inner] /= sum;
        }
    }
    bool track = a.requires_grad();
    Tensor res = result(a.shape(), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, res, v] {
            ensure_grad(a);
            for (std::size_t o = 0; o < v.outer; ++o) {
                for (std::size_t in = 0; in < v.inner; ++in) {
                    const std::size_t base = o * v.n * v.inner + in;
                    double dot = 0.0;
                    for (std::size_t i = 0; i < v.n; ++i) {
                        std::size_t idx = base + i * v.inner;
                        dot += res.impl_->grad[idx] * res.values()[idx];
                    }
                    for (std::size_t i = 0; i < v.n; ++i) {
                        std::size_t idx = base + i * v.inner;
                        a.impl_->grad[idx] +=
                            res.values()[idx] * (res.impl_->grad[idx] - dot);
                    }
                }
            }
        };
    }
    return res;
}

Tensor Graph::layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                         double eps) {
    if (a.rank() < 1) shape_fail1("layer_norm", a, "needs rank >= 1");
    const std::size_t n = a.shape().back();
    if (gamma.numel() != n || beta.numel() != n) shape_fail("layer_norm", gamma, beta);
    const std::size_t rows = a.numel() / n;

    auto yhat = std::make_shared<std::vector<double>>(a.numel());
    auto inv_sd = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(a.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a.values().data() + r * n;
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += x[i];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
        var /= static_cast<double>(n);
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_sd)[r] = is;
        for (std::size_t i = 0; i < n; ++i) {
            double yh = (x[i] - mu) * is;
            (*yhat)[r * n + i] = yh;
            out[r * n + i] = yh * gamma.values()[i] + beta.values()[i];
        }
    }
    bool track = a.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    Tensor res = result(a.shape(), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [a, gamma, beta, res, yhat, inv_sd, rows, n] {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* dout = res.impl_->grad.data() + r * n;
                const double* yh = yhat->data() + r * n;
                if (gamma.requires_grad()) {
                    ensure_grad(gamma);
                    for (std::size_t i = 0; i < n; ++i) {
                        gamma.impl_->grad[i] += dout[i] * yh[i];
                    }
                }
                if (beta.requires_grad()) {
                    ensure_grad(beta);
                    for (std::size_t i = 0; i < n; ++i) beta.impl_->grad[i] += dout[i];
                }
                if (a.requires_grad()) {
                    ensure_grad(a);
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        double dyh = dout[i] * gamma.values()[i];
                        m1 += dyh;
                        m2 += dyh * yh[i];
                    }
                    m1 /= static_cast<double>(n);
                    m2 /= static_cast<double>(n);
                    for (std::size_t i = 0; i < n; ++i) {
                        double dyh = dout[i] * gamma.values()[i];
                        a.impl_->grad[r * n + i] += (dyh - m1 - yh[i] * m2) * (*inv_sd)[r];
                    }
                }
            }
        };
    }
    return res;
}

Tensor Graph::linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.shape()[1] != w.shape()[0]) {
        shape_fail("linear", x, w);
    }
    if (b.numel() != w.shape()[1]) shape_fail("linear", w, b);
    Tensor y = matmul(x, w);
    // Bias broadcast over the leading axis (the one sanctioned broadcast).
    const std::size_t m = y.shape()[0], n = y.shape()[1];
    std::vector<double> out(y.numel());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = y.values()[i * n + j] + b.values()[j];
        }
    }
    bool track = y.requires_grad() || b.requires_grad();
    Tensor res = result(y.shape(), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [y, b, res, m, n] {
            if (y.requires_grad()) {
                ensure_grad(y);
                for (std::size_t i = 0; i < res.numel(); ++i) {
                    y.impl_->grad[i] += res.impl_->grad[i];
                }
            }
            if (b.requires_grad()) {
                ensure_grad(b);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        b.impl_->grad[j] += res.impl_->grad[i * n + j];
                    }
                }
            }
        };
    }
    return res;
}

Tensor Graph::scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                           std::size_t heads) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) shape_fail("attention", q, k);
    if (q.shape() != k.shape() || q.shape() != v.shape()) shape_fail("attention", q, v);
    const std::size_t d = q.shape()[1];
    if (heads == 0 || d % heads != 0) {
        shape_fail1("attention", q, "width not divisible by " + std::to_string(heads) +
                                        " heads");
    }
    const std::size_t dh = d / heads;
    std::vector<std::size_t> sizes(heads, dh);
    auto qs = split(q, 1, sizes);
    auto ks = split(k, 1, sizes);
    auto vs = split(v, 1, sizes);
    std::vector<Tensor> outs;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor scores = scale(matmul(qs[h], transpose(ks[h])), inv_scale);
        Tensor attn = softmax(scores, 1);
        outs.push_back(matmul(attn, vs[h]));
    }
    return concat(outs, 1);
}

Tensor Graph::mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) shape_fail("mse_loss", pred, target);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        double d = pred.values()[i] - target.values()[i];
        s += d * d;
    }
    const double n = static_cast<double>(pred.numel());
    bool track = pred.requires_grad() || target.requires_grad();
    Tensor res = result({1}, {s / n}, track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [pred, target, res, n] {
            double g = 2.0 * res.impl_->grad[0] / n;
            if (pred.requires_grad()) {
                ensure_grad(pred);
                for (std::size_t i = 0; i < pred.numel(); ++i) {
                    pred.impl_->grad[i] += g * (pred.values()[i] - target.values()[i]);
                }
            }
            if (target.requires_grad()) {
                ensure_grad(target);
                for (std::size_t i = 0; i < pred.numel(); ++i) {
                    target.impl_->grad[i] -= g * (pred.values()[i] - target.values()[i]);
                }
            }
        };
    }
    return res;
}

Tensor Graph::gaussian_reparam(const Tensor& mu, const Tensor& log_sigma, const Tensor& eps) {
    if (mu.shape() != log_sigma.shape() || mu.shape() != eps.shape()) {
        shape_fail("gaussian_reparam", mu, log_sigma);
    }
    std::vector<double> out(mu.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = mu.values()[i] + std::exp(log_sigma.values()[i]) * eps.values()[i];
    }
    bool track = mu.requires_grad() || log_sigma.requires_grad() || eps.requires_grad();
    Tensor res = result(mu.shape(), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [mu, log_sigma, eps, res] {
            if (mu.requires_grad()) {
                ensure_grad(mu);
                for (std::size_t i = 0; i < res.numel(); ++i) {
                    mu.impl_->grad[i] += res.impl_->grad[i];
                }
            }
            if (log_sigma.requires_grad()) {
                ensure_grad(log_sigma);
                for (std::size_t i = 0; i < res.numel(); ++i) {
                    log_sigma.impl_->grad[i] += res.impl_->grad[i] *
                                                std::exp(log_sigma.values()[i]) *
                                                eps.values()[i];
                }
            }
            if (eps.requires_grad()) {
                ensure_grad(eps);
                for (std::size_t i = 0; i < res.numel(); ++i) {
                    eps.impl_->grad[i] +=
                        res.impl_->grad[i] * std::exp(log_sigma.values()[i]);
                }
            }
        };
    }
    return res;
}

Tensor Graph::gather(const Tensor& x, const std::vector<std::size_t>& index,
                     std::vector<std::size_t> out_shape) {
    if (shape_numel(out_shape) != index.size()) {
        shape_fail1("gather", x, "index count " + std::to_string(index.size()));
    }
    std::vector<double> out(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= x.numel()) throw DataError("gather: index out of range");
        out[i] = x.values()[index[i]];
    }
    bool track = x.requires_grad();
    // The index vector is captured by value; patchify index tables are small.
    Tensor res = result(std::move(out_shape), std::move(out), track, nullptr);
    if (recording_ && track) {
        records_.back().backward = [x, res, index] {
            ensure_grad(x);
            for (std::size_t i = 0; i < index.size(); ++i) {
                x.impl_->grad[index[i]] += res.impl_->grad[i];
            }
        };
    }
    return res;
}

void Graph::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw DataError("backward: non-scalar loss" +
                        (loss.defined() ? " " + loss.shape_str() : std::string()));
    }
    if (!loss.requires_grad()) return;  // disconnected from any parameter
    // Intermediates are reset so a repeated sweep reproduces identical
    // values; leaf gradients accumulate and are the caller's to zero.
    for (auto& r : records_) r.out.zero_grad();
    ensure_grad(loss);
    loss.impl_->grad[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (it->backward) it->backward();
    }
}

}  // namespace ccast
