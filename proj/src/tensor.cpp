#include "dpssm/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dpssm {

std::size_t shape_product(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor extent must be positive");
        n *= static_cast<size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw std::invalid_argument("tensor data size does not match shape");
    }
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape_); }

void Tensor::fill(double value) {
    for (double& v : data_) v = value;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ",";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

void ensure_finite(const Tensor& t, const char* what) {
    for (double v : t.vec()) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string(what) + ": non-finite value");
        }
    }
}

void ensure_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    ensure_same_shape(a, b, "add");
    Tensor out = a;
    for (size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    ensure_same_shape(a, b, "sub");
    Tensor out = a;
    for (size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    ensure_same_shape(a, b, "mul");
    Tensor out = a;
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.vec()) m = std::max(m, std::fabs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    ensure_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

double mean(const Tensor& t) {
    if (t.size() == 0) throw std::invalid_argument("mean of empty tensor");
    double s = 0.0;
    for (double v : t.vec()) s += v;
    return s / static_cast<double>(t.size());
}

double dot(const Tensor& a, const Tensor& b) {
    ensure_same_shape(a, b, "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace dpssm
