#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace dpssm {

// Dense row-major N-d array of doubles (last axis fastest). Shapes use int
// extents; flat indexing is size_t. All public math in this library is f64;
// weights are narrowed to f32 only at serialization time.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor full(std::vector<int> shape, double value);
    static Tensor zeros_like(const Tensor& other);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_[static_cast<size_t>(axis)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Row-major accessors for the common ranks.
    double& at(int i) { return data_[static_cast<size_t>(i)]; }
    double at(int i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int i, int j) { return data_[idx2(i, j)]; }
    double at(int i, int j) const { return data_[idx2(i, j)]; }
    double& at(int i, int j, int k) { return data_[idx3(i, j, k)]; }
    double at(int i, int j, int k) const { return data_[idx3(i, j, k)]; }
    double& at(int i, int j, int k, int l) { return data_[idx4(i, j, k, l)]; }
    double at(int i, int j, int k, int l) const { return data_[idx4(i, j, k, l)]; }

    std::size_t idx2(int i, int j) const {
        return static_cast<size_t>(i) * static_cast<size_t>(shape_[1]) + static_cast<size_t>(j);
    }
    std::size_t idx3(int i, int j, int k) const {
        return (static_cast<size_t>(i) * static_cast<size_t>(shape_[1]) + static_cast<size_t>(j)) *
                   static_cast<size_t>(shape_[2]) +
               static_cast<size_t>(k);
    }
    std::size_t idx4(int i, int j, int k, int l) const {
        return ((static_cast<size_t>(i) * static_cast<size_t>(shape_[1]) + static_cast<size_t>(j)) *
                    static_cast<size_t>(shape_[2]) +
                static_cast<size_t>(k)) *
                   static_cast<size_t>(shape_[3]) +
               static_cast<size_t>(l);
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    void fill(double value);

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const std::vector<int>& shape);

// Throws std::runtime_error naming `what` if any element is NaN or Inf.
void ensure_finite(const Tensor& t, const char* what);
void ensure_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Elementwise arithmetic on equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

double max_abs(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
double mean(const Tensor& t);
double dot(const Tensor& a, const Tensor& b);

}  // namespace dpssm
