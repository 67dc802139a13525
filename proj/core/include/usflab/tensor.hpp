#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "usflab/error.hpp"

namespace usflab {

/// Dense row-major tensor of doubles. Rank 1 and 2 are the common cases;
/// higher ranks are supported but unused by the layers.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    /// Rank-1 tensor from literal data. A named factory on purpose: a
    /// braced list of integers in Tensor's constructor must always mean a
    /// shape, never values.
    static Tensor of(std::vector<double> values);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double v);
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }

    // Rank-2 accessors.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double v);

    Tensor row(std::size_t i) const; // rank-2 -> rank-1 copy

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// Trainable value: tensor plus accumulated gradient of identical shape.
struct ParamNode {
    Tensor value;
    Tensor grad;
    bool requires_grad = true;

    ParamNode() = default;
    explicit ParamNode(Tensor v)
        : value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

    void zero_grad() { grad.fill(0.0); }
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

} // namespace usflab
