#include "usflab/tensor.hpp"

#include <cmath>
#include <numeric>

namespace usflab {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_size(shape_)) {
        throw ContractError("Tensor: value count does not match shape");
    }
}

Tensor Tensor::of(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ContractError("Tensor::rows: rank-2 required");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ContractError("Tensor::cols: rank-2 required");
    return shape_[1];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }

double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::row(std::size_t i) const {
    const std::size_t c = cols();
    Tensor out({c});
    for (std::size_t j = 0; j < c; ++j) out[j] = at(i, j);
    return out;
}

} // namespace usflab
