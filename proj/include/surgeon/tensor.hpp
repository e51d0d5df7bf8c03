#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "surgeon/errors.hpp"

namespace surgeon {

/// Dense row-major tensor, rank 1..4, 64-bit storage. Checkpoints serialize
/// the same data as float32; everything in memory stays double.
class NamedTensor {
public:
    NamedTensor() = default;
    NamedTensor(std::string name, std::vector<std::int64_t> shape);
    NamedTensor(std::string name, std::vector<std::int64_t> shape, std::vector<double> data);

    const std::string& name() const { return name_; }
    void set_name(std::string n) { name_ = std::move(n); }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(std::size_t axis) const { return shape_[axis]; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }
    std::span<const double> flat() const { return {data_.data(), data_.size()}; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    double& at(std::int64_t i, std::int64_t j) {
        return data_[static_cast<std::size_t>(i * stride_[0] + j)];
    }
    double at(std::int64_t i, std::int64_t j) const {
        return data_[static_cast<std::size_t>(i * stride_[0] + j)];
    }
    double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] + k)];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] + k)];
    }
    double& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] + k * stride_[2] + l)];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] + k * stride_[2] + l)];
    }

    bool same_shape(const NamedTensor& other) const { return shape_ == other.shape_; }

private:
    void init_strides();

    std::string name_;
    std::vector<std::int64_t> shape_;
    std::int64_t stride_[3] = {0, 0, 0};  // strides for all but the last axis
    std::vector<double> data_;
};

/// a[m x k] * b[k x n] -> [m x n]; summation runs over k in ascending order.
NamedTensor matmul(const NamedTensor& a, const NamedTensor& b);

/// Cholesky factorization of a symmetric positive-definite matrix. Only the
/// lower triangle of the input is read.
class CholeskyFactor {
public:
    explicit CholeskyFactor(const NamedTensor& h);

    std::int64_t size() const { return n_; }

    /// Solves h * x = rhs for rhs with shape [n x m].
    NamedTensor solve(const NamedTensor& rhs) const;

    /// Full inverse of h.
    NamedTensor inverse() const;

    /// Diagonal of h^-1, via one forward solve per unit vector.
    std::vector<double> inverse_diagonal() const;

private:
    void solve_in_place(double* x, std::int64_t m) const;

    std::int64_t n_ = 0;
    std::vector<double> lower_;  // row-major lower-triangular factor
};

CholeskyFactor spd_factor(const NamedTensor& h);
NamedTensor spd_factor_solve(const NamedTensor& h, const NamedTensor& rhs);

/// Indices of the k smallest values; ties broken by ascending flat index.
std::vector<std::int64_t> arg_smallest_k(std::span<const double> values, std::int64_t k);

/// Indices of the k largest values; ties broken by ascending flat index.
std::vector<std::int64_t> arg_largest_k(std::span<const double> values, std::int64_t k);

}  // namespace surgeon
