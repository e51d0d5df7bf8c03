#include "surgeon/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace surgeon {

namespace {

std::int64_t checked_numel(const std::vector<std::int64_t>& shape) {
    if (shape.empty() || shape.size() > 4) {
        throw DimensionError("tensor rank must be between 1 and 4, got " +
                             std::to_string(shape.size()));
    }
    std::int64_t n = 1;
    for (const std::int64_t d : shape) {
        if (d < 1) {
            throw DimensionError("tensor dimensions must be >= 1");
        }
        n *= d;
    }
    return n;
}

}  // namespace

NamedTensor::NamedTensor(std::string name, std::vector<std::int64_t> shape)
    : name_(std::move(name)), shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(checked_numel(shape_)), 0.0);
    init_strides();
}

NamedTensor::NamedTensor(std::string name, std::vector<std::int64_t> shape,
                         std::vector<double> data)
    : name_(std::move(name)), shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw DimensionError("tensor '" + name_ + "': data length " +
                             std::to_string(data_.size()) + " does not match shape product");
    }
    init_strides();
}

void NamedTensor::init_strides() {
    std::int64_t s = 1;
    stride_[0] = stride_[1] = stride_[2] = 0;
    for (std::size_t axis = shape_.size(); axis-- > 1;) {
        s *= shape_[axis];
        stride_[axis - 1] = s;
    }
}

NamedTensor matmul(const NamedTensor& a, const NamedTensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul requires rank-2 operands");
    }
    const std::int64_t m = a.dim(0);
    const std::int64_t k = a.dim(1);
    const std::int64_t n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul inner dimensions disagree: " + std::to_string(k) + " vs " +
                             std::to_string(b.dim(0)));
    }
    NamedTensor out(a.name() + "*" + b.name(), {m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                acc += pa[i * k + kk] * pb[kk * n + j];
            }
            po[i * n + j] = acc;
        }
    }
    return out;
}

CholeskyFactor::CholeskyFactor(const NamedTensor& h) {
    if (h.rank() != 2 || h.dim(0) != h.dim(1)) {
        throw DimensionError("spd factorization requires a square matrix");
    }
    n_ = h.dim(0);
    lower_.assign(static_cast<std::size_t>(n_ * n_), 0.0);
    const double* ph = h.data();
    for (std::int64_t i = 0; i < n_; ++i) {
        for (std::int64_t j = 0; j <= i; ++j) {
            double acc = ph[i * n_ + j];
            for (std::int64_t k = 0; k < j; ++k) {
                acc -= lower_[static_cast<std::size_t>(i * n_ + k)] *
                       lower_[static_cast<std::size_t>(j * n_ + k)];
            }
            if (i == j) {
                if (!(acc > 0.0) || !std::isfinite(acc)) {
                    throw NumericError("matrix is not positive definite at pivot " +
                                       std::to_string(i) + "; increase damping");
                }
                lower_[static_cast<std::size_t>(i * n_ + j)] = std::sqrt(acc);
            } else {
                lower_[static_cast<std::size_t>(i * n_ + j)] =
                    acc / lower_[static_cast<std::size_t>(j * n_ + j)];
            }
        }
    }
}

void CholeskyFactor::solve_in_place(double* x, std::int64_t m) const {
    // forward substitution L y = x, then backward L^T x = y; x is [n x m]
    for (std::int64_t i = 0; i < n_; ++i) {
        for (std::int64_t k = 0; k < i; ++k) {
            const double lik = lower_[static_cast<std::size_t>(i * n_ + k)];
            for (std::int64_t c = 0; c < m; ++c) {
                x[i * m + c] -= lik * x[k * m + c];
            }
        }
        const double d = lower_[static_cast<std::size_t>(i * n_ + i)];
        for (std::int64_t c = 0; c < m; ++c) {
            x[i * m + c] /= d;
        }
    }
    for (std::int64_t i = n_; i-- > 0;) {
        for (std::int64_t k = i + 1; k < n_; ++k) {
            const double lki = lower_[static_cast<std::size_t>(k * n_ + i)];
            for (std::int64_t c = 0; c < m; ++c) {
                x[i * m + c] -= lki * x[k * m + c];
            }
        }
        const double d = lower_[static_cast<std::size_t>(i * n_ + i)];
        for (std::int64_t c = 0; c < m; ++c) {
            x[i * m + c] /= d;
        }
    }
}

NamedTensor CholeskyFactor::solve(const NamedTensor& rhs) const {
    if (rhs.rank() != 2 || rhs.dim(0) != n_) {
        throw DimensionError("solve: rhs must be [n x m] with n = " + std::to_string(n_));
    }
    NamedTensor x(rhs.name(), rhs.shape(), rhs.storage());
    solve_in_place(x.data(), rhs.dim(1));
    return x;
}

NamedTensor CholeskyFactor::inverse() const {
    NamedTensor eye("identity", {n_, n_});
    for (std::int64_t i = 0; i < n_; ++i) {
        eye.at(i, i) = 1.0;
    }
    NamedTensor inv = solve(eye);
    inv.set_name("inverse");
    return inv;
}

std::vector<double> CholeskyFactor::inverse_diagonal() const {
    // [h^-1]_jj = || L^-1 e_j ||^2
    std::vector<double> diag(static_cast<std::size_t>(n_), 0.0);
    std::vector<double> col(static_cast<std::size_t>(n_));
    for (std::int64_t j = 0; j < n_; ++j) {
        std::fill(col.begin(), col.end(), 0.0);
        col[static_cast<std::size_t>(j)] = 1.0;
        for (std::int64_t i = j; i < n_; ++i) {
            double acc = col[static_cast<std::size_t>(i)];
            for (std::int64_t k = j; k < i; ++k) {
                acc -= lower_[static_cast<std::size_t>(i * n_ + k)] * col[static_cast<std::size_t>(k)];
            }
            col[static_cast<std::size_t>(i)] = acc / lower_[static_cast<std::size_t>(i * n_ + i)];
        }
        double norm2 = 0.0;
        for (std::int64_t i = j; i < n_; ++i) {
            norm2 += col[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(i)];
        }
        diag[static_cast<std::size_t>(j)] = norm2;
    }
    return diag;
}

CholeskyFactor spd_factor(const NamedTensor& h) { return CholeskyFactor(h); }

NamedTensor spd_factor_solve(const NamedTensor& h, const NamedTensor& rhs) {
    return CholeskyFactor(h).solve(rhs);
}

namespace {

std::vector<std::int64_t> sorted_indices(std::span<const double> values, std::int64_t k,
                                         bool largest) {
    const std::int64_t n = static_cast<std::int64_t>(values.size());
    if (k < 0 || k > n) {
        throw ArgumentError("selection count " + std::to_string(k) + " out of range [0, " +
                            std::to_string(n) + "]");
    }
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    if (largest) {
        std::sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
            if (values[static_cast<std::size_t>(a)] != values[static_cast<std::size_t>(b)]) {
                return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
            }
            return a < b;
        });
    } else {
        std::sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
            if (values[static_cast<std::size_t>(a)] != values[static_cast<std::size_t>(b)]) {
                return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)];
            }
            return a < b;
        });
    }
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace

std::vector<std::int64_t> arg_smallest_k(std::span<const double> values, std::int64_t k) {
    return sorted_indices(values, k, /*largest=*/false);
}

std::vector<std::int64_t> arg_largest_k(std::span<const double> values, std::int64_t k) {
    return sorted_indices(values, k, /*largest=*/true);
}

}  // namespace surgeon
