#include "surgeon/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "surgeon/parallel.hpp"

namespace surgeon {

double loss_l2(const NamedTensor& y, const NamedTensor& y_ref) {
    if (!y.same_shape(y_ref)) {
        throw DimensionError("loss_l2: shapes disagree");
    }
    const std::int64_t bsz = y.dim(0);
    double total = 0.0;
    for (std::int64_t i = 0; i < y.numel(); ++i) {
        const double d = y[i] - y_ref[i];
        total += d * d;
    }
    return total / static_cast<double>(bsz);
}

NamedTensor fd_hessian_diag(const MambaLayer& layer, const NamedTensor& x,
                            const NamedTensor& y_ref, const FdConfig& cfg) {
    if (!(cfg.step > 0.0)) {
        throw ArgumentError("finite-difference step must be positive");
    }
    const std::int64_t plane = layer.a_log.numel();
    const double loss_base = loss_l2(selective_scan(layer, x, false, nullptr), y_ref);
    NamedTensor diag("fd_hessian_diag", layer.a_log.shape());

    parallel_for(plane, [&](std::int64_t j) {
        const double step = std::max(cfg.step, cfg.step * std::fabs(layer.a_log[j]));
        MambaLayer probe = layer;
        probe.a_log[j] = layer.a_log[j] + step;
        const double loss_plus = loss_l2(selective_scan(probe, x, false, nullptr), y_ref);
        probe.a_log[j] = layer.a_log[j] - step;
        const double loss_minus = loss_l2(selective_scan(probe, x, false, nullptr), y_ref);
        const double h = (loss_plus - 2.0 * loss_base + loss_minus) / (step * step);
        if (!std::isfinite(h)) {
            throw NumericError("finite-difference loss is non-finite at flat index " +
                               std::to_string(j));
        }
        diag[j] = h;
    });
    return diag;
}

NamedTensor fd_diagonal_saliency(const NamedTensor& fd_diag, const NamedTensor& a_log) {
    if (!fd_diag.same_shape(a_log)) {
        throw DimensionError("fd saliency: shapes disagree");
    }
    NamedTensor sal("fd_saliency", a_log.shape());
    for (std::int64_t j = 0; j < sal.numel(); ++j) {
        sal[j] = obs_saliency_diag(a_log[j], fd_diag[j]);
    }
    return sal;
}

PruneMask exhaustive_best_mask(const MambaLayer& layer, const NamedTensor& x,
                               std::int64_t k_zeros) {
    const std::int64_t plane = layer.a_log.numel();
    if (plane > 16) {
        throw ArgumentError("exhaustive mask search is guarded to D*N <= 16");
    }
    if (k_zeros < 0 || k_zeros > plane) {
        throw ArgumentError("zero count out of range");
    }
    const NamedTensor y_dense = selective_scan(layer, x, false, nullptr);

    std::vector<std::int64_t> pick(static_cast<std::size_t>(k_zeros));
    std::iota(pick.begin(), pick.end(), 0);
    std::vector<std::int64_t> best;
    double best_err = 0.0;
    bool have_best = false;

    MambaLayer probe = layer;
    const auto evaluate = [&](const std::vector<std::int64_t>& zeros) {
        probe.a_log = layer.a_log;
        for (const std::int64_t z : zeros) {
            probe.a_log[z] = 0.0;
        }
        const double err = loss_l2(selective_scan(probe, x, false, nullptr), y_dense);
        // strict improvement keeps the first (lexicographically smallest) set
        if (!have_best || err < best_err) {
            have_best = true;
            best_err = err;
            best = zeros;
        }
    };

    if (k_zeros == 0) {
        evaluate({});
    } else {
        // enumerate index combinations in lexicographic order
        while (true) {
            evaluate(pick);
            std::int64_t i = k_zeros - 1;
            while (i >= 0 && pick[static_cast<std::size_t>(i)] == plane - k_zeros + i) {
                --i;
            }
            if (i < 0) {
                break;
            }
            ++pick[static_cast<std::size_t>(i)];
            for (std::int64_t j = i + 1; j < k_zeros; ++j) {
                pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
            }
        }
    }

    PruneMask pm;
    pm.mask = NamedTensor("mask", layer.a_log.shape());
    std::fill(pm.mask.storage().begin(), pm.mask.storage().end(), 1.0);
    for (const std::int64_t z : best) {
        pm.mask[z] = 0.0;
    }
    pm.k_pruned = k_zeros;
    pm.pattern = MaskPattern::unstructured;
    return pm;
}

namespace {

std::vector<double> average_ranks(std::span<const double> values) {
    const std::int64_t n = static_cast<std::int64_t>(values.size());
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)];
    });
    std::vector<double> ranks(static_cast<std::size_t>(n), 0.0);
    std::int64_t i = 0;
    while (i < n) {
        std::int64_t j = i;
        while (j + 1 < n && values[static_cast<std::size_t>(order[static_cast<std::size_t>(j + 1)])] ==
                                values[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::int64_t t = i; t <= j; ++t) {
            ranks[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] = avg;
        }
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman_rank_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) {
        throw DimensionError("spearman: inputs must be non-empty and equal length");
    }
    const std::vector<double> ra = average_ranks(a);
    const std::vector<double> rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double mean_a = 0.0;
    double mean_b = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        mean_a += ra[i];
        mean_b += rb[i];
    }
    mean_a /= n;
    mean_b /= n;
    double cov = 0.0;
    double var_a = 0.0;
    double var_b = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - mean_a;
        const double db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0) {
        return 0.0;
    }
    return cov / std::sqrt(var_a * var_b);
}

}  // namespace surgeon
