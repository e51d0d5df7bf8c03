#pragma once

#include <cstdint>
#include <span>

#include "surgeon/model.hpp"
#include "surgeon/ssm_pruner.hpp"
#include "surgeon/tensor.hpp"

namespace surgeon {

/// (1/B) * sum_b ||y_b - y_ref_b||^2 over the leading (batch) axis.
double loss_l2(const NamedTensor& y, const NamedTensor& y_ref);

struct FdConfig {
    double step = 1e-4;  // relative central-difference step
};

/// Central-difference diagonal of d^2 L / d a_log^2, where L is the batch-mean
/// squared deviation of the selective-scan output from y_ref. Each probe
/// re-runs the full selective scan.
NamedTensor fd_hessian_diag(const MambaLayer& layer, const NamedTensor& x,
                            const NamedTensor& y_ref, const FdConfig& cfg = {});

/// Saliency from a measured Hessian diagonal: 1/2 * diag (.) a_log^2.
NamedTensor fd_diagonal_saliency(const NamedTensor& fd_diag, const NamedTensor& a_log);

/// Enumerates every k-zero mask over a_log (guarded to D*N <= 16) and returns
/// the one whose masked scan output deviates least from the dense output on
/// the given input. Ties resolve to the lexicographically smallest index set.
PruneMask exhaustive_best_mask(const MambaLayer& layer, const NamedTensor& x,
                               std::int64_t k_zeros);

/// Spearman rank correlation with average ranks on ties.
double spearman_rank_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace surgeon
