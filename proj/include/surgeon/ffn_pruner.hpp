#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "surgeon/tensor.hpp"

namespace surgeon {

/// Running sum of x x^T over calibration inputs of one module.
struct GramAccumulator {
    NamedTensor gram;  // [k, k]
    std::int64_t n_cols_seen = 0;
};

GramAccumulator make_gram_accumulator(std::int64_t width);

/// Adds X X^T for X = cols, where cols is [k x m] (one calibration sample per
/// column). Symmetry is enforced by construction.
void accumulate_gram(GramAccumulator& acc, const NamedTensor& cols);

/// Flattens captured activations [B x L x k] into gram columns [k x B*L].
NamedTensor activation_columns(const NamedTensor& act);

/// Causal depthwise unfolding: x [B x L x D] -> windows [d_conv x B*L*D],
/// column (b, t, d) holding x[b, t-d_conv+1+j, d] for j = 0..d_conv-1 with
/// zero left padding. Row j aligns with kernel tap j.
NamedTensor unfold_conv_inputs(const NamedTensor& x, std::int64_t d_conv);

double gram_trace(const GramAccumulator& acc);

struct ModuleSensitivity {
    std::string module;
    double trace = 0.0;
    std::int64_t rank_id = 0;  // 0 = least sensitive
};

/// Hessian-trace sensitivity ranking: ascending trace, ties by module name.
std::vector<ModuleSensitivity> sensitivity_scores(
    const std::vector<std::pair<std::string, const GramAccumulator*>>& modules);

struct SparsityAssignment {
    std::string module;
    double sensitivity = 0.0;
    std::int64_t rank_id = 0;
    double sparsity = 0.0;
};

/// Per-module sparsity targets. Ranked modules follow the deviation schedule
/// s + alpha - 2*alpha*id/(N-1); everything else gets the global target.
struct SparsityPlan {
    std::vector<SparsityAssignment> ranked;
    double global_target = 0.0;
    double alpha = 0.0;

    double sparsity_for(const std::string& module) const;
};

SparsityPlan allocate_sparsity(const std::vector<ModuleSensitivity>& ranked, double target,
                               double alpha);

struct ObsResult {
    NamedTensor weight;  // pruned weight, same shape as the input
    NamedTensor mask;    // 0/1, same shape
    double recon_error = 0.0;  // ||W X - W' X||^2 over the calibration gram
};

/// Per-row zero budgets whose total equals llround(sparsity * rows * k); rows
/// differ by at most one zero, with remainder zeros assigned to the rows whose
/// next prunable weight carries the smallest initial saliency.
std::vector<std::int64_t> per_row_zero_targets(const NamedTensor& weight,
                                               const GramAccumulator& acc, double sparsity);

/// Layer-wise OBS pruning with blockwise column processing. Saliency of a
/// column uses the active-set inverse-Hessian diagonal at block start; each
/// pruned weight is compensated into the not-yet-processed columns.
ObsResult prune_linear_obs(const NamedTensor& weight, const GramAccumulator& acc,
                           double sparsity, std::int64_t block_size);

/// Depthwise conv kernels treated as rows of a linear layer over unfolded
/// input windows; same procedure as prune_linear_obs.
ObsResult prune_conv_as_linear(const NamedTensor& conv_weight, const GramAccumulator& acc,
                               double sparsity, std::int64_t block_size);

/// Baseline: zero the smallest-|w| entries of the whole module, no
/// compensation. Reconstruction error measured on the same gram.
ObsResult prune_linear_magnitude(const NamedTensor& weight, const GramAccumulator& acc,
                                 double sparsity);

}  // namespace surgeon
