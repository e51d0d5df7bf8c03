#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "surgeon/calibration.hpp"
#include "surgeon/model.hpp"
#include "surgeon/tensor.hpp"

namespace surgeon {

/// Importance scores for the a_log matrix. per_step holds the per-time-step
/// field M_t = a_log^2 (.) S_t when the simplified score is in use; aggregate
/// is the time-summed simplified field or the full second-order score.
struct ImportanceField {
    NamedTensor per_step;   // [L, D, N], valid iff has_per_step
    NamedTensor aggregate;  // [D, N]
    bool has_per_step = false;
};

enum class MaskPattern { unstructured, nm, column };

struct PruneMask {
    NamedTensor mask;  // [D, N], entries in {0, 1}
    std::int64_t k_pruned = 0;
    MaskPattern pattern = MaskPattern::unstructured;
    std::int64_t nm_zeros = 0;
    std::int64_t nm_group = 0;
};

/// Diagonal OBS saliency: 1/2 * h_diag * w^2.
double obs_saliency_diag(double w, double h_diag);

/// Simplified score: per_step[t] = a_log^2 (.) s[t], aggregate = sum over t.
ImportanceField importance_simplified(const NamedTensor& a_log, const HiddenStats& stats);

/// Streaming accumulation of the data factor of the full score:
///   raw[d,n] += sum_{b,i} delta^2 * exp(2 delta A) * h_{i-1}^2.
void accumulate_full_score_raw(NamedTensor& raw, const NamedTensor& a, const ScanTrace& trace);

/// full[d,n] = A^2 * a_log^2 * raw[d,n]  (constant-free second-order score).
NamedTensor finalize_full_score(const NamedTensor& a_log, const NamedTensor& raw);

/// Full score from recorded traces; requires record-mode hidden states.
NamedTensor importance_full(const NamedTensor& a_log, std::span<const ScanTrace> traces);

ImportanceField make_aggregate_field(NamedTensor aggregate);

/// Number of zeros for a sparsity ratio: ceil(p * count), computed with a
/// small nudge so exact products do not ride float dust over the ceiling.
std::int64_t prune_count(double sparsity, std::int64_t count);

/// Deferred-commitment mask: per step the K least important entries are
/// candidates, and the K most frequently selected indices are pruned.
/// Frequency ties break toward the lower flat index.
PruneMask select_mask_time_frequency(const ImportanceField& field, double sparsity);

/// Direct mask from a time-aggregated field (used by the full score and the
/// magnitude baseline): prune the K smallest entries.
PruneMask select_mask_aggregate(const NamedTensor& aggregate, double sparsity);

/// N:M mask along the state axis: in every group of m_group consecutive
/// entries exactly n_zeros are pruned. With a per-step field the deferred
/// commitment protocol runs independently inside each group.
PruneMask select_mask_nm(const ImportanceField& field, std::int64_t n_zeros,
                         std::int64_t m_group);

/// a_log <- a_log (.) mask; no other parameter changes.
MambaLayer apply_mask(MambaLayer layer, const PruneMask& mask);

/// State columns ranked by the L1 norm of the aggregated score over channels;
/// returns the floor(p*N) least important column indices, ascending.
std::vector<std::int64_t> least_important_columns(const NamedTensor& aggregate, double sparsity);

/// Structured compaction: drops the selected a_log columns and the matching
/// B/C output rows of x_proj, shrinking the layer's state width.
MambaLayer prune_columns_structured(const MambaLayer& layer, const ImportanceField& field,
                                    double sparsity,
                                    std::vector<std::int64_t>* removed_columns = nullptr);

}  // namespace surgeon
