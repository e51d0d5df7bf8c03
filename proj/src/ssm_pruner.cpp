#include "surgeon/ssm_pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace surgeon {

double obs_saliency_diag(double w, double h_diag) { return 0.5 * h_diag * w * w; }

ImportanceField importance_simplified(const NamedTensor& a_log, const HiddenStats& stats) {
    if (stats.s.rank() != 3 || stats.s.dim(1) != a_log.dim(0) || stats.s.dim(2) != a_log.dim(1)) {
        throw DimensionError("importance_simplified: stats shape disagrees with a_log");
    }
    const std::int64_t len = stats.s.dim(0);
    const std::int64_t plane = a_log.numel();

    ImportanceField field;
    field.has_per_step = true;
    field.per_step = NamedTensor("importance_per_step", stats.s.shape());
    field.aggregate = NamedTensor("importance", a_log.shape());
    const double* pa = a_log.data();
    const double* ps = stats.s.data();
    double* pp = field.per_step.data();
    double* pg = field.aggregate.data();
    for (std::int64_t t = 0; t < len; ++t) {
        for (std::int64_t j = 0; j < plane; ++j) {
            const double v = pa[j] * pa[j] * ps[t * plane + j];
            pp[t * plane + j] = v;
            pg[j] += v;
        }
    }
    return field;
}

void accumulate_full_score_raw(NamedTensor& raw, const NamedTensor& a, const ScanTrace& trace) {
    if (trace.hidden.empty() || trace.hidden.rank() != 4) {
        throw StateError("full importance score needs record-mode hidden states");
    }
    const std::int64_t bsz = trace.hidden.dim(0);
    const std::int64_t len = trace.hidden.dim(1);
    const std::int64_t d_inner = trace.hidden.dim(2);
    const std::int64_t d_state = trace.hidden.dim(3);
    if (raw.dim(0) != d_inner || raw.dim(1) != d_state || a.dim(0) != d_inner ||
        a.dim(1) != d_state) {
        throw DimensionError("full score accumulation: shape mismatch");
    }
    const double* ph = trace.hidden.data();
    const double* pd = trace.deltas.data();
    const double* pa = a.data();
    double* pr = raw.data();
    const std::int64_t plane = d_inner * d_state;
    for (std::int64_t b = 0; b < bsz; ++b) {
        // the i = 0 term vanishes because h_{-1} = 0
        for (std::int64_t i = 1; i < len; ++i) {
            for (std::int64_t d = 0; d < d_inner; ++d) {
                const double dt = pd[(b * len + i) * d_inner + d];
                const double dt2 = dt * dt;
                for (std::int64_t n = 0; n < d_state; ++n) {
                    const double h_prev = ph[(b * len + (i - 1)) * plane + d * d_state + n];
                    pr[d * d_state + n] +=
                        dt2 * std::exp(2.0 * dt * pa[d * d_state + n]) * h_prev * h_prev;
                }
            }
        }
    }
}

NamedTensor finalize_full_score(const NamedTensor& a_log, const NamedTensor& raw) {
    if (!a_log.same_shape(raw)) {
        throw DimensionError("finalize_full_score: shape mismatch");
    }
    const NamedTensor a = parameterize_a(a_log);
    NamedTensor full("importance_full", a_log.shape());
    for (std::int64_t j = 0; j < full.numel(); ++j) {
        full[j] = a[j] * a[j] * a_log[j] * a_log[j] * raw[j];
    }
    return full;
}

NamedTensor importance_full(const NamedTensor& a_log, std::span<const ScanTrace> traces) {
    if (traces.empty()) {
        throw StateError("importance_full: no recorded traces");
    }
    const NamedTensor a = parameterize_a(a_log);
    NamedTensor raw("full_score_raw", a_log.shape());
    for (const ScanTrace& trace : traces) {
        accumulate_full_score_raw(raw, a, trace);
    }
    return finalize_full_score(a_log, raw);
}

ImportanceField make_aggregate_field(NamedTensor aggregate) {
    ImportanceField field;
    field.aggregate = std::move(aggregate);
    field.has_per_step = false;
    return field;
}

std::int64_t prune_count(double sparsity, std::int64_t count) {
    if (sparsity < 0.0 || sparsity > 1.0) {
        throw ArgumentError("sparsity must lie in [0, 1], got " + std::to_string(sparsity));
    }
    return static_cast<std::int64_t>(std::ceil(sparsity * static_cast<double>(count) - 1e-9));
}

namespace {

PruneMask mask_from_zero_indices(const std::vector<std::int64_t>& zeros, std::int64_t d_inner,
                                 std::int64_t d_state) {
    PruneMask pm;
    pm.mask = NamedTensor("mask", {d_inner, d_state});
    std::fill(pm.mask.storage().begin(), pm.mask.storage().end(), 1.0);
    for (const std::int64_t z : zeros) {
        pm.mask[z] = 0.0;
    }
    pm.k_pruned = static_cast<std::int64_t>(zeros.size());
    return pm;
}

}  // namespace

PruneMask select_mask_time_frequency(const ImportanceField& field, double sparsity) {
    if (!field.has_per_step) {
        throw StateError("time-frequency mask selection needs a per-step importance field");
    }
    const std::int64_t len = field.per_step.dim(0);
    const std::int64_t d_inner = field.per_step.dim(1);
    const std::int64_t d_state = field.per_step.dim(2);
    const std::int64_t plane = d_inner * d_state;
    const std::int64_t k = prune_count(sparsity, plane);

    std::vector<double> counts(static_cast<std::size_t>(plane), 0.0);
    const double* pp = field.per_step.data();
    for (std::int64_t t = 0; t < len; ++t) {
        const std::span<const double> row(pp + t * plane, static_cast<std::size_t>(plane));
        for (const std::int64_t idx : arg_smallest_k(row, k)) {
            counts[static_cast<std::size_t>(idx)] += 1.0;
        }
    }
    PruneMask pm = mask_from_zero_indices(arg_largest_k(counts, k), d_inner, d_state);
    pm.pattern = MaskPattern::unstructured;
    return pm;
}

PruneMask select_mask_aggregate(const NamedTensor& aggregate, double sparsity) {
    if (aggregate.rank() != 2) {
        throw DimensionError("aggregate importance field must be [D x N]");
    }
    const std::int64_t k = prune_count(sparsity, aggregate.numel());
    PruneMask pm = mask_from_zero_indices(arg_smallest_k(aggregate.flat(), k), aggregate.dim(0),
                                          aggregate.dim(1));
    pm.pattern = MaskPattern::unstructured;
    return pm;
}

PruneMask select_mask_nm(const ImportanceField& field, std::int64_t n_zeros,
                         std::int64_t m_group) {
    const NamedTensor& shape_src = field.has_per_step ? field.per_step : field.aggregate;
    const std::int64_t d_inner = shape_src.dim(shape_src.rank() - 2);
    const std::int64_t d_state = shape_src.dim(shape_src.rank() - 1);
    if (m_group < 1 || d_state % m_group != 0) {
        throw ArgumentError("N:M pruning: group size " + std::to_string(m_group) +
                            " must divide the state width " + std::to_string(d_state));
    }
    if (n_zeros < 0 || n_zeros > m_group) {
        throw ArgumentError("N:M pruning: zero count must lie in [0, M]");
    }

    PruneMask pm;
    pm.mask = NamedTensor("mask", {d_inner, d_state});
    std::fill(pm.mask.storage().begin(), pm.mask.storage().end(), 1.0);
    pm.pattern = MaskPattern::nm;
    pm.nm_zeros = n_zeros;
    pm.nm_group = m_group;

    const std::int64_t len = field.has_per_step ? field.per_step.dim(0) : 1;
    std::vector<double> group(static_cast<std::size_t>(m_group));
    std::vector<double> counts(static_cast<std::size_t>(m_group));
    for (std::int64_t d = 0; d < d_inner; ++d) {
        for (std::int64_t g = 0; g < d_state / m_group; ++g) {
            const std::int64_t base = d * d_state + g * m_group;
            std::vector<std::int64_t> zeros;
            if (field.has_per_step) {
                // deferred commitment restricted to this group
                std::fill(counts.begin(), counts.end(), 0.0);
                const std::int64_t plane = d_inner * d_state;
                for (std::int64_t t = 0; t < len; ++t) {
                    for (std::int64_t j = 0; j < m_group; ++j) {
                        group[static_cast<std::size_t>(j)] = field.per_step[t * plane + base + j];
                    }
                    for (const std::int64_t idx : arg_smallest_k(group, n_zeros)) {
                        counts[static_cast<std::size_t>(idx)] += 1.0;
                    }
                }
                zeros = arg_largest_k(counts, n_zeros);
            } else {
                for (std::int64_t j = 0; j < m_group; ++j) {
                    group[static_cast<std::size_t>(j)] = field.aggregate[base + j];
                }
                zeros = arg_smallest_k(group, n_zeros);
            }
            for (const std::int64_t j : zeros) {
                pm.mask[base + j] = 0.0;
            }
        }
    }
    pm.k_pruned = d_inner * (d_state / m_group) * n_zeros;
    return pm;
}

MambaLayer apply_mask(MambaLayer layer, const PruneMask& mask) {
    if (!mask.mask.same_shape(layer.a_log)) {
        throw DimensionError("apply_mask: mask shape disagrees with a_log");
    }
    for (std::int64_t j = 0; j < layer.a_log.numel(); ++j) {
        layer.a_log[j] *= mask.mask[j];
    }
    return layer;
}

std::vector<std::int64_t> least_important_columns(const NamedTensor& aggregate, double sparsity) {
    if (aggregate.rank() != 2) {
        throw DimensionError("column ranking needs a [D x N] field");
    }
    if (!(sparsity > 0.0) || !(sparsity < 1.0)) {
        throw ArgumentError("structured sparsity must lie strictly inside (0, 1)");
    }
    const std::int64_t d_inner = aggregate.dim(0);
    const std::int64_t d_state = aggregate.dim(1);
    const std::int64_t n_remove = static_cast<std::int64_t>(
        std::floor(sparsity * static_cast<double>(d_state) + 1e-9));
    if (n_remove >= d_state) {
        throw ArgumentError("structured sparsity would remove every state column");
    }
    std::vector<double> l1(static_cast<std::size_t>(d_state), 0.0);
    for (std::int64_t d = 0; d < d_inner; ++d) {
        for (std::int64_t n = 0; n < d_state; ++n) {
            l1[static_cast<std::size_t>(n)] += std::fabs(aggregate.at(d, n));
        }
    }
    std::vector<std::int64_t> removed = arg_smallest_k(l1, n_remove);
    std::sort(removed.begin(), removed.end());
    return removed;
}

MambaLayer prune_columns_structured(const MambaLayer& layer, const ImportanceField& field,
                                    double sparsity,
                                    std::vector<std::int64_t>* removed_columns) {
    const std::vector<std::int64_t> removed = least_important_columns(field.aggregate, sparsity);
    if (removed_columns != nullptr) {
        *removed_columns = removed;
    }
    if (removed.empty()) {
        return layer;
    }
    const std::int64_t d_inner = layer.a_log.dim(0);
    const std::int64_t d_state = layer.a_log.dim(1);
    const std::int64_t dt_rank = layer.dt_proj.dim(1);
    std::vector<std::int64_t> kept;
    kept.reserve(static_cast<std::size_t>(d_state - static_cast<std::int64_t>(removed.size())));
    for (std::int64_t n = 0, r = 0; n < d_state; ++n) {
        if (r < static_cast<std::int64_t>(removed.size()) &&
            removed[static_cast<std::size_t>(r)] == n) {
            ++r;
        } else {
            kept.push_back(n);
        }
    }
    const std::int64_t n_kept = static_cast<std::int64_t>(kept.size());

    MambaLayer compact = layer;
    compact.a_log = NamedTensor(layer.a_log.name(), {d_inner, n_kept});
    for (std::int64_t d = 0; d < d_inner; ++d) {
        for (std::int64_t j = 0; j < n_kept; ++j) {
            compact.a_log.at(d, j) = layer.a_log.at(d, kept[static_cast<std::size_t>(j)]);
        }
    }
    // x_proj keeps its dt rows and drops the B/C rows of removed columns:
    // row dt_rank + n carries B_n, row dt_rank + d_state + n carries C_n
    compact.x_proj = NamedTensor(layer.x_proj.name(), {dt_rank + 2 * n_kept, d_inner});
    for (std::int64_t r = 0; r < dt_rank; ++r) {
        for (std::int64_t c = 0; c < d_inner; ++c) {
            compact.x_proj.at(r, c) = layer.x_proj.at(r, c);
        }
    }
    for (std::int64_t j = 0; j < n_kept; ++j) {
        const std::int64_t src = kept[static_cast<std::size_t>(j)];
        for (std::int64_t c = 0; c < d_inner; ++c) {
            compact.x_proj.at(dt_rank + j, c) = layer.x_proj.at(dt_rank + src, c);
            compact.x_proj.at(dt_rank + n_kept + j, c) =
                layer.x_proj.at(dt_rank + d_state + src, c);
        }
    }
    return compact;
}

}  // namespace surgeon
