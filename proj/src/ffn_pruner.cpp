#include "surgeon/ffn_pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace surgeon {

GramAccumulator make_gram_accumulator(std::int64_t width) {
    if (width < 1) {
        throw ArgumentError("gram accumulator width must be >= 1");
    }
    return GramAccumulator{NamedTensor("gram", {width, width}), 0};
}

void accumulate_gram(GramAccumulator& acc, const NamedTensor& cols) {
    const std::int64_t k = acc.gram.dim(0);
    if (cols.rank() != 2 || cols.dim(0) != k) {
        throw DimensionError("accumulate_gram: columns must be [k x m] with k = " +
                             std::to_string(k));
    }
    const std::int64_t m = cols.dim(1);
    const double* pc = cols.data();
    double* pg = acc.gram.data();
    for (std::int64_t r = 0; r < k; ++r) {
        for (std::int64_t c = r; c < k; ++c) {
            double acc_rc = 0.0;
            for (std::int64_t j = 0; j < m; ++j) {
                acc_rc += pc[r * m + j] * pc[c * m + j];
            }
            pg[r * k + c] += acc_rc;
            if (c != r) {
                pg[c * k + r] = pg[r * k + c];
            }
        }
    }
    acc.n_cols_seen += m;
}

NamedTensor activation_columns(const NamedTensor& act) {
    if (act.rank() != 3) {
        throw DimensionError("activation_columns expects [B x L x k]");
    }
    const std::int64_t rows = act.dim(0) * act.dim(1);
    const std::int64_t k = act.dim(2);
    NamedTensor cols("cols", {k, rows});
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < k; ++c) {
            cols.at(c, r) = act[r * k + c];
        }
    }
    return cols;
}

NamedTensor unfold_conv_inputs(const NamedTensor& x, std::int64_t d_conv) {
    if (x.rank() != 3) {
        throw DimensionError("unfold_conv_inputs expects [B x L x D]");
    }
    if (d_conv < 1) {
        throw ArgumentError("d_conv must be >= 1");
    }
    const std::int64_t bsz = x.dim(0);
    const std::int64_t len = x.dim(1);
    const std::int64_t d_inner = x.dim(2);
    NamedTensor cols("conv_windows", {d_conv, bsz * len * d_inner});
    std::int64_t col = 0;
    for (std::int64_t b = 0; b < bsz; ++b) {
        for (std::int64_t t = 0; t < len; ++t) {
            for (std::int64_t d = 0; d < d_inner; ++d, ++col) {
                for (std::int64_t j = 0; j < d_conv; ++j) {
                    const std::int64_t src = t - (d_conv - 1) + j;
                    cols.at(j, col) = src >= 0 ? x.at(b, src, d) : 0.0;
                }
            }
        }
    }
    return cols;
}

double gram_trace(const GramAccumulator& acc) {
    const std::int64_t k = acc.gram.dim(0);
    double tr = 0.0;
    for (std::int64_t i = 0; i < k; ++i) {
        tr += acc.gram.at(i, i);
    }
    return tr;
}

std::vector<ModuleSensitivity> sensitivity_scores(
    const std::vector<std::pair<std::string, const GramAccumulator*>>& modules) {
    std::vector<ModuleSensitivity> out;
    out.reserve(modules.size());
    for (const auto& [name, acc] : modules) {
        if (acc == nullptr || acc->n_cols_seen == 0) {
            throw StateError("sensitivity ranking: accumulator for '" + name + "' is empty");
        }
        out.push_back(ModuleSensitivity{name, gram_trace(*acc), 0});
    }
    std::sort(out.begin(), out.end(), [](const ModuleSensitivity& a, const ModuleSensitivity& b) {
        if (a.trace != b.trace) {
            return a.trace < b.trace;
        }
        return a.module < b.module;
    });
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].rank_id = static_cast<std::int64_t>(i);
    }
    return out;
}

double SparsityPlan::sparsity_for(const std::string& module) const {
    for (const SparsityAssignment& a : ranked) {
        if (a.module == module) {
            return a.sparsity;
        }
    }
    return global_target;
}

SparsityPlan allocate_sparsity(const std::vector<ModuleSensitivity>& ranked, double target,
                               double alpha) {
    if (target < 0.0 || target > 1.0) {
        throw ArgumentError("global sparsity target must lie in [0, 1]");
    }
    if (alpha < 0.0 || alpha > std::min(target, 1.0 - target) + 1e-15) {
        throw ArgumentError("alpha must lie in [0, min(s, 1-s)]");
    }
    SparsityPlan plan;
    plan.global_target = target;
    plan.alpha = alpha;
    const std::int64_t n = static_cast<std::int64_t>(ranked.size());
    for (const ModuleSensitivity& m : ranked) {
        double s = target;
        if (n > 1) {
            // rank 0 (least sensitive) takes the most sparsity; the arithmetic
            // series averages to the global target exactly
            s = target + alpha -
                2.0 * alpha * static_cast<double>(m.rank_id) / static_cast<double>(n - 1);
        }
        plan.ranked.push_back(SparsityAssignment{m.module, m.trace, m.rank_id, s});
    }
    return plan;
}

namespace {

// Inverse of the SPD matrix gram + lambda*I, doubling the damping on
// factorization failure.
NamedTensor damped_inverse(const NamedTensor& gram) {
    const std::int64_t k = gram.dim(0);
    double mean_diag = 0.0;
    for (std::int64_t i = 0; i < k; ++i) {
        mean_diag += gram.at(i, i);
    }
    mean_diag /= static_cast<double>(k);
    double lambda = 0.01 * mean_diag;
    if (!(lambda > 0.0)) {
        lambda = 1e-8;
    }
    for (int attempt = 0; attempt <= 8; ++attempt) {
        NamedTensor h("damped_hessian", gram.shape(), gram.storage());
        for (std::int64_t i = 0; i < k; ++i) {
            h.at(i, i) += lambda;
        }
        try {
            return CholeskyFactor(h).inverse();
        } catch (const NumericError&) {
            if (attempt == 8) {
                throw;
            }
            lambda *= 2.0;
        }
    }
    throw NumericError("unreachable damping loop exit");
}

// Removes the leading index of an active-set inverse via its Schur complement;
// the result is the inverse of the trailing submatrix. row0 scratch keeps the
// leading row alive while the update compacts in place.
void schur_drop_first(std::vector<double>& t, std::int64_t m, std::vector<double>& row0) {
    const double pivot = t[0];
    row0.assign(t.begin(), t.begin() + m);
    for (std::int64_t r = 1; r < m; ++r) {
        const double tr0 = t[static_cast<std::size_t>(r * m)];
        for (std::int64_t c = 1; c < m; ++c) {
            t[static_cast<std::size_t>((r - 1) * (m - 1) + (c - 1))] =
                t[static_cast<std::size_t>(r * m + c)] -
                tr0 * row0[static_cast<std::size_t>(c)] / pivot;
        }
    }
    t.resize(static_cast<std::size_t>((m - 1) * (m - 1)));
}

std::vector<std::int64_t> row_targets_from_diag(const NamedTensor& weight,
                                                const std::vector<double>& inv_diag,
                                                double sparsity) {
    if (sparsity < 0.0 || sparsity > 1.0) {
        throw ArgumentError("sparsity must lie in [0, 1]");
    }
    const std::int64_t rows = weight.dim(0);
    const std::int64_t k = weight.dim(1);
    const std::int64_t total = std::llround(sparsity * static_cast<double>(rows * k));
    const std::int64_t base = total / rows;
    const std::int64_t remainder = total % rows;
    std::vector<std::int64_t> targets(static_cast<std::size_t>(rows), base);
    if (remainder > 0) {
        // remainder zeros go to the rows whose (base+1)-th cheapest weight has
        // the smallest saliency under the starting inverse Hessian
        std::vector<double> marginal(static_cast<std::size_t>(rows));
        std::vector<double> sal(static_cast<std::size_t>(k));
        for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t j = 0; j < k; ++j) {
                const double w = weight.at(r, j);
                sal[static_cast<std::size_t>(j)] = w * w / inv_diag[static_cast<std::size_t>(j)];
            }
            std::nth_element(sal.begin(), sal.begin() + base, sal.end());
            marginal[static_cast<std::size_t>(r)] = sal[static_cast<std::size_t>(base)];
        }
        for (const std::int64_t r : arg_smallest_k(marginal, remainder)) {
            ++targets[static_cast<std::size_t>(r)];
        }
    }
    return targets;
}

double recon_error_on_gram(const NamedTensor& original, const NamedTensor& pruned,
                           const NamedTensor& gram) {
    const std::int64_t rows = original.dim(0);
    const std::int64_t k = original.dim(1);
    double err = 0.0;
    std::vector<double> dw(static_cast<std::size_t>(k));
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < k; ++c) {
            dw[static_cast<std::size_t>(c)] = original.at(r, c) - pruned.at(r, c);
        }
        for (std::int64_t i = 0; i < k; ++i) {
            double acc = 0.0;
            for (std::int64_t j = 0; j < k; ++j) {
                acc += gram.at(i, j) * dw[static_cast<std::size_t>(j)];
            }
            err += dw[static_cast<std::size_t>(i)] * acc;
        }
    }
    return err;
}

}  // namespace

std::vector<std::int64_t> per_row_zero_targets(const NamedTensor& weight,
                                               const GramAccumulator& acc, double sparsity) {
    if (weight.rank() != 2 || acc.gram.dim(0) != weight.dim(1)) {
        throw DimensionError("per_row_zero_targets: gram width disagrees with weight width");
    }
    const NamedTensor t_full = damped_inverse(acc.gram);
    std::vector<double> diag(static_cast<std::size_t>(weight.dim(1)));
    for (std::int64_t j = 0; j < weight.dim(1); ++j) {
        diag[static_cast<std::size_t>(j)] = t_full.at(j, j);
    }
    return row_targets_from_diag(weight, diag, sparsity);
}

ObsResult prune_linear_obs(const NamedTensor& weight, const GramAccumulator& acc,
                           double sparsity, std::int64_t block_size) {
    if (weight.rank() != 2) {
        throw DimensionError("prune_linear_obs expects a [rows x k] weight");
    }
    const std::int64_t rows = weight.dim(0);
    const std::int64_t k = weight.dim(1);
    if (acc.gram.dim(0) != k) {
        throw DimensionError("gram width " + std::to_string(acc.gram.dim(0)) +
                             " disagrees with weight width " + std::to_string(k));
    }
    if (block_size < 1) {
        throw ArgumentError("block size must be >= 1");
    }

    ObsResult result;
    result.weight = NamedTensor(weight.name(), weight.shape(), weight.storage());
    result.mask = NamedTensor("mask", weight.shape());
    std::fill(result.mask.storage().begin(), result.mask.storage().end(), 1.0);

    const NamedTensor t_full = damped_inverse(acc.gram);
    std::vector<double> diag0(static_cast<std::size_t>(k));
    for (std::int64_t j = 0; j < k; ++j) {
        diag0[static_cast<std::size_t>(j)] = t_full.at(j, j);
    }
    const std::vector<std::int64_t> row_targets =
        row_targets_from_diag(weight, diag0, sparsity);

    std::vector<double> t(t_full.storage());  // active-set inverse, shrinks left to right
    std::vector<double> row0_scratch;
    std::vector<char> prune_here(static_cast<std::size_t>(rows * k), 0);

    for (std::int64_t i1 = 0; i1 < k; i1 += block_size) {
        const std::int64_t i2 = std::min(i1 + block_size, k);
        const std::int64_t m = k - i1;  // active-set size at block start
        const std::int64_t blen = i2 - i1;

        // mask selection: saliency w^2 / [H_active^-1]_jj at block start
        for (std::int64_t r = 0; r < rows; ++r) {
            const std::int64_t z = row_targets[static_cast<std::size_t>(r)];
            const std::int64_t budget =
                std::llround(static_cast<double>(z * i2) / static_cast<double>(k)) -
                std::llround(static_cast<double>(z * i1) / static_cast<double>(k));
            if (budget == 0) {
                continue;
            }
            std::vector<std::int64_t> order(static_cast<std::size_t>(blen));
            std::iota(order.begin(), order.end(), 0);
            std::vector<double> sal(static_cast<std::size_t>(blen));
            for (std::int64_t a = 0; a < blen; ++a) {
                const double w = result.weight.at(r, i1 + a);
                sal[static_cast<std::size_t>(a)] =
                    w * w / t[static_cast<std::size_t>(a * m + a)];
            }
            std::sort(order.begin(), order.end(), [&](std::int64_t lhs, std::int64_t rhs) {
                if (sal[static_cast<std::size_t>(lhs)] != sal[static_cast<std::size_t>(rhs)]) {
                    return sal[static_cast<std::size_t>(lhs)] < sal[static_cast<std::size_t>(rhs)];
                }
                return lhs < rhs;
            });
            for (std::int64_t b = 0; b < budget; ++b) {
                prune_here[static_cast<std::size_t>(
                    r * k + i1 + order[static_cast<std::size_t>(b)])] = 1;
            }
        }

        // process block columns in order; pruned entries compensate forward
        for (std::int64_t j = i1; j < i2; ++j) {
            const std::int64_t live = k - j;
            const double d = t[0];
            if (!(d > 0.0) || !std::isfinite(d)) {
                throw NumericError("inverse-Hessian pivot degenerated at column " +
                                   std::to_string(j) + "; increase damping");
            }
            for (std::int64_t r = 0; r < rows; ++r) {
                if (prune_here[static_cast<std::size_t>(r * k + j)] == 0) {
                    continue;
                }
                const double e = result.weight.at(r, j) / d;
                result.weight.at(r, j) = 0.0;
                result.mask.at(r, j) = 0.0;
                for (std::int64_t c = 1; c < live; ++c) {
                    result.weight.at(r, j + c) -= e * t[static_cast<std::size_t>(c)];
                }
            }
            if (live > 1) {
                schur_drop_first(t, live, row0_scratch);
            }
        }
    }

    result.recon_error = recon_error_on_gram(weight, result.weight, acc.gram);
    return result;
}

ObsResult prune_conv_as_linear(const NamedTensor& conv_weight, const GramAccumulator& acc,
                               double sparsity, std::int64_t block_size) {
    if (conv_weight.rank() != 2) {
        throw DimensionError("prune_conv_as_linear expects a [D x d_conv] kernel");
    }
    return prune_linear_obs(conv_weight, acc, sparsity, block_size);
}

ObsResult prune_linear_magnitude(const NamedTensor& weight, const GramAccumulator& acc,
                                 double sparsity) {
    if (weight.rank() != 2) {
        throw DimensionError("prune_linear_magnitude expects a [rows x k] weight");
    }
    if (sparsity < 0.0 || sparsity > 1.0) {
        throw ArgumentError("sparsity must lie in [0, 1]");
    }
    if (acc.gram.dim(0) != weight.dim(1)) {
        throw DimensionError("gram width disagrees with weight width");
    }
    ObsResult result;
    result.weight = NamedTensor(weight.name(), weight.shape(), weight.storage());
    result.mask = NamedTensor("mask", weight.shape());
    std::fill(result.mask.storage().begin(), result.mask.storage().end(), 1.0);

    const std::int64_t total = weight.numel();
    const std::int64_t z = std::llround(sparsity * static_cast<double>(total));
    std::vector<double> magnitude(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) {
        magnitude[static_cast<std::size_t>(i)] = std::fabs(weight[i]);
    }
    for (const std::int64_t idx : arg_smallest_k(magnitude, z)) {
        result.weight[idx] = 0.0;
        result.mask[idx] = 0.0;
    }
    result.recon_error = recon_error_on_gram(weight, result.weight, acc.gram);
    return result;
}

}  // namespace surgeon
