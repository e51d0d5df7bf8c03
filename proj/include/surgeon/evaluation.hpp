#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "surgeon/model.hpp"
#include "surgeon/tensor.hpp"

namespace surgeon {

/// Mean over calibration samples of ||scan(dense, x) - scan(pruned, x)||^2.
double reconstruction_error(const MambaLayer& dense, const MambaLayer& pruned,
                            const NamedTensor& scan_inputs);

/// exp(mean per predicted position of -log softmax(logits)[next token]).
double perplexity(const MambaModel& model,
                  const std::vector<std::vector<std::int64_t>>& corpus);

struct ModuleReport {
    std::string name;
    double target_sparsity = 0.0;
    double achieved_sparsity = 0.0;
    double recon_error = 0.0;
};

struct LayerVerify {
    std::int64_t layer = 0;
    double spearman_full_vs_fd = 0.0;
    double spearman_simplified_vs_full = 0.0;
};

struct PruneReport {
    double perplexity_before = 0.0;
    double perplexity_after = 0.0;
    std::int64_t total_params = 0;
    std::int64_t zeroed_params = 0;
    std::string method;
    std::string score_mode;
    std::string pattern;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config_echo;
    std::vector<ModuleReport> modules;
    std::vector<LayerVerify> verify;
    bool has_verify = false;
};

/// Rejects structurally invalid reports (non-finite numbers, ratios outside
/// [0, 1], perplexity below 1, empty names) before anything hits disk.
void validate_report(const PruneReport& report);

/// Deterministic JSON: keys sorted within each object, floats printed with 17
/// significant digits so values round-trip exactly.
std::string render_report_json(const PruneReport& report);

void emit_report(const PruneReport& report, const std::string& path);

}  // namespace surgeon
