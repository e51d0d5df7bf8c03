#include "surgeon/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "surgeon/oracles.hpp"

namespace surgeon {

double reconstruction_error(const MambaLayer& dense, const MambaLayer& pruned,
                            const NamedTensor& scan_inputs) {
    const NamedTensor y_dense = selective_scan(dense, scan_inputs, false, nullptr);
    const NamedTensor y_pruned = selective_scan(pruned, scan_inputs, false, nullptr);
    return loss_l2(y_dense, y_pruned);
}

double perplexity(const MambaModel& model,
                  const std::vector<std::vector<std::int64_t>>& corpus) {
    if (corpus.empty() || corpus.front().size() < 2) {
        throw ArgumentError("perplexity needs sequences with at least two tokens");
    }
    const NamedTensor logits = model_forward(model, corpus);
    const std::int64_t bsz = logits.dim(0);
    const std::int64_t len = logits.dim(1);
    const std::int64_t vocab = logits.dim(2);

    double nll = 0.0;
    std::int64_t positions = 0;
    for (std::int64_t b = 0; b < bsz; ++b) {
        for (std::int64_t t = 0; t + 1 < len; ++t) {
            const double* row = logits.data() + (b * len + t) * vocab;
            double max_logit = row[0];
            for (std::int64_t v = 1; v < vocab; ++v) {
                max_logit = std::max(max_logit, row[v]);
            }
            double sum_exp = 0.0;
            for (std::int64_t v = 0; v < vocab; ++v) {
                sum_exp += std::exp(row[v] - max_logit);
            }
            const std::int64_t next =
                corpus[static_cast<std::size_t>(b)][static_cast<std::size_t>(t + 1)];
            nll += std::log(sum_exp) + max_logit - row[next];
            ++positions;
        }
    }
    return std::exp(nll / static_cast<double>(positions));
}

namespace {

bool finite(double v) { return std::isfinite(v); }

std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (const char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void validate_report(const PruneReport& report) {
    if (!finite(report.perplexity_before) || !finite(report.perplexity_after)) {
        throw FormatError("report: perplexities must be finite");
    }
    if (report.perplexity_before < 1.0 - 1e-9 || report.perplexity_after < 1.0 - 1e-9) {
        throw FormatError("report: perplexity below 1 is impossible");
    }
    if (report.total_params < 0 || report.zeroed_params < 0 ||
        report.zeroed_params > report.total_params) {
        throw FormatError("report: parameter counts are inconsistent");
    }
    if (report.method.empty() || report.score_mode.empty() || report.pattern.empty()) {
        throw FormatError("report: method, score_mode, and pattern must be set");
    }
    for (const ModuleReport& m : report.modules) {
        if (m.name.empty()) {
            throw FormatError("report: module entry with empty name");
        }
        if (!finite(m.target_sparsity) || m.target_sparsity < 0.0 || m.target_sparsity > 1.0) {
            throw FormatError("report: module '" + m.name + "' target sparsity out of [0, 1]");
        }
        if (!finite(m.achieved_sparsity) || m.achieved_sparsity < 0.0 ||
            m.achieved_sparsity > 1.0) {
            throw FormatError("report: module '" + m.name + "' achieved sparsity out of [0, 1]");
        }
        if (!finite(m.recon_error) || m.recon_error < 0.0) {
            throw FormatError("report: module '" + m.name + "' reconstruction error invalid");
        }
    }
    for (const LayerVerify& v : report.verify) {
        if (!finite(v.spearman_full_vs_fd) || !finite(v.spearman_simplified_vs_full)) {
            throw FormatError("report: verify block has non-finite correlations");
        }
    }
}

std::string render_report_json(const PruneReport& report) {
    std::string out;
    out += "{\n";
    out += "  \"config\": {\n";
    std::size_t i = 0;
    for (const auto& [key, value] : report.config_echo) {
        out += "    \"" + json_escape(key) + "\": \"" + json_escape(value) + "\"";
        out += (++i < report.config_echo.size()) ? ",\n" : "\n";
    }
    out += "  },\n";
    out += "  \"model\": {\n";
    out += "    \"method\": \"" + json_escape(report.method) + "\",\n";
    out += "    \"pattern\": \"" + json_escape(report.pattern) + "\",\n";
    out += "    \"perplexity_after\": " + fmt_double(report.perplexity_after) + ",\n";
    out += "    \"perplexity_before\": " + fmt_double(report.perplexity_before) + ",\n";
    out += "    \"score_mode\": \"" + json_escape(report.score_mode) + "\",\n";
    out += "    \"seed\": " + std::to_string(report.seed) + ",\n";
    out += "    \"total_params\": " + std::to_string(report.total_params) + ",\n";
    out += "    \"zeroed_params\": " + std::to_string(report.zeroed_params) + "\n";
    out += "  },\n";
    out += "  \"modules\": [";
    for (std::size_t m = 0; m < report.modules.size(); ++m) {
        const ModuleReport& mod = report.modules[m];
        out += (m == 0) ? "\n" : ",\n";
        out += "    {\"achieved_sparsity\": " + fmt_double(mod.achieved_sparsity);
        out += ", \"name\": \"" + json_escape(mod.name) + "\"";
        out += ", \"recon_error\": " + fmt_double(mod.recon_error);
        out += ", \"target_sparsity\": " + fmt_double(mod.target_sparsity) + "}";
    }
    out += report.modules.empty() ? "]" : "\n  ]";
    if (report.has_verify) {
        out += ",\n  \"verify\": [";
        for (std::size_t v = 0; v < report.verify.size(); ++v) {
            const LayerVerify& lv = report.verify[v];
            out += (v == 0) ? "\n" : ",\n";
            out += "    {\"layer\": " + std::to_string(lv.layer);
            out += ", \"spearman_full_vs_fd\": " + fmt_double(lv.spearman_full_vs_fd);
            out += ", \"spearman_simplified_vs_full\": " +
                   fmt_double(lv.spearman_simplified_vs_full) + "}";
        }
        out += report.verify.empty() ? "]" : "\n  ]";
    }
    out += "\n}\n";
    return out;
}

void emit_report(const PruneReport& report, const std::string& path) {
    validate_report(report);
    const std::string payload = render_report_json(report);
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open report path '" + path + "'");
    }
    out << payload;
    if (!out) {
        throw FormatError("failed writing report to '" + path + "'");
    }
}

}  // namespace surgeon
