#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "surgeon/ffn_pruner.hpp"
#include "surgeon/model.hpp"
#include "surgeon/tensor.hpp"

namespace surgeon {

struct CalibrationSet {
    std::vector<std::vector<std::int64_t>> sequences;  // B sequences, fixed length L
    std::uint64_t seed = 0;
    std::string source;  // "synthetic" or a token-file path
};

/// Deterministic synthetic corpus mixing repeated motifs with uniform noise.
CalibrationSet make_synthetic_corpus(std::uint64_t seed, std::int64_t vocab_size, std::int64_t b,
                                     std::int64_t l);

/// Newline-delimited unsigned token ids, one sequence per line. Takes the
/// first nsamples lines, truncating each to seqlen tokens.
CalibrationSet load_token_file(const std::string& path, std::int64_t nsamples,
                               std::int64_t seqlen);

/// Running mean over calibration samples of the squared hidden state entering
/// each step: s[t] accumulates h_{t-1}^2 with h_{-1} = 0.
struct HiddenStats {
    NamedTensor s;  // [L, D, N]
    std::int64_t n_seen = 0;
};

HiddenStats make_hidden_stats(std::int64_t l, std::int64_t d, std::int64_t n);
void accumulate_stats(HiddenStats& stats, const ScanTrace& trace);

/// Everything one layer contributes during calibration.
struct LayerCalibration {
    HiddenStats stats;
    NamedTensor scan_inputs;  // [B, L, D], inputs to the selective scan
    NamedTensor deltas;       // [B, L, D]
    std::map<std::string, GramAccumulator> grams;  // keyed by module short name
    NamedTensor full_score_raw;  // [D, N] data factor of the full importance score
    bool has_full_score = false;
};

struct CalibrationOptions {
    bool collect_full_score = false;
};

/// One instrumented forward pass per calibration sample over the unmodified
/// model; deterministic in (model, calib).
std::vector<LayerCalibration> run_calibration(const MambaModel& model,
                                              const CalibrationSet& calib,
                                              const CalibrationOptions& options = {});

/// Module short names a Mamba block exposes to the FFN pruner.
const std::vector<std::string>& ffn_module_names();

}  // namespace surgeon
