#include "surgeon/calibration.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "surgeon/rng.hpp"
#include "surgeon/ssm_pruner.hpp"

namespace surgeon {

CalibrationSet make_synthetic_corpus(std::uint64_t seed, std::int64_t vocab_size, std::int64_t b,
                                     std::int64_t l) {
    if (vocab_size < 2) {
        throw ArgumentError("synthetic corpus needs vocab_size >= 2");
    }
    if (b < 1 || l < 1) {
        throw ArgumentError("synthetic corpus needs b >= 1 and l >= 1");
    }
    Rng rng(seed);

    // a handful of short motifs that recur across sequences, so hidden states
    // pick up non-degenerate temporal structure
    const std::int64_t n_motifs = 4 + rng.uniform_int(4);
    std::vector<std::vector<std::int64_t>> motifs(static_cast<std::size_t>(n_motifs));
    for (auto& m : motifs) {
        const std::int64_t len = 3 + rng.uniform_int(6);
        m.resize(static_cast<std::size_t>(len));
        for (auto& tok : m) {
            tok = rng.uniform_int(vocab_size);
        }
    }

    CalibrationSet set;
    set.seed = seed;
    set.source = "synthetic";
    set.sequences.resize(static_cast<std::size_t>(b));
    for (auto& seq : set.sequences) {
        seq.reserve(static_cast<std::size_t>(l));
        while (static_cast<std::int64_t>(seq.size()) < l) {
            if (rng.uniform() < 0.55) {
                const auto& m = motifs[static_cast<std::size_t>(rng.uniform_int(n_motifs))];
                for (const std::int64_t tok : m) {
                    if (static_cast<std::int64_t>(seq.size()) >= l) {
                        break;
                    }
                    seq.push_back(tok);
                }
            } else {
                const std::int64_t run = 1 + rng.uniform_int(4);
                for (std::int64_t i = 0; i < run && static_cast<std::int64_t>(seq.size()) < l;
                     ++i) {
                    seq.push_back(rng.uniform_int(vocab_size));
                }
            }
        }
    }
    return set;
}

CalibrationSet load_token_file(const std::string& path, std::int64_t nsamples,
                               std::int64_t seqlen) {
    if (nsamples < 1 || seqlen < 1) {
        throw ArgumentError("token file load needs nsamples >= 1 and seqlen >= 1");
    }
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open token file '" + path + "'");
    }
    CalibrationSet set;
    set.source = path;
    std::string line;
    std::int64_t line_no = 0;
    while (static_cast<std::int64_t>(set.sequences.size()) < nsamples && std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;  // skip blank lines
        }
        std::istringstream ls(line);
        std::vector<std::int64_t> seq;
        std::string tok;
        while (static_cast<std::int64_t>(seq.size()) < seqlen && ls >> tok) {
            if (tok.find('-') != std::string::npos) {
                throw FormatError("token file line " + std::to_string(line_no) +
                                  ": token ids must be unsigned");
            }
            try {
                seq.push_back(static_cast<std::int64_t>(std::stoull(tok)));
            } catch (const std::exception&) {
                throw FormatError("token file line " + std::to_string(line_no) +
                                  ": cannot parse token '" + tok + "'");
            }
        }
        if (static_cast<std::int64_t>(seq.size()) < seqlen) {
            throw FormatError("token file line " + std::to_string(line_no) + ": has " +
                              std::to_string(seq.size()) + " tokens, need " +
                              std::to_string(seqlen));
        }
        set.sequences.push_back(std::move(seq));
    }
    if (static_cast<std::int64_t>(set.sequences.size()) < nsamples) {
        throw FormatError("token file '" + path + "' has only " +
                          std::to_string(set.sequences.size()) + " usable lines, need " +
                          std::to_string(nsamples));
    }
    return set;
}

HiddenStats make_hidden_stats(std::int64_t l, std::int64_t d, std::int64_t n) {
    return HiddenStats{NamedTensor("hidden_stats", {l, d, n}), 0};
}

void accumulate_stats(HiddenStats& stats, const ScanTrace& trace) {
    if (trace.hidden.empty() || trace.hidden.rank() != 4) {
        throw DimensionError("accumulate_stats: trace has no recorded hidden states");
    }
    const std::int64_t bsz = trace.hidden.dim(0);
    const std::int64_t len = trace.hidden.dim(1);
    const std::int64_t d_inner = trace.hidden.dim(2);
    const std::int64_t d_state = trace.hidden.dim(3);
    if (stats.s.dim(0) != len || stats.s.dim(1) != d_inner || stats.s.dim(2) != d_state) {
        throw DimensionError("accumulate_stats: trace shape disagrees with stats layout");
    }
    const std::int64_t n_new = stats.n_seen + 1;
    const double keep = static_cast<double>(n_new - 1) / static_cast<double>(n_new);
    const double take = 1.0 / static_cast<double>(n_new);
    const double inv_b = 1.0 / static_cast<double>(bsz);
    double* ps = stats.s.data();
    const double* ph = trace.hidden.data();
    const std::int64_t plane = d_inner * d_state;
    for (std::int64_t t = 0; t < len; ++t) {
        for (std::int64_t j = 0; j < plane; ++j) {
            double mean_sq = 0.0;
            if (t > 0) {
                // state entering step t is h_{t-1}; h_{-1} = 0 keeps step 0 at zero
                for (std::int64_t b = 0; b < bsz; ++b) {
                    const double h = ph[(b * len + (t - 1)) * plane + j];
                    mean_sq += h * h;
                }
                mean_sq *= inv_b;
            }
            ps[t * plane + j] = keep * ps[t * plane + j] + take * mean_sq;
        }
    }
    stats.n_seen = n_new;
}

const std::vector<std::string>& ffn_module_names() {
    static const std::vector<std::string> names = {"in_proj", "conv1d", "x_proj", "dt_proj",
                                                   "out_proj"};
    return names;
}

namespace {

std::int64_t module_input_width(const MambaConfig& config, const std::string& module) {
    if (module == "in_proj") return config.d_model;
    if (module == "conv1d") return config.d_conv;
    if (module == "x_proj") return config.d_inner;
    if (module == "dt_proj") return config.dt_rank;
    if (module == "out_proj") return config.d_inner;
    throw ArgumentError("unknown ffn module '" + module + "'");
}

}  // namespace

std::vector<LayerCalibration> run_calibration(const MambaModel& model,
                                              const CalibrationSet& calib,
                                              const CalibrationOptions& options) {
    model.config.validate();
    if (calib.sequences.empty()) {
        throw ArgumentError("calibration set is empty");
    }
    const std::int64_t bsz = static_cast<std::int64_t>(calib.sequences.size());
    const std::int64_t len = static_cast<std::int64_t>(calib.sequences.front().size());
    const std::int64_t d_inner = model.config.d_inner;
    const std::int64_t d_state = model.config.d_state;

    std::vector<LayerCalibration> out(static_cast<std::size_t>(model.config.n_layers));
    std::vector<NamedTensor> a_mats;
    for (std::int64_t i = 0; i < model.config.n_layers; ++i) {
        LayerCalibration& lc = out[static_cast<std::size_t>(i)];
        lc.stats = make_hidden_stats(len, d_inner, d_state);
        lc.scan_inputs = NamedTensor("scan_inputs", {bsz, len, d_inner});
        lc.deltas = NamedTensor("deltas", {bsz, len, d_inner});
        for (const std::string& m : ffn_module_names()) {
            lc.grams.emplace(m, make_gram_accumulator(module_input_width(model.config, m)));
        }
        if (options.collect_full_score) {
            lc.full_score_raw = NamedTensor("full_score_raw", {d_inner, d_state});
            lc.has_full_score = true;
        }
        a_mats.push_back(parameterize_a(model.layers[static_cast<std::size_t>(i)].a_log));
    }

    for (std::int64_t s = 0; s < bsz; ++s) {
        NamedTensor u = embed_tokens(model, {calib.sequences[static_cast<std::size_t>(s)]});
        for (std::int64_t i = 0; i < model.config.n_layers; ++i) {
            LayerCalibration& lc = out[static_cast<std::size_t>(i)];
            ScanTrace trace;
            u = layer_step(model, i, u, true, &trace);

            accumulate_stats(lc.stats, trace);
            if (lc.has_full_score) {
                accumulate_full_score_raw(lc.full_score_raw, a_mats[static_cast<std::size_t>(i)],
                                          trace);
            }

            const NamedTensor& xs = trace.module_inputs.at("x_proj");
            for (std::int64_t t = 0; t < len; ++t) {
                for (std::int64_t d = 0; d < d_inner; ++d) {
                    lc.scan_inputs.at(s, t, d) = xs.at(0, t, d);
                    lc.deltas.at(s, t, d) = trace.deltas.at(0, t, d);
                }
            }

            for (const std::string& m : ffn_module_names()) {
                const NamedTensor& act = trace.module_inputs.at(m);
                if (m == "conv1d") {
                    accumulate_gram(lc.grams.at(m),
                                    unfold_conv_inputs(act, model.config.d_conv));
                } else {
                    accumulate_gram(lc.grams.at(m), activation_columns(act));
                }
            }
        }
    }
    return out;
}

}  // namespace surgeon
