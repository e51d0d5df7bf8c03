#include "surgeon/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "surgeon/calibration.hpp"
#include "surgeon/evaluation.hpp"
#include "surgeon/ffn_pruner.hpp"
#include "surgeon/model.hpp"
#include "surgeon/oracles.hpp"
#include "surgeon/parallel.hpp"
#include "surgeon/ssm_pruner.hpp"

namespace surgeon {

std::string to_string(TargetScope v) {
    switch (v) {
        case TargetScope::ssm: return "ssm";
        case TargetScope::ffn: return "ffn";
        case TargetScope::all: return "all";
    }
    return "?";
}

std::string to_string(ScoreMode v) {
    return v == ScoreMode::simplified ? "simplified" : "full";
}

std::string to_string(Pattern v) {
    switch (v) {
        case Pattern::unstructured: return "unstructured";
        case Pattern::nm24: return "2:4";
        case Pattern::nm48: return "4:8";
        case Pattern::column: return "column";
    }
    return "?";
}

std::string to_string(Method v) {
    return v == Method::sparsessm ? "sparsessm" : "magnitude";
}

void RunConfig::validate() const {
    if (checkpoint.empty()) {
        throw ArgumentError("a checkpoint directory is required");
    }
    if (sparsity < 0.0 || sparsity > 1.0) {
        throw ArgumentError("sparsity must lie in [0, 1]");
    }
    if (alpha < 0.0 || alpha > 0.5) {
        throw ArgumentError("alpha must lie in [0, 0.5]");
    }
    if (nsamples < 1) {
        throw ArgumentError("nsamples must be >= 1");
    }
    if (seqlen < 2) {
        throw ArgumentError("seqlen must be >= 2");
    }
    if (block_size < 1) {
        throw ArgumentError("blocksize must be >= 1");
    }
    if (pattern == Pattern::column && target != TargetScope::ssm) {
        throw ArgumentError("pattern=column applies only to target=ssm");
    }
    if ((pattern == Pattern::nm24 || pattern == Pattern::nm48) && target == TargetScope::ffn) {
        throw ArgumentError("N:M patterns apply to the ssm scope");
    }
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string module_full_name(std::int64_t layer, const std::string& short_name) {
    return "layers." + std::to_string(layer) + "." + short_name;
}

NamedTensor& module_weight(MambaLayer& layer, const std::string& short_name) {
    if (short_name == "in_proj") return layer.in_proj;
    if (short_name == "conv1d") return layer.conv_weight;
    if (short_name == "x_proj") return layer.x_proj;
    if (short_name == "dt_proj") return layer.dt_proj;
    if (short_name == "out_proj") return layer.out_proj;
    throw ArgumentError("unknown ffn module '" + short_name + "'");
}

std::int64_t count_f32_zeros(const NamedTensor& t) {
    std::int64_t z = 0;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if (static_cast<float>(t[i]) == 0.0f) {
            ++z;
        }
    }
    return z;
}

NamedTensor slice_batch(const NamedTensor& t, std::int64_t take) {
    std::vector<std::int64_t> shape = t.shape();
    shape[0] = take;
    NamedTensor out(t.name(), shape);
    const std::int64_t per = t.numel() / t.dim(0);
    std::copy(t.data(), t.data() + take * per, out.data());
    return out;
}

struct StageFailure {
    int code;
    std::string stage;
    std::string message;
};

void run_stage(int code, const std::string& name, std::ostream& log,
               const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        throw StageFailure{code, name, e.what()};
    }
    log << "[" << name << "] done\n";
}

}  // namespace

int run_pipeline(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    try {
        run_stage(kExitConfig, "config", log, [&] { cfg.validate(); });

        // alpha cannot exceed the feasible deviation around the target
        const double eff_alpha = std::min(cfg.alpha, std::min(cfg.sparsity, 1.0 - cfg.sparsity));
        const bool want_ffn = cfg.target != TargetScope::ssm && cfg.pattern != Pattern::column;
        const bool want_ssm = cfg.target != TargetScope::ffn;
        const bool want_full_score = cfg.score == ScoreMode::full || cfg.verify;

        MambaModel model;
        MambaModel original;
        run_stage(kExitLoad, "load", log, [&] {
            model = load_checkpoint(cfg.checkpoint);
            original = model;
        });

        CalibrationSet corpus;
        std::vector<LayerCalibration> calres;
        run_stage(kExitCalibrate, "calibrate", log, [&] {
            if (cfg.calib == "synthetic") {
                corpus = make_synthetic_corpus(cfg.seed, model.config.vocab_size, cfg.nsamples,
                                               cfg.seqlen);
            } else {
                corpus = load_token_file(cfg.calib, cfg.nsamples, cfg.seqlen);
            }
            CalibrationOptions opts;
            opts.collect_full_score = want_full_score;
            calres = run_calibration(model, corpus, opts);
        });

        SparsityPlan plan;
        run_stage(kExitPlan, "plan", log, [&] {
            plan.global_target = cfg.sparsity;
            plan.alpha = 0.0;
            if (cfg.method == Method::sparsessm && want_ffn) {
                std::vector<std::pair<std::string, const GramAccumulator*>> pool;
                for (std::int64_t i = 0; i < model.config.n_layers; ++i) {
                    const auto& grams = calres[static_cast<std::size_t>(i)].grams;
                    pool.emplace_back(module_full_name(i, "in_proj"), &grams.at("in_proj"));
                    pool.emplace_back(module_full_name(i, "out_proj"), &grams.at("out_proj"));
                }
                plan = allocate_sparsity(sensitivity_scores(pool), cfg.sparsity, eff_alpha);
            }
        });

        std::vector<ModuleReport> module_reports;
        run_stage(kExitPruneFfn, "prune-ffn", log, [&] {
            if (!want_ffn) {
                return;
            }
            // propagate layer by layer: capture inputs with the current
            // weights, prune the layer, then recompute its output
            NamedTensor u = embed_tokens(model, corpus.sequences);
            const auto& names = ffn_module_names();
            for (std::int64_t i = 0; i < model.config.n_layers; ++i) {
                MambaLayer& layer = model.layers[static_cast<std::size_t>(i)];
                const NamedTensor v = rms_norm(u, model.norms[static_cast<std::size_t>(i)]);
                ScanTrace capture;
                block_forward(layer, v, true, &capture);

                std::map<std::string, GramAccumulator> grams;
                for (const std::string& m : names) {
                    const NamedTensor& act = capture.module_inputs.at(m);
                    GramAccumulator acc = make_gram_accumulator(
                        m == "conv1d" ? model.config.d_conv : act.dim(2));
                    accumulate_gram(acc, m == "conv1d"
                                             ? unfold_conv_inputs(act, model.config.d_conv)
                                             : activation_columns(act));
                    grams.emplace(m, std::move(acc));
                }

                std::vector<ModuleReport> layer_reports(names.size());
                parallel_for(static_cast<std::int64_t>(names.size()), [&](std::int64_t mi) {
                    const std::string& short_name = names[static_cast<std::size_t>(mi)];
                    const std::string full_name = module_full_name(i, short_name);
                    const double target = plan.sparsity_for(full_name);
                    NamedTensor& w = module_weight(layer, short_name);
                    const GramAccumulator& acc = grams.at(short_name);
                    ObsResult res;
                    if (cfg.method == Method::magnitude) {
                        res = prune_linear_magnitude(w, acc, target);
                    } else if (short_name == "conv1d") {
                        res = prune_conv_as_linear(w, acc, target, cfg.block_size);
                    } else {
                        res = prune_linear_obs(w, acc, target, cfg.block_size);
                    }
                    w = std::move(res.weight);
                    layer_reports[static_cast<std::size_t>(mi)] = ModuleReport{
                        full_name, target,
                        static_cast<double>(count_f32_zeros(w)) /
                            static_cast<double>(w.numel()),
                        res.recon_error};
                });
                for (ModuleReport& r : layer_reports) {
                    module_reports.push_back(std::move(r));
                }
                NamedTensor block_out = block_forward(layer, v, false, nullptr);
                for (std::int64_t j = 0; j < u.numel(); ++j) {
                    u[j] += block_out[j];
                }
            }
        });

        run_stage(kExitPruneSsm, "prune-ssm", log, [&] {
            if (!want_ssm) {
                return;
            }
            std::int64_t removed_count = 0;
            for (std::int64_t i = 0; i < model.config.n_layers; ++i) {
                MambaLayer& layer = model.layers[static_cast<std::size_t>(i)];
                const LayerCalibration& lc = calres[static_cast<std::size_t>(i)];

                ImportanceField field;
                if (cfg.method == Method::magnitude) {
                    NamedTensor mag("importance", layer.a_log.shape());
                    for (std::int64_t j = 0; j < mag.numel(); ++j) {
                        mag[j] = std::fabs(layer.a_log[j]);
                    }
                    field = make_aggregate_field(std::move(mag));
                } else if (cfg.score == ScoreMode::full) {
                    field = make_aggregate_field(
                        finalize_full_score(layer.a_log, lc.full_score_raw));
                } else {
                    field = importance_simplified(layer.a_log, lc.stats);
                }

                const std::string name = module_full_name(i, "ssm.A_log");
                if (cfg.pattern == Pattern::column) {
                    std::vector<std::int64_t> removed;
                    MambaLayer compact =
                        prune_columns_structured(layer, field, cfg.sparsity, &removed);
                    const double recon =
                        reconstruction_error(layer, compact, lc.scan_inputs);
                    removed_count = static_cast<std::int64_t>(removed.size());
                    module_reports.push_back(ModuleReport{
                        name, cfg.sparsity,
                        static_cast<double>(removed_count) /
                            static_cast<double>(layer.a_log.dim(1)),
                        recon});
                    layer = std::move(compact);
                    continue;
                }

                PruneMask mask;
                double target = cfg.sparsity;
                if (cfg.pattern == Pattern::nm24 || cfg.pattern == Pattern::nm48) {
                    const std::int64_t zeros = cfg.pattern == Pattern::nm24 ? 2 : 4;
                    const std::int64_t group = cfg.pattern == Pattern::nm24 ? 4 : 8;
                    mask = select_mask_nm(field, zeros, group);
                    target = static_cast<double>(zeros) / static_cast<double>(group);
                } else if (field.has_per_step) {
                    mask = select_mask_time_frequency(field, cfg.sparsity);
                } else {
                    mask = select_mask_aggregate(field.aggregate, cfg.sparsity);
                }
                MambaLayer pruned = apply_mask(layer, mask);
                const double recon = reconstruction_error(layer, pruned, lc.scan_inputs);
                module_reports.push_back(ModuleReport{
                    name, target,
                    static_cast<double>(count_f32_zeros(pruned.a_log)) /
                        static_cast<double>(pruned.a_log.numel()),
                    recon});
                layer = std::move(pruned);
            }
            if (cfg.pattern == Pattern::column) {
                model.config.d_state -= removed_count;
            }
        });

        PruneReport report;
        run_stage(kExitEvaluate, "evaluate", log, [&] {
            report.perplexity_before = perplexity(original, corpus.sequences);
            report.perplexity_after = perplexity(model, corpus.sequences);
            for (const std::string& name : checkpoint_tensor_names(model.config)) {
                const NamedTensor* t = tensor_by_name(model, name);
                report.total_params += t->numel();
                report.zeroed_params += count_f32_zeros(*t);
            }
            report.method = to_string(cfg.method);
            report.score_mode = to_string(cfg.score);
            report.pattern = to_string(cfg.pattern);
            report.seed = cfg.seed;
            report.modules = module_reports;
            report.config_echo = {
                {"checkpoint", cfg.checkpoint},
                {"calib", cfg.calib},
                {"nsamples", std::to_string(cfg.nsamples)},
                {"seqlen", std::to_string(cfg.seqlen)},
                {"seed", std::to_string(cfg.seed)},
                {"sparsity", fmt_double(cfg.sparsity)},
                {"alpha", fmt_double(cfg.alpha)},
                {"score", to_string(cfg.score)},
                {"pattern", to_string(cfg.pattern)},
                {"target", to_string(cfg.target)},
                {"blocksize", std::to_string(cfg.block_size)},
                {"method", to_string(cfg.method)},
                {"report", cfg.report_path},
                {"out", cfg.out_dir},
                {"verify", cfg.verify ? "true" : "false"},
            };
            if (cfg.verify) {
                report.has_verify = true;
                const std::int64_t take =
                    std::min<std::int64_t>(4, static_cast<std::int64_t>(corpus.sequences.size()));
                for (std::int64_t i = 0; i < original.config.n_layers; ++i) {
                    const MambaLayer& layer = original.layers[static_cast<std::size_t>(i)];
                    const NamedTensor sub =
                        slice_batch(calres[static_cast<std::size_t>(i)].scan_inputs, take);
                    ScanTrace trace;
                    const NamedTensor y_base = selective_scan(layer, sub, true, &trace);
                    const NamedTensor full =
                        importance_full(layer.a_log, std::span<const ScanTrace>(&trace, 1));
                    const NamedTensor fd = fd_hessian_diag(layer, sub, y_base);
                    const NamedTensor sal = fd_diagonal_saliency(fd, layer.a_log);
                    HiddenStats sub_stats = make_hidden_stats(sub.dim(1), sub.dim(2),
                                                              layer.a_log.dim(1));
                    accumulate_stats(sub_stats, trace);
                    const ImportanceField simp = importance_simplified(layer.a_log, sub_stats);
                    report.verify.push_back(LayerVerify{
                        i, spearman_rank_correlation(full.flat(), sal.flat()),
                        spearman_rank_correlation(simp.aggregate.flat(), full.flat())});
                }
            }
        });

        run_stage(kExitEmit, "emit", log, [&] {
            if (!cfg.out_dir.empty()) {
                save_checkpoint(model, cfg.out_dir);
            }
            if (!cfg.report_path.empty()) {
                emit_report(report, cfg.report_path);
            }
        });
        return kExitOk;
    } catch (const StageFailure& f) {
        err << "error in stage " << f.stage << ": " << f.message << "\n";
        return f.code;
    }
}

int run_baseline_magnitude(RunConfig cfg, std::ostream& log, std::ostream& err) {
    cfg.method = Method::magnitude;
    return run_pipeline(cfg, log, err);
}

}  // namespace surgeon
