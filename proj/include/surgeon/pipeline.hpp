#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace surgeon {

enum class TargetScope { ssm, ffn, all };
enum class ScoreMode { simplified, full };
enum class Pattern { unstructured, nm24, nm48, column };
enum class Method { sparsessm, magnitude };

std::string to_string(TargetScope v);
std::string to_string(ScoreMode v);
std::string to_string(Pattern v);
std::string to_string(Method v);

struct RunConfig {
    std::string checkpoint;
    std::string calib = "synthetic";
    std::int64_t nsamples = 64;
    std::int64_t seqlen = 64;
    std::uint64_t seed = 0;
    double sparsity = 0.5;
    double alpha = 0.04;
    ScoreMode score = ScoreMode::simplified;
    Pattern pattern = Pattern::unstructured;
    TargetScope target = TargetScope::all;
    std::int64_t block_size = 16;
    Method method = Method::sparsessm;
    std::string report_path;
    std::string out_dir;
    bool verify = false;

    void validate() const;
};

/// Stage-indexed exit codes; 0 means success.
enum PipelineExit : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitLoad = 3,
    kExitCalibrate = 4,
    kExitPlan = 5,
    kExitPruneFfn = 6,
    kExitPruneSsm = 7,
    kExitEvaluate = 8,
    kExitEmit = 9,
};

/// Calibrate once, prune per scope, evaluate, emit the report and pruned
/// checkpoint. Deterministic in (checkpoint, cfg).
int run_pipeline(const RunConfig& cfg, std::ostream& log, std::ostream& err);

/// Same pipeline with every importance score replaced by weight magnitude.
int run_baseline_magnitude(RunConfig cfg, std::ostream& log, std::ostream& err);

}  // namespace surgeon
