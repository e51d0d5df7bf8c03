#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "surgeon/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"ssm-surgeon: training-free one-shot pruning for selective state-space models"};

    surgeon::RunConfig cfg;
    std::string score = "simplified";
    std::string pattern = "unstructured";
    std::string target = "all";
    std::string method = "sparsessm";

    app.add_option("--checkpoint", cfg.checkpoint, "checkpoint directory to prune")->required();
    app.add_option("--calib", cfg.calib, "'synthetic' or a token file path (default synthetic)");
    app.add_option("--nsamples", cfg.nsamples, "calibration sample count (default 64)");
    app.add_option("--seqlen", cfg.seqlen, "calibration sequence length (default 64)");
    app.add_option("--seed", cfg.seed, "calibration / corpus seed (default 0)");
    app.add_option("--sparsity", cfg.sparsity, "global sparsity target in [0,1] (default 0.5)");
    app.add_option("--alpha", cfg.alpha, "sparsity deviation for ranked modules (default 0.04)");
    app.add_option("--score", score, "importance score: simplified | full")
        ->check(CLI::IsMember({"simplified", "full"}));
    app.add_option("--pattern", pattern, "mask pattern: unstructured | 2:4 | 4:8 | column")
        ->check(CLI::IsMember({"unstructured", "2:4", "4:8", "column"}));
    app.add_option("--target", target, "pruning scope: ssm | ffn | all")
        ->check(CLI::IsMember({"ssm", "ffn", "all"}));
    app.add_option("--blocksize", cfg.block_size, "OBS column block size (default 16)");
    app.add_option("--method", method, "sparsessm | magnitude")
        ->check(CLI::IsMember({"sparsessm", "magnitude"}));
    app.add_option("--report", cfg.report_path, "write a JSON run report here");
    app.add_option("--out", cfg.out_dir, "write the pruned checkpoint here");
    app.add_flag("--verify", cfg.verify, "append oracle-comparison blocks to the report");

    CLI11_PARSE(app, argc, argv);

    cfg.score = score == "full" ? surgeon::ScoreMode::full : surgeon::ScoreMode::simplified;
    const std::map<std::string, surgeon::Pattern> patterns = {
        {"unstructured", surgeon::Pattern::unstructured},
        {"2:4", surgeon::Pattern::nm24},
        {"4:8", surgeon::Pattern::nm48},
        {"column", surgeon::Pattern::column},
    };
    cfg.pattern = patterns.at(pattern);
    const std::map<std::string, surgeon::TargetScope> targets = {
        {"ssm", surgeon::TargetScope::ssm},
        {"ffn", surgeon::TargetScope::ffn},
        {"all", surgeon::TargetScope::all},
    };
    cfg.target = targets.at(target);
    cfg.method = method == "magnitude" ? surgeon::Method::magnitude
                                       : surgeon::Method::sparsessm;

    return surgeon::run_pipeline(cfg, std::cout, std::cerr);
}
