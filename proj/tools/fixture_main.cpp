#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "surgeon/fixtures.hpp"
#include "surgeon/model.hpp"

// Generates the shipped desk-scale fixtures: a random-init tiny model and a
// seeded "trained-ish" variant whose output head is least-squares fitted on a
// synthetic corpus.
int main(int argc, char** argv) {
    CLI::App app{"ssm-surgeon-fixture: generate deterministic test checkpoints"};

    std::string out;
    std::string kind = "tiny";
    std::uint64_t seed = 1;
    std::int64_t corpus_b = 24;
    std::int64_t corpus_l = 32;
    app.add_option("--out", out, "output checkpoint directory")->required();
    app.add_option("--kind", kind, "tiny | trained")
        ->check(CLI::IsMember({"tiny", "trained"}));
    app.add_option("--seed", seed, "fixture seed (default 1)");
    app.add_option("--fit-nsamples", corpus_b, "head-fit corpus size for kind=trained");
    app.add_option("--fit-seqlen", corpus_l, "head-fit sequence length for kind=trained");

    CLI11_PARSE(app, argc, argv);

    try {
        const surgeon::MambaConfig config = surgeon::tiny_config();
        const surgeon::MambaModel model =
            kind == "trained"
                ? surgeon::make_trained_fixture(config, seed, corpus_b, corpus_l)
                : surgeon::make_random_model(config, seed);
        surgeon::save_checkpoint(model, out);
        std::cout << "wrote " << kind << " fixture (seed " << seed << ") to " << out << "\n";
    } catch (const std::exception& e) {
        std::cerr << "fixture generation failed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
