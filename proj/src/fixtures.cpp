#include "surgeon/fixtures.hpp"

#include <cmath>

#include "surgeon/calibration.hpp"
#include "surgeon/rng.hpp"

namespace surgeon {

namespace {

NamedTensor uniform_tensor(Rng& rng, const std::string& name,
                           std::vector<std::int64_t> shape, double lo, double hi) {
    NamedTensor t(name, std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        t[i] = rng.uniform(lo, hi);
    }
    return t;
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

}  // namespace

MambaConfig tiny_config() {
    MambaConfig c;
    c.n_layers = 2;
    c.d_model = 32;
    c.d_inner = 64;
    c.d_state = 8;
    c.d_conv = 4;
    c.dt_rank = 2;
    c.vocab_size = 64;
    return c;
}

MambaModel make_random_model(const MambaConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    MambaModel model;
    model.config = config;

    const double emb_scale = 0.8;
    model.embedding = NamedTensor("embedding.weight", {config.vocab_size, config.d_model});
    for (std::int64_t i = 0; i < model.embedding.numel(); ++i) {
        model.embedding[i] = emb_scale * rng.normal() / std::sqrt(static_cast<double>(config.d_model));
    }

    for (std::int64_t li = 0; li < config.n_layers; ++li) {
        MambaLayer layer;
        const std::string p = "layers." + std::to_string(li) + ".";
        const double in_scale = 2.0 / std::sqrt(static_cast<double>(config.d_model));
        layer.in_proj =
            uniform_tensor(rng, p + "in_proj.weight", {2 * config.d_inner, config.d_model},
                           -in_scale, in_scale);
        const double conv_scale = 1.0 / std::sqrt(static_cast<double>(config.d_conv));
        layer.conv_weight = uniform_tensor(rng, p + "conv1d.weight",
                                           {config.d_inner, config.d_conv}, -conv_scale,
                                           conv_scale);
        layer.conv_bias =
            uniform_tensor(rng, p + "conv1d.bias", {config.d_inner}, -0.05, 0.05);
        // B/C rows carry per-state scale heterogeneity so some state channels
        // see far more traffic than others; the scan output stays comparable
        // to the skip path instead of vanishing under it
        const double xp_scale = 4.0 / std::sqrt(static_cast<double>(config.d_inner));
        layer.x_proj = NamedTensor(p + "x_proj.weight",
                                   {config.dt_rank + 2 * config.d_state, config.d_inner});
        for (std::int64_t r = 0; r < config.dt_rank; ++r) {
            for (std::int64_t c = 0; c < config.d_inner; ++c) {
                layer.x_proj.at(r, c) = rng.uniform(-0.05, 0.05);
            }
        }
        for (std::int64_t n = 0; n < config.d_state; ++n) {
            const double sb = std::exp(rng.uniform(std::log(0.2), std::log(1.0)));
            const double sc = std::exp(rng.uniform(std::log(0.2), std::log(1.0)));
            for (std::int64_t c = 0; c < config.d_inner; ++c) {
                layer.x_proj.at(config.dt_rank + n, c) =
                    sb * rng.uniform(-xp_scale, xp_scale);
                layer.x_proj.at(config.dt_rank + config.d_state + n, c) =
                    sc * rng.uniform(-xp_scale, xp_scale);
            }
        }
        layer.dt_proj = uniform_tensor(rng, p + "dt_proj.weight",
                                       {config.d_inner, config.dt_rank}, -0.1, 0.1);
        // bias targets post-softplus increments near [0.1, 0.3]
        layer.dt_bias = NamedTensor(p + "dt_proj.bias", {config.d_inner});
        for (std::int64_t d = 0; d < config.d_inner; ++d) {
            layer.dt_bias[d] = inverse_softplus(rng.uniform(0.1, 0.3));
        }
        // decay rates scattered independently of the usage pattern above
        layer.a_log = NamedTensor(p + "ssm.A_log", {config.d_inner, config.d_state});
        for (std::int64_t i = 0; i < layer.a_log.numel(); ++i) {
            layer.a_log[i] = std::log(rng.uniform(0.7, 4.0));
        }
        layer.d_skip = uniform_tensor(rng, p + "ssm.d_skip", {config.d_inner}, 0.2, 0.7);
        const double out_scale = 1.0 / std::sqrt(static_cast<double>(config.d_inner));
        layer.out_proj = uniform_tensor(rng, p + "out_proj.weight",
                                        {config.d_model, config.d_inner}, -out_scale, out_scale);
        model.layers.push_back(std::move(layer));
    }

    for (std::int64_t i = 0; i <= config.n_layers; ++i) {
        NamedTensor w("norm." + std::to_string(i) + ".weight", {config.d_model});
        std::fill(w.storage().begin(), w.storage().end(), 1.0);
        model.norms.push_back(std::move(w));
    }

    model.lm_head = NamedTensor("lm_head.weight", {config.vocab_size, config.d_model});
    for (std::int64_t i = 0; i < model.lm_head.numel(); ++i) {
        model.lm_head[i] = rng.normal() / std::sqrt(static_cast<double>(config.d_model));
    }
    return model;
}

MambaModel make_trained_fixture(const MambaConfig& config, std::uint64_t seed,
                                std::int64_t corpus_b, std::int64_t corpus_l) {
    MambaModel model = make_random_model(config, seed);
    const CalibrationSet corpus =
        make_synthetic_corpus(seed + 1, config.vocab_size, corpus_b, corpus_l);

    // final-norm features at every position with a defined next token
    NamedTensor u = embed_tokens(model, corpus.sequences);
    for (std::int64_t i = 0; i < config.n_layers; ++i) {
        u = layer_step(model, i, u, false, nullptr);
    }
    const NamedTensor feats = rms_norm(u, model.norms.back());

    const std::int64_t bsz = feats.dim(0);
    const std::int64_t len = feats.dim(1);
    const std::int64_t d_model = config.d_model;
    const std::int64_t rows = bsz * (len - 1);

    NamedTensor xtx("xtx", {d_model, d_model});
    NamedTensor xty("xty", {d_model, config.vocab_size});
    for (std::int64_t b = 0; b < bsz; ++b) {
        for (std::int64_t t = 0; t + 1 < len; ++t) {
            const double* f = feats.data() + (b * len + t) * d_model;
            const std::int64_t target =
                corpus.sequences[static_cast<std::size_t>(b)][static_cast<std::size_t>(t + 1)];
            for (std::int64_t i = 0; i < d_model; ++i) {
                for (std::int64_t j = i; j < d_model; ++j) {
                    xtx.at(i, j) += f[i] * f[j];
                }
                xty.at(i, target) += f[i];
            }
        }
    }
    for (std::int64_t i = 0; i < d_model; ++i) {
        for (std::int64_t j = 0; j < i; ++j) {
            xtx.at(i, j) = xtx.at(j, i);
        }
    }
    double mean_diag = 0.0;
    for (std::int64_t i = 0; i < d_model; ++i) {
        mean_diag += xtx.at(i, i);
    }
    mean_diag /= static_cast<double>(d_model);
    const double ridge = 1e-3 * mean_diag + 1e-8 * static_cast<double>(rows);
    for (std::int64_t i = 0; i < d_model; ++i) {
        xtx.at(i, i) += ridge;
    }
    const NamedTensor head_t = spd_factor_solve(xtx, xty);  // [d_model x vocab]
    for (std::int64_t v = 0; v < config.vocab_size; ++v) {
        for (std::int64_t m = 0; m < d_model; ++m) {
            model.lm_head.at(v, m) = head_t.at(m, v);
        }
    }
    return model;
}

}  // namespace surgeon
