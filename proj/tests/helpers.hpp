#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "surgeon/model.hpp"
#include "surgeon/rng.hpp"
#include "surgeon/tensor.hpp"

namespace surgeon::testing {

inline double inverse_softplus(double y) { return std::log(std::expm1(y)); }

inline NamedTensor uniform_tensor(Rng& rng, const std::string& name,
                                  std::vector<std::int64_t> shape, double lo, double hi) {
    NamedTensor t(name, std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        t[i] = rng.uniform(lo, hi);
    }
    return t;
}

struct ScanInstance {
    MambaLayer layer;
    NamedTensor x;  // [B, L, D]
};

/// Scan-level random instance whose post-softplus increments land inside
/// [0.05, 0.3] by construction: small dt projections around a bias chosen in
/// the interior of the interval.
inline ScanInstance make_scan_instance(std::uint64_t seed, std::int64_t b = 4,
                                       std::int64_t l = 8, std::int64_t d = 4,
                                       std::int64_t n = 4, std::int64_t dt_rank = 2) {
    Rng rng(seed);
    ScanInstance inst;
    MambaLayer& layer = inst.layer;

    layer.a_log = NamedTensor("a_log", {d, n});
    for (std::int64_t i = 0; i < layer.a_log.numel(); ++i) {
        layer.a_log[i] = std::log(rng.uniform(0.7, 2.5));
    }
    layer.x_proj = NamedTensor("x_proj", {dt_rank + 2 * n, d});
    for (std::int64_t r = 0; r < dt_rank; ++r) {
        for (std::int64_t c = 0; c < d; ++c) {
            layer.x_proj.at(r, c) = rng.uniform(-0.02, 0.02);
        }
    }
    for (std::int64_t r = dt_rank; r < dt_rank + 2 * n; ++r) {
        for (std::int64_t c = 0; c < d; ++c) {
            layer.x_proj.at(r, c) = rng.uniform(-0.6, 0.6);
        }
    }
    layer.dt_proj = uniform_tensor(rng, "dt_proj", {d, dt_rank}, -0.3, 0.3);
    layer.dt_bias = NamedTensor("dt_bias", {d});
    for (std::int64_t i = 0; i < d; ++i) {
        layer.dt_bias[i] = inverse_softplus(rng.uniform(0.07, 0.27));
    }
    layer.d_skip = uniform_tensor(rng, "d_skip", {d}, 0.5, 1.5);
    inst.x = uniform_tensor(rng, "x", {b, l, d}, -1.0, 1.0);
    return inst;
}

/// Full block-level layer with every projection populated.
inline MambaLayer make_full_layer(std::uint64_t seed, std::int64_t d_model, std::int64_t d,
                                  std::int64_t n, std::int64_t d_conv, std::int64_t dt_rank) {
    Rng rng(seed);
    MambaLayer layer;
    const double in_scale = 1.0 / std::sqrt(static_cast<double>(d_model));
    layer.in_proj = uniform_tensor(rng, "in_proj", {2 * d, d_model}, -in_scale, in_scale);
    const double conv_scale = 1.0 / std::sqrt(static_cast<double>(d_conv));
    layer.conv_weight =
        uniform_tensor(rng, "conv1d", {d, d_conv}, -conv_scale, conv_scale);
    layer.conv_bias = uniform_tensor(rng, "conv_bias", {d}, -0.05, 0.05);
    const double xp_scale = 0.5 / std::sqrt(static_cast<double>(d));
    layer.x_proj =
        uniform_tensor(rng, "x_proj", {dt_rank + 2 * n, d}, -xp_scale, xp_scale);
    layer.dt_proj = uniform_tensor(rng, "dt_proj", {d, dt_rank}, -0.1, 0.1);
    layer.dt_bias = NamedTensor("dt_bias", {d});
    for (std::int64_t i = 0; i < d; ++i) {
        layer.dt_bias[i] = inverse_softplus(rng.uniform(0.07, 0.25));
    }
    layer.a_log = NamedTensor("a_log", {d, n});
    for (std::int64_t i = 0; i < layer.a_log.numel(); ++i) {
        layer.a_log[i] = std::log(rng.uniform(0.5, 8.0));
    }
    layer.d_skip = uniform_tensor(rng, "d_skip", {d}, 0.6, 1.4);
    const double out_scale = 1.0 / std::sqrt(static_cast<double>(d));
    layer.out_proj = uniform_tensor(rng, "out_proj", {d_model, d}, -out_scale, out_scale);
    return layer;
}

inline double max_abs_diff(const NamedTensor& a, const NamedTensor& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::fabs(a[i] - b[i]));
    }
    return m;
}

}  // namespace surgeon::testing
