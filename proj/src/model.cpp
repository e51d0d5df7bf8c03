#include "surgeon/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace surgeon {

namespace {

constexpr double kRmsNormEps = 1e-5;
constexpr double kExpFloor = -60.0;  // keeps dA away from denormals

std::string layer_prefix(std::int64_t i) { return "layers." + std::to_string(i) + "."; }

void require(bool ok, const std::string& msg) {
    if (!ok) {
        throw DimensionError(msg);
    }
}

}  // namespace

void MambaConfig::validate() const {
    if (n_layers < 1 || d_model < 1 || d_inner < 1 || d_state < 1 || d_conv < 1 || dt_rank < 1 ||
        vocab_size < 1) {
        throw ArgumentError("model config: all counts must be >= 1");
    }
    if (d_inner % d_model != 0) {
        throw ArgumentError("model config: d_inner must be an integer multiple of d_model");
    }
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double softplus(double x) {
    // max(x, 0) + log1p(exp(-|x|)) avoids overflow on both tails
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

NamedTensor parameterize_a(const NamedTensor& a_log) {
    NamedTensor a("A", a_log.shape());
    const double* src = a_log.data();
    double* dst = a.data();
    const std::int64_t n = a_log.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(src[i])) {
            throw NumericError("a_log contains a non-finite entry at flat index " +
                               std::to_string(i));
        }
        dst[i] = -std::exp(std::min(src[i], 60.0));
    }
    return a;
}

NamedTensor discretize(const NamedTensor& a, const NamedTensor& delta) {
    require(a.rank() == 2, "discretize: a must be [D x N]");
    require(delta.rank() == 3, "discretize: delta must be [B x L x D]");
    const std::int64_t bsz = delta.dim(0);
    const std::int64_t len = delta.dim(1);
    const std::int64_t d_inner = delta.dim(2);
    const std::int64_t d_state = a.dim(1);
    require(a.dim(0) == d_inner, "discretize: channel axes disagree");
    NamedTensor out("deltaA", {bsz, len, d_inner, d_state});
    const double* pd = delta.data();
    const double* pa = a.data();
    double* po = out.data();
    std::int64_t o = 0;
    for (std::int64_t b = 0; b < bsz; ++b) {
        for (std::int64_t t = 0; t < len; ++t) {
            for (std::int64_t d = 0; d < d_inner; ++d) {
                const double dt = pd[(b * len + t) * d_inner + d];
                for (std::int64_t n = 0; n < d_state; ++n) {
                    const double arg = std::clamp(dt * pa[d * d_state + n], kExpFloor, 0.0);
                    po[o++] = std::exp(arg);
                }
            }
        }
    }
    return out;
}

ScanParams compute_scan_params(const MambaLayer& layer, const NamedTensor& x) {
    require(x.rank() == 3, "selective scan input must be [B x L x D]");
    const std::int64_t bsz = x.dim(0);
    const std::int64_t len = x.dim(1);
    const std::int64_t d_inner = x.dim(2);
    const std::int64_t dt_rank = layer.dt_proj.dim(1);
    const std::int64_t d_state = layer.a_log.dim(1);
    require(layer.x_proj.dim(0) == dt_rank + 2 * d_state && layer.x_proj.dim(1) == d_inner,
            "x_proj shape inconsistent with layer");

    ScanParams p{NamedTensor("delta", {bsz, len, d_inner}), NamedTensor("B", {bsz, len, d_state}),
                 NamedTensor("C", {bsz, len, d_state}),
                 NamedTensor("delta_lowrank", {bsz, len, dt_rank})};
    const double* px = x.data();
    const double* pxp = layer.x_proj.data();
    const double* pdt = layer.dt_proj.data();
    const double* pdb = layer.dt_bias.data();
    for (std::int64_t b = 0; b < bsz; ++b) {
        for (std::int64_t t = 0; t < len; ++t) {
            const double* xin = px + (b * len + t) * d_inner;
            // x_proj rows: [0, dt_rank) -> delta_lowrank, then B rows, then C rows
            for (std::int64_t r = 0; r < dt_rank; ++r) {
                double acc = 0.0;
                for (std::int64_t d = 0; d < d_inner; ++d) {
                    acc += pxp[r * d_inner + d] * xin[d];
                }
                p.delta_lowrank.at(b, t, r) = acc;
            }
            for (std::int64_t n = 0; n < d_state; ++n) {
                double acc_b = 0.0;
                double acc_c = 0.0;
                for (std::int64_t d = 0; d < d_inner; ++d) {
                    acc_b += pxp[(dt_rank + n) * d_inner + d] * xin[d];
                    acc_c += pxp[(dt_rank + d_state + n) * d_inner + d] * xin[d];
                }
                p.b_mat.at(b, t, n) = acc_b;
                p.c_mat.at(b, t, n) = acc_c;
            }
            for (std::int64_t d = 0; d < d_inner; ++d) {
                double acc = pdb[d];
                for (std::int64_t r = 0; r < dt_rank; ++r) {
                    acc += pdt[d * dt_rank + r] * p.delta_lowrank.at(b, t, r);
                }
                p.delta.at(b, t, d) = softplus(acc);
            }
        }
    }
    return p;
}

NamedTensor scan_kernel(const NamedTensor& delta_a, const NamedTensor& delta_b_x,
                        const NamedTensor& c_mat, const NamedTensor& x,
                        const NamedTensor& d_skip, NamedTensor* hidden_out) {
    require(delta_a.rank() == 4 && delta_b_x.same_shape(delta_a),
            "scan_kernel: discretized inputs must both be [B x L x D x N]");
    const std::int64_t bsz = delta_a.dim(0);
    const std::int64_t len = delta_a.dim(1);
    const std::int64_t d_inner = delta_a.dim(2);
    const std::int64_t d_state = delta_a.dim(3);
    require(c_mat.rank() == 3 && c_mat.dim(0) == bsz && c_mat.dim(1) == len &&
                c_mat.dim(2) == d_state,
            "scan_kernel: c must be [B x L x N]");
    require(x.rank() == 3 && x.dim(0) == bsz && x.dim(1) == len && x.dim(2) == d_inner,
            "scan_kernel: x must be [B x L x D]");
    require(d_skip.numel() == d_inner, "scan_kernel: d_skip must be [D]");

    NamedTensor y("scan_out", {bsz, len, d_inner});
    if (hidden_out != nullptr) {
        *hidden_out = NamedTensor("hidden", {bsz, len, d_inner, d_state});
    }
    std::vector<double> h(static_cast<std::size_t>(d_inner * d_state));
    const double* pa = delta_a.data();
    const double* pbx = delta_b_x.data();
    const double* pc = c_mat.data();
    const double* px = x.data();
    const double* ps = d_skip.data();
    for (std::int64_t b = 0; b < bsz; ++b) {
        std::fill(h.begin(), h.end(), 0.0);
        for (std::int64_t t = 0; t < len; ++t) {
            const std::int64_t step = (b * len + t) * d_inner * d_state;
            const double* ct = pc + (b * len + t) * d_state;
            for (std::int64_t d = 0; d < d_inner; ++d) {
                double* hd = h.data() + d * d_state;
                const double* ad = pa + step + d * d_state;
                const double* bxd = pbx + step + d * d_state;
                double acc = 0.0;
                for (std::int64_t n = 0; n < d_state; ++n) {
                    const double hv = ad[n] * hd[n] + bxd[n];
                    hd[n] = hv;
                    acc += hv * ct[n];
                }
                const double yv = acc + ps[d] * px[(b * len + t) * d_inner + d];
                if (!std::isfinite(yv)) {
                    throw NumericError("selective scan produced a non-finite value at step " +
                                       std::to_string(t));
                }
                y.at(b, t, d) = yv;
            }
            if (hidden_out != nullptr) {
                std::memcpy(hidden_out->data() + step, h.data(),
                            static_cast<std::size_t>(d_inner * d_state) * sizeof(double));
            }
        }
    }
    return y;
}

NamedTensor selective_scan(const MambaLayer& layer, const NamedTensor& x, bool record,
                           ScanTrace* trace) {
    ScanParams params = compute_scan_params(layer, x);
    const NamedTensor a = parameterize_a(layer.a_log);
    const NamedTensor delta_a = discretize(a, params.delta);

    const std::int64_t bsz = x.dim(0);
    const std::int64_t len = x.dim(1);
    const std::int64_t d_inner = x.dim(2);
    const std::int64_t d_state = layer.a_log.dim(1);
    NamedTensor delta_b_x("deltaBx", {bsz, len, d_inner, d_state});
    for (std::int64_t b = 0; b < bsz; ++b) {
        for (std::int64_t t = 0; t < len; ++t) {
            for (std::int64_t d = 0; d < d_inner; ++d) {
                const double scale = params.delta.at(b, t, d) * x.at(b, t, d);
                for (std::int64_t n = 0; n < d_state; ++n) {
                    delta_b_x.at(b, t, d, n) = scale * params.b_mat.at(b, t, n);
                }
            }
        }
    }

    NamedTensor hidden;
    NamedTensor y = scan_kernel(delta_a, delta_b_x, params.c_mat, x, layer.d_skip,
                                record ? &hidden : nullptr);
    if (record && trace != nullptr) {
        trace->hidden = std::move(hidden);
        trace->deltas = params.delta;
        trace->deltas.set_name("deltas");
        trace->module_inputs["x_proj"] = x;
        trace->module_inputs["dt_proj"] = params.delta_lowrank;
    }
    return y;
}

NamedTensor block_forward(const MambaLayer& layer, const NamedTensor& u, bool record,
                          ScanTrace* trace) {
    require(u.rank() == 3, "block input must be [B x L x d_model]");
    const std::int64_t bsz = u.dim(0);
    const std::int64_t len = u.dim(1);
    const std::int64_t d_model = u.dim(2);
    const std::int64_t d_inner = layer.in_proj.dim(0) / 2;
    const std::int64_t d_conv = layer.conv_weight.dim(1);
    require(layer.in_proj.dim(1) == d_model, "in_proj width disagrees with block input");

    NamedTensor x("x", {bsz, len, d_inner});
    NamedTensor res("res", {bsz, len, d_inner});
    const double* pin = layer.in_proj.data();
    for (std::int64_t b = 0; b < bsz; ++b) {
        for (std::int64_t t = 0; t < len; ++t) {
            const double* uin = u.data() + (b * len + t) * d_model;
            for (std::int64_t d = 0; d < 2 * d_inner; ++d) {
                double acc = 0.0;
                for (std::int64_t m = 0; m < d_model; ++m) {
                    acc += pin[d * d_model + m] * uin[m];
                }
                if (d < d_inner) {
                    x.at(b, t, d) = acc;
                } else {
                    res.at(b, t, d - d_inner) = acc;
                }
            }
        }
    }

    // causal depthwise conv (zero left padding) followed by SiLU
    NamedTensor xs("scan_in", {bsz, len, d_inner});
    for (std::int64_t b = 0; b < bsz; ++b) {
        for (std::int64_t t = 0; t < len; ++t) {
            for (std::int64_t d = 0; d < d_inner; ++d) {
                double acc = layer.conv_bias.at(d);
                for (std::int64_t j = 0; j < d_conv; ++j) {
                    const std::int64_t src = t - (d_conv - 1) + j;
                    if (src >= 0) {
                        acc += layer.conv_weight.at(d, j) * x.at(b, src, d);
                    }
                }
                xs.at(b, t, d) = silu(acc);
            }
        }
    }

    NamedTensor y = selective_scan(layer, xs, record, trace);

    NamedTensor gated("gated", {bsz, len, d_inner});
    for (std::int64_t i = 0; i < gated.numel(); ++i) {
        gated[i] = y[i] * silu(res[i]);
    }

    NamedTensor out("block_out", {bsz, len, d_model});
    const double* pout = layer.out_proj.data();
    for (std::int64_t b = 0; b < bsz; ++b) {
        for (std::int64_t t = 0; t < len; ++t) {
            const double* gin = gated.data() + (b * len + t) * d_inner;
            for (std::int64_t m = 0; m < d_model; ++m) {
                double acc = 0.0;
                for (std::int64_t d = 0; d < d_inner; ++d) {
                    acc += pout[m * d_inner + d] * gin[d];
                }
                out.at(b, t, m) = acc;
            }
        }
    }

    if (record && trace != nullptr) {
        trace->module_inputs["in_proj"] = u;
        trace->module_inputs["conv1d"] = x;
        trace->module_inputs["out_proj"] = gated;
    }
    return out;
}

NamedTensor rms_norm(const NamedTensor& u, const NamedTensor& weight) {
    require(u.rank() == 3 && weight.numel() == u.dim(2), "rms_norm shape mismatch");
    const std::int64_t rows = u.dim(0) * u.dim(1);
    const std::int64_t width = u.dim(2);
    NamedTensor out("normed", u.shape());
    const double* pu = u.data();
    const double* pw = weight.data();
    double* po = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::int64_t c = 0; c < width; ++c) {
            ss += pu[r * width + c] * pu[r * width + c];
        }
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(width) + kRmsNormEps);
        for (std::int64_t c = 0; c < width; ++c) {
            po[r * width + c] = pu[r * width + c] * inv * pw[c];
        }
    }
    return out;
}

NamedTensor embed_tokens(const MambaModel& model,
                         const std::vector<std::vector<std::int64_t>>& tokens) {
    if (tokens.empty() || tokens.front().empty()) {
        throw ArgumentError("token batch must be non-empty");
    }
    const std::int64_t bsz = static_cast<std::int64_t>(tokens.size());
    const std::int64_t len = static_cast<std::int64_t>(tokens.front().size());
    const std::int64_t d_model = model.config.d_model;
    NamedTensor u("embedded", {bsz, len, d_model});
    for (std::int64_t b = 0; b < bsz; ++b) {
        if (static_cast<std::int64_t>(tokens[static_cast<std::size_t>(b)].size()) != len) {
            throw ArgumentError("token sequences must share one length");
        }
        for (std::int64_t t = 0; t < len; ++t) {
            const std::int64_t id = tokens[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)];
            if (id < 0 || id >= model.config.vocab_size) {
                throw ArgumentError("token id " + std::to_string(id) + " out of range [0, " +
                                    std::to_string(model.config.vocab_size) + ")");
            }
            for (std::int64_t m = 0; m < d_model; ++m) {
                u.at(b, t, m) = model.embedding.at(id, m);
            }
        }
    }
    return u;
}

NamedTensor layer_step(const MambaModel& model, std::int64_t layer_index, const NamedTensor& u,
                       bool record, ScanTrace* trace) {
    const NamedTensor normed = rms_norm(u, model.norms[static_cast<std::size_t>(layer_index)]);
    NamedTensor out =
        block_forward(model.layers[static_cast<std::size_t>(layer_index)], normed, record, trace);
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        out[i] += u[i];
    }
    return out;
}

NamedTensor model_head(const MambaModel& model, const NamedTensor& u) {
    const NamedTensor hn = rms_norm(u, model.norms.back());
    const std::int64_t bsz = u.dim(0);
    const std::int64_t len = u.dim(1);
    const std::int64_t d_model = u.dim(2);
    const std::int64_t vocab = model.config.vocab_size;
    NamedTensor logits("logits", {bsz, len, vocab});
    const double* ph = hn.data();
    const double* pw = model.lm_head.data();
    for (std::int64_t r = 0; r < bsz * len; ++r) {
        for (std::int64_t v = 0; v < vocab; ++v) {
            double acc = 0.0;
            for (std::int64_t m = 0; m < d_model; ++m) {
                acc += pw[v * d_model + m] * ph[r * d_model + m];
            }
            logits[r * vocab + v] = acc;
        }
    }
    return logits;
}

NamedTensor model_forward(const MambaModel& model,
                          const std::vector<std::vector<std::int64_t>>& tokens) {
    NamedTensor u = embed_tokens(model, tokens);
    for (std::int64_t i = 0; i < model.config.n_layers; ++i) {
        u = layer_step(model, i, u, false, nullptr);
    }
    return model_head(model, u);
}

// ---------------------------------------------------------------------------
// checkpoint serialization
// ---------------------------------------------------------------------------

std::vector<std::string> checkpoint_tensor_names(const MambaConfig& config) {
    std::vector<std::string> names;
    names.push_back("embedding.weight");
    for (std::int64_t i = 0; i < config.n_layers; ++i) {
        const std::string p = layer_prefix(i);
        names.push_back(p + "in_proj.weight");
        names.push_back(p + "conv1d.weight");
        names.push_back(p + "conv1d.bias");
        names.push_back(p + "x_proj.weight");
        names.push_back(p + "dt_proj.weight");
        names.push_back(p + "dt_proj.bias");
        names.push_back(p + "ssm.A_log");
        names.push_back(p + "ssm.d_skip");
        names.push_back(p + "out_proj.weight");
    }
    for (std::int64_t i = 0; i <= config.n_layers; ++i) {
        names.push_back("norm." + std::to_string(i) + ".weight");
    }
    names.push_back("lm_head.weight");
    return names;
}

NamedTensor* tensor_by_name(MambaModel& model, const std::string& name) {
    return const_cast<NamedTensor*>(
        tensor_by_name(static_cast<const MambaModel&>(model), name));
}

const NamedTensor* tensor_by_name(const MambaModel& model, const std::string& name) {
    if (name == "embedding.weight") {
        return &model.embedding;
    }
    if (name == "lm_head.weight") {
        return &model.lm_head;
    }
    if (name.rfind("norm.", 0) == 0) {
        const std::size_t dot = name.find('.', 5);
        if (dot == std::string::npos || name.substr(dot) != ".weight") {
            return nullptr;
        }
        const std::int64_t i = std::stoll(name.substr(5, dot - 5));
        if (i < 0 || i > model.config.n_layers) {
            return nullptr;
        }
        return &model.norms[static_cast<std::size_t>(i)];
    }
    if (name.rfind("layers.", 0) == 0) {
        const std::size_t dot = name.find('.', 7);
        if (dot == std::string::npos) {
            return nullptr;
        }
        const std::int64_t i = std::stoll(name.substr(7, dot - 7));
        if (i < 0 || i >= model.config.n_layers) {
            return nullptr;
        }
        const MambaLayer& layer = model.layers[static_cast<std::size_t>(i)];
        const std::string rest = name.substr(dot + 1);
        if (rest == "in_proj.weight") return &layer.in_proj;
        if (rest == "conv1d.weight") return &layer.conv_weight;
        if (rest == "conv1d.bias") return &layer.conv_bias;
        if (rest == "x_proj.weight") return &layer.x_proj;
        if (rest == "dt_proj.weight") return &layer.dt_proj;
        if (rest == "dt_proj.bias") return &layer.dt_bias;
        if (rest == "ssm.A_log") return &layer.a_log;
        if (rest == "ssm.d_skip") return &layer.d_skip;
        if (rest == "out_proj.weight") return &layer.out_proj;
        return nullptr;
    }
    return nullptr;
}

std::vector<std::int64_t> expected_tensor_shape(const MambaConfig& config,
                                                const std::string& name) {
    const std::int64_t d = config.d_inner;
    const std::int64_t n = config.d_state;
    if (name == "embedding.weight" || name == "lm_head.weight") {
        return {config.vocab_size, config.d_model};
    }
    if (name.rfind("norm.", 0) == 0) {
        return {config.d_model};
    }
    if (name.find("in_proj.weight") != std::string::npos) return {2 * d, config.d_model};
    if (name.find("conv1d.weight") != std::string::npos) return {d, config.d_conv};
    if (name.find("conv1d.bias") != std::string::npos) return {d};
    if (name.find("x_proj.weight") != std::string::npos) return {config.dt_rank + 2 * n, d};
    if (name.find("dt_proj.weight") != std::string::npos) return {d, config.dt_rank};
    if (name.find("dt_proj.bias") != std::string::npos) return {d};
    if (name.find("ssm.A_log") != std::string::npos) return {d, n};
    if (name.find("ssm.d_skip") != std::string::npos) return {d};
    if (name.find("out_proj.weight") != std::string::npos) return {config.d_model, d};
    throw FormatError("unknown tensor name '" + name + "'");
}

void save_checkpoint(const MambaModel& model, const std::string& dir) {
    namespace fs = std::filesystem;
    model.config.validate();
    fs::create_directories(dir);

    nlohmann::json manifest;
    manifest["config"] = {{"n_layers", model.config.n_layers},
                          {"d_model", model.config.d_model},
                          {"d_inner", model.config.d_inner},
                          {"d_state", model.config.d_state},
                          {"d_conv", model.config.d_conv},
                          {"dt_rank", model.config.dt_rank},
                          {"vocab_size", model.config.vocab_size}};
    nlohmann::json table = nlohmann::json::array();

    const std::string blob_path = (fs::path(dir) / "weights.bin").string();
    std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
    if (!blob) {
        throw FormatError("cannot open '" + blob_path + "' for writing");
    }
    std::int64_t offset = 0;
    for (const std::string& name : checkpoint_tensor_names(model.config)) {
        const NamedTensor* t = tensor_by_name(model, name);
        if (t == nullptr || t->empty()) {
            throw FormatError("model is missing tensor '" + name + "'");
        }
        std::vector<float> f32(static_cast<std::size_t>(t->numel()));
        for (std::int64_t i = 0; i < t->numel(); ++i) {
            f32[static_cast<std::size_t>(i)] = static_cast<float>((*t)[i]);
        }
        blob.write(reinterpret_cast<const char*>(f32.data()),
                   static_cast<std::streamsize>(f32.size() * sizeof(float)));
        table.push_back({{"name", name},
                         {"shape", t->shape()},
                         {"dtype", "f32"},
                         {"file", "weights.bin"},
                         {"byte_offset", offset}});
        offset += static_cast<std::int64_t>(f32.size() * sizeof(float));
    }
    blob.close();
    manifest["tensors"] = table;

    std::ofstream mf((fs::path(dir) / "manifest.json").string(), std::ios::trunc);
    if (!mf) {
        throw FormatError("cannot write manifest in '" + dir + "'");
    }
    mf << manifest.dump(2) << "\n";
}

MambaModel load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    std::ifstream mf(manifest_path);
    if (!mf) {
        throw FormatError("cannot open manifest '" + manifest_path + "'");
    }
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest parse failure: " + std::string(e.what()));
    }
    if (!manifest.contains("config") || !manifest.contains("tensors")) {
        throw FormatError("manifest must contain 'config' and 'tensors'");
    }

    MambaModel model;
    try {
        const auto& c = manifest["config"];
        model.config.n_layers = c.at("n_layers").get<std::int64_t>();
        model.config.d_model = c.at("d_model").get<std::int64_t>();
        model.config.d_inner = c.at("d_inner").get<std::int64_t>();
        model.config.d_state = c.at("d_state").get<std::int64_t>();
        model.config.d_conv = c.at("d_conv").get<std::int64_t>();
        model.config.dt_rank = c.at("dt_rank").get<std::int64_t>();
        model.config.vocab_size = c.at("vocab_size").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest config invalid: " + std::string(e.what()));
    }
    model.config.validate();
    model.layers.resize(static_cast<std::size_t>(model.config.n_layers));
    model.norms.resize(static_cast<std::size_t>(model.config.n_layers + 1));

    // read every referenced blob once
    std::map<std::string, std::vector<char>> blobs;
    std::set<std::string> seen;
    const std::vector<std::string> expected_names = checkpoint_tensor_names(model.config);
    const std::set<std::string> expected_set(expected_names.begin(), expected_names.end());

    for (const auto& entry : manifest["tensors"]) {
        std::string name;
        std::string file;
        std::string dtype;
        std::int64_t byte_offset = 0;
        std::vector<std::int64_t> shape;
        try {
            name = entry.at("name").get<std::string>();
            file = entry.at("file").get<std::string>();
            dtype = entry.at("dtype").get<std::string>();
            byte_offset = entry.at("byte_offset").get<std::int64_t>();
            shape = entry.at("shape").get<std::vector<std::int64_t>>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest tensor entry invalid: " + std::string(e.what()));
        }
        if (expected_set.count(name) == 0) {
            throw FormatError("tensor '" + name + "': unknown tensor name");
        }
        if (!seen.insert(name).second) {
            throw FormatError("tensor '" + name + "': duplicate manifest entry");
        }
        if (dtype != "f32") {
            throw FormatError("tensor '" + name + "': unsupported dtype '" + dtype + "'");
        }
        if (shape != expected_tensor_shape(model.config, name)) {
            throw FormatError("tensor '" + name + "': manifest shape disagrees with config");
        }
        auto it = blobs.find(file);
        if (it == blobs.end()) {
            std::ifstream bf((fs::path(dir) / file).string(), std::ios::binary);
            if (!bf) {
                throw FormatError("tensor '" + name + "': cannot open blob '" + file + "'");
            }
            std::vector<char> bytes((std::istreambuf_iterator<char>(bf)),
                                    std::istreambuf_iterator<char>());
            it = blobs.emplace(file, std::move(bytes)).first;
        }
        std::int64_t count = 1;
        for (const std::int64_t dsz : shape) {
            count *= dsz;
        }
        const std::int64_t need = byte_offset + count * static_cast<std::int64_t>(sizeof(float));
        if (byte_offset < 0 || need > static_cast<std::int64_t>(it->second.size())) {
            throw FormatError("tensor '" + name + "': blob truncated");
        }
        std::vector<double> values(static_cast<std::size_t>(count));
        const char* src = it->second.data() + byte_offset;
        for (std::int64_t i = 0; i < count; ++i) {
            float f;
            std::memcpy(&f, src + i * static_cast<std::int64_t>(sizeof(float)), sizeof(float));
            values[static_cast<std::size_t>(i)] = static_cast<double>(f);
        }
        NamedTensor* dst = tensor_by_name(model, name);
        *dst = NamedTensor(name, shape, std::move(values));
    }

    for (const std::string& name : expected_names) {
        if (seen.count(name) == 0) {
            throw FormatError("tensor '" + name + "': missing from manifest");
        }
    }
    return model;
}

}  // namespace surgeon
