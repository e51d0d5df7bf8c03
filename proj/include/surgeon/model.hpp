#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "surgeon/tensor.hpp"

namespace surgeon {

struct MambaConfig {
    std::int64_t n_layers = 0;
    std::int64_t d_model = 0;
    std::int64_t d_inner = 0;  // channel width D
    std::int64_t d_state = 0;  // state width N
    std::int64_t d_conv = 0;
    std::int64_t dt_rank = 0;
    std::int64_t vocab_size = 0;

    void validate() const;
};

/// One Mamba block's parameters. The state-transition matrix is stored in
/// log space (a_log, shape [D x N]) and realized as A = -exp(a_log).
struct MambaLayer {
    NamedTensor a_log;        // [D, N]
    NamedTensor conv_weight;  // [D, d_conv] depthwise kernel
    NamedTensor conv_bias;    // [D]
    NamedTensor in_proj;      // [2D, d_model]
    NamedTensor x_proj;       // [dt_rank + 2N, D]
    NamedTensor dt_proj;      // [D, dt_rank]
    NamedTensor dt_bias;      // [D]
    NamedTensor out_proj;     // [d_model, D]
    NamedTensor d_skip;       // [D]
};

/// Captured activations from one recorded forward pass.
struct ScanTrace {
    NamedTensor hidden;  // [B, L, D, N], h_t after the update at step t
    NamedTensor deltas;  // [B, L, D], post-softplus increments
    std::map<std::string, NamedTensor> module_inputs;  // per-module captured inputs
};

struct MambaModel {
    MambaConfig config;
    NamedTensor embedding;           // [vocab, d_model]
    std::vector<MambaLayer> layers;  // n_layers entries
    std::vector<NamedTensor> norms;  // n_layers + 1 entries, last one is the final norm
    NamedTensor lm_head;             // [vocab, d_model]
};

double silu(double x);
double softplus(double x);

/// A = -exp(a_log); every entry strictly negative.
NamedTensor parameterize_a(const NamedTensor& a_log);

/// (dA)_{b,l,d,n} = exp(delta_{b,l,d} * A_{d,n}); exponent clamped to [-60, 0].
NamedTensor discretize(const NamedTensor& a, const NamedTensor& delta);

/// Per-token scan parameters derived from the scan input x via x_proj/dt_proj.
struct ScanParams {
    NamedTensor delta;  // [B, L, D]
    NamedTensor b_mat;  // [B, L, N]
    NamedTensor c_mat;  // [B, L, N]
    NamedTensor delta_lowrank;  // [B, L, dt_rank]
};
ScanParams compute_scan_params(const MambaLayer& layer, const NamedTensor& x);

/// Core recurrence on already-discretized inputs:
///   h_t = dA_t (.) h_{t-1} + dBx_t, h_{-1} = 0;  y_t = h_t^T c_t + d_skip (.) x_t.
/// When hidden_out is non-null every h_t is stored there ([B, L, D, N]).
NamedTensor scan_kernel(const NamedTensor& delta_a, const NamedTensor& delta_b_x,
                        const NamedTensor& c_mat, const NamedTensor& x,
                        const NamedTensor& d_skip, NamedTensor* hidden_out);

/// Full selective scan: x [B, L, D] -> y [B, L, D]. Records hidden states and
/// deltas into trace when record is set.
NamedTensor selective_scan(const MambaLayer& layer, const NamedTensor& x, bool record,
                           ScanTrace* trace);

/// Whole block: in_proj -> split -> causal depthwise conv -> SiLU ->
/// selective scan -> SiLU gate -> out_proj. Input u is [B, L, d_model].
NamedTensor block_forward(const MambaLayer& layer, const NamedTensor& u, bool record,
                          ScanTrace* trace);

NamedTensor rms_norm(const NamedTensor& u, const NamedTensor& weight);

NamedTensor embed_tokens(const MambaModel& model,
                         const std::vector<std::vector<std::int64_t>>& tokens);

/// Residual step for layer i: u + block(rms_norm(u)).
NamedTensor layer_step(const MambaModel& model, std::int64_t layer_index, const NamedTensor& u,
                       bool record, ScanTrace* trace);

/// Final norm + output head; returns logits [B, L, vocab].
NamedTensor model_head(const MambaModel& model, const NamedTensor& u);

NamedTensor model_forward(const MambaModel& model,
                          const std::vector<std::vector<std::int64_t>>& tokens);

/// Checkpoint directory: manifest.json plus a raw little-endian float32 blob.
void save_checkpoint(const MambaModel& model, const std::string& dir);
MambaModel load_checkpoint(const std::string& dir);

/// Canonical tensor names and access by name (used by serialization and the
/// pruning pipeline). Layer tensors are "layers.{i}.{module}.{param}".
std::vector<std::string> checkpoint_tensor_names(const MambaConfig& config);
NamedTensor* tensor_by_name(MambaModel& model, const std::string& name);
const NamedTensor* tensor_by_name(const MambaModel& model, const std::string& name);
std::vector<std::int64_t> expected_tensor_shape(const MambaConfig& config,
                                                const std::string& name);

}  // namespace surgeon
