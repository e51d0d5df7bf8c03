#pragma once

#include <cstdint>

#include "surgeon/model.hpp"

namespace surgeon {

/// 2 layers, d_model 32, d_inner 64, d_state 8, d_conv 4, dt_rank 2, vocab 64.
MambaConfig tiny_config();

/// Random-init model with stable scan dynamics (delta roughly in [0.05, 0.3],
/// decay rates spread over an order of magnitude).
MambaModel make_random_model(const MambaConfig& config, std::uint64_t seed);

/// Random init followed by a ridge least-squares fit of the output head to
/// next-token one-hot targets on a synthetic corpus, so perplexity deltas
/// under pruning point in a meaningful direction.
MambaModel make_trained_fixture(const MambaConfig& config, std::uint64_t seed,
                                std::int64_t corpus_b, std::int64_t corpus_l);

}  // namespace surgeon
