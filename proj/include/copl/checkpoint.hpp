#pragma once

#include <stdexcept>
#include <string>

#include "copl/model.hpp"

namespace copl {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointBadMagicError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointTruncatedError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointDimError : CheckpointError {
  using CheckpointError::CheckpointError;
};

/// COPL1 checkpoint: magic "COPL1", little-endian u32 dims
/// (prompt_len, token_dim, patch_dim, meta_hidden), then the learnable
/// groups as little-endian f64 arrays in declared field order:
/// prompts, u1, c1, u2, c2, w_a. Bit-exact round trip.
void save_checkpoint(const PromptLearner& model, const std::string& path);

/// Restores the learnable groups into a model initialized for `method`
/// with matching dims. joint_dim is not stored (it only shapes the frozen
/// encoders), so the caller supplies the full ModelDims.
PromptLearner load_checkpoint(const std::string& path, Method method,
                              const ModelDims& dims);

}  // namespace copl
