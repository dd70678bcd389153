#pragma once

#include <cstdint>

#include "copl/dims.hpp"
#include "copl/numerics.hpp"

namespace copl {

/// Learnable two-layer meta network (linear, ReLU, linear) mapping a
/// patch-space feature to a token-space conditional token.
struct MetaNet {
  Matrix u1;  // meta_hidden x patch_dim
  Vector c1;  // meta_hidden
  Matrix u2;  // token_dim x meta_hidden
  Vector c2;  // token_dim

  static MetaNet init(const ModelDims& dims, std::uint64_t seed);
  static MetaNet zeros(const ModelDims& dims);
  static MetaNet zeros_like(const MetaNet& other);
};

struct MetaForward {
  Matrix tokens;  // P x token_dim, one conditional token per input row
  Matrix pre;     // P x meta_hidden, pre-activations
  Matrix relu;    // P x meta_hidden
};

struct MetaBackward {
  MetaNet net;     // gradients for u1, c1, u2, c2
  Matrix patches;  // gradient for the input rows
};

/// Applies the meta net to every row of `patches` (P x patch_dim).
MetaForward meta_transform(const MetaNet& net, const Matrix& patches);
MetaBackward meta_transform_backward(const MetaNet& net, const Matrix& patches,
                                     const MetaForward& fwd,
                                     const Matrix& upstream);

/// Content function: tanh(w_a . [s_p; v_i]), a scalar affinity in (-1, 1).
/// w_a has length 2 * token_dim.
Scalar score(const Vector& patch_token, const Vector& prompt_token,
             const Vector& w_a);

/// Alignment of one patch token against every prompt row: softmax over the
/// per-prompt scores. Returns a length-M probability vector.
Vector align(const Vector& patch_token, const Matrix& prompts,
             const Vector& w_a);

/// Attention-weighted average of the prompt rows: c_p = sum_i a_pi v_i.
Vector context(const Vector& alignment, const Matrix& prompts);

/// Forward results plus every intermediate the backward pass needs.
struct ConditionerOutput {
  Matrix conditioned;  // M x token_dim, v_m + sum_p c_p
  Matrix attention;    // P x M, rows on the simplex
  Matrix context;      // P x token_dim, per-patch context vectors
  Matrix meta_tokens;  // P x token_dim
  Matrix meta_pre;     // P x meta_hidden
  Matrix meta_relu;    // P x meta_hidden
  Matrix scores;       // P x M, tanh values
};

struct ConditionerGrads {
  Matrix prompts;
  MetaNet net;
  Vector w_a;
  Matrix patches;
};

/// Per-patch conditioning: meta tokens, per-patch alignment over the
/// prompts, context vectors, and one shared additive offset sum_p c_p
/// applied to every prompt row.
ConditionerOutput condition_copl(const Matrix& patches, const Matrix& prompts,
                                 const MetaNet& net, const Vector& w_a);

/// Exact reverse pass. Prompt gradients accumulate along all three paths:
/// the residual term, the context weighting, and the score function.
ConditionerGrads condition_copl_backward(const Matrix& patches,
                                         const Matrix& prompts,
                                         const MetaNet& net, const Vector& w_a,
                                         const ConditionerOutput& fwd,
                                         const Matrix& upstream);

struct CocoopOutput {
  Matrix conditioned;  // M x token_dim, v_m + h(x)
  MetaForward meta;    // single-row meta forward cache
};

struct CocoopGrads {
  Matrix prompts;
  MetaNet net;
  Vector input;  // gradient for the global feature
};

/// Global conditioning: every prompt row shifted by the meta net applied
/// to one global feature vector.
CocoopOutput condition_cocoop(const Vector& global_feature,
                              const Matrix& prompts, const MetaNet& net);
CocoopGrads condition_cocoop_backward(const Vector& global_feature,
                                      const Matrix& prompts,
                                      const MetaNet& net,
                                      const CocoopOutput& fwd,
                                      const Matrix& upstream);

/// Static prompts: the identity map on the prompt matrix.
Matrix condition_coop(const Matrix& prompts);

}  // namespace copl
