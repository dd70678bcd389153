#pragma once

#include <cstdint>
#include <vector>

#include "copl/dims.hpp"
#include "copl/numerics.hpp"

namespace copl {

/// Frozen stand-in for the text encoder: a seeded two-layer tanh MLP over
/// the flattened prompt sequence. Gradients flow through it, but its
/// weights are never updated.
class TextEncoderStub {
 public:
  TextEncoderStub(const ModelDims& dims, std::uint64_t seed);

  /// Zero-weight instance (output is b2 = 0 for any input). Test hook.
  static TextEncoderStub zeros(const ModelDims& dims);

  struct Forward {
    Vector output;  // g(t), joint_dim
    Vector hidden;  // tanh activations, cached for the backward pass
  };

  /// tokens must be (prompt_len + 1) x token_dim: the conditioned prompts
  /// followed by one class token.
  Forward forward(const Matrix& tokens) const;

  /// Gradient of (upstream . output) with respect to the token matrix.
  Matrix backward(const Forward& fwd, const Vector& upstream) const;

  const ModelDims& dims() const { return dims_; }
  const Matrix& w1() const { return w1_; }
  const Vector& b1() const { return b1_; }
  const Matrix& w2() const { return w2_; }
  const Vector& b2() const { return b2_; }

 private:
  TextEncoderStub() = default;

  ModelDims dims_;
  Matrix w1_;  // hidden x (M+1)*d
  Vector b1_;
  Matrix w2_;  // joint x hidden
  Vector b2_;
};

/// Frozen seeded projection from mean patch space to the joint space; the
/// stub's notion of a global image feature.
class GlobalProjector {
 public:
  GlobalProjector(const ModelDims& dims, std::uint64_t seed);

  static GlobalProjector identity(int dim);

  /// x = Wg * (mean over patch rows). patches is P x patch_dim, P >= 1.
  Vector encode(const Matrix& patches) const;

  const Matrix& weights() const { return wg_; }

 private:
  GlobalProjector() = default;
  Matrix wg_;  // joint_dim x patch_dim
};

/// Frozen per-class tokens: a seeded linear projection of each class
/// prototype plus seeded Gaussian noise, so the text side carries
/// class-relevant signal without being a pure copy of the prototype.
class ClassEmbeddingTable {
 public:
  static constexpr Scalar kNoiseSigma = 0.1;

  /// prototypes[i] is the patch-space prototype of class id i.
  ClassEmbeddingTable(const std::vector<Vector>& prototypes,
                      const ModelDims& dims, std::uint64_t seed);

  /// The derivation as a pure function, exposed so determinism is testable
  /// in isolation: projection * prototype + kNoiseSigma * N(0, I).
  static Vector derive_embedding(const Matrix& projection,
                                 const Vector& prototype,
                                 std::uint64_t noise_seed);

  Vector embedding(int class_id) const;
  int num_classes() const { return static_cast<int>(embeddings_.rows()); }

 private:
  Matrix embeddings_;  // K x token_dim
};

}  // namespace copl
