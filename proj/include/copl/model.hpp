#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "copl/classifier.hpp"
#include "copl/conditioners.hpp"
#include "copl/encoders.hpp"

namespace copl {

enum class Method { kCoop, kCocoop, kCopl, kCoplGlobal };

const char* method_name(Method method);
Method method_from_name(const std::string& name);

/// The learnable state: prompt tokens plus, depending on the method, the
/// meta net and the alignment weights. Every method carries all three
/// groups so checkpoints share one layout; unused groups simply never
/// receive gradient.
struct PromptLearner {
  Method method = Method::kCopl;
  ModelDims dims;
  Matrix prompts;  // M x token_dim
  MetaNet net;
  Vector w_a;  // 2 * token_dim

  static PromptLearner init(Method method, const ModelDims& dims,
                            std::uint64_t seed);
};

struct ParamGrads {
  Matrix prompts;
  MetaNet net;
  Vector w_a;

  static ParamGrads zeros_like(const PromptLearner& model);
  void accumulate(const ParamGrads& other);
  void scale(Scalar factor);
  bool all_finite() const;
};

/// Everything one forward pass produces, kept for the exact backward.
struct SampleForward {
  bool complete = false;
  Matrix effective_patches;  // what conditioning consumed
  Vector image_feature;
  Matrix conditioned;
  ConditionerOutput cond;   // copl / copl_global
  CocoopOutput cocoop;      // cocoop
  Vector cocoop_input;      // cocoop, the global meta-net input
  std::vector<TextEncoderStub::Forward> text;  // per active class
  Matrix text_features;                        // K x joint_dim
  Posterior posterior;
};

/// Runs conditioning, per-class prompt assembly and text encoding, and the
/// cosine posterior for one sample. class token lookup follows
/// cfg.class_ids order.
SampleForward forward_sample(const PromptLearner& model,
                             const TextEncoderStub& text,
                             const GlobalProjector& proj,
                             const ClassEmbeddingTable& table,
                             const ClassifierConfig& cfg,
                             const Matrix& patches);

/// Chains cross-entropy, the cosine head, the text encoder and the
/// conditioner into gradients for the learnable groups. label_index
/// addresses cfg.class_ids. Requires a completed forward cache.
ParamGrads full_backward(const PromptLearner& model,
                         const TextEncoderStub& text,
                         const ClassifierConfig& cfg, const SampleForward& fwd,
                         Index label_index);

/// Convenience wrapper: forward + cross-entropy loss for one labelled
/// sample. Used by the trainer and the finite-difference suites.
Scalar sample_loss(const PromptLearner& model, const TextEncoderStub& text,
                   const GlobalProjector& proj,
                   const ClassEmbeddingTable& table,
                   const ClassifierConfig& cfg, const Matrix& patches,
                   Index label_index);

}  // namespace copl
