#pragma once

#include <vector>

#include "copl/numerics.hpp"

namespace copl {

/// Temperature plus the label space active for one evaluation. Protocols
/// set class_ids to the seen, unseen, or joint id set; the posterior is
/// always normalized over exactly these classes.
struct ClassifierConfig {
  Scalar gamma = 0.01;
  std::vector<int> class_ids;
};

struct Posterior {
  Vector probs;   // on the simplex
  Vector logits;  // sim / gamma, same order as class_ids
};

/// Prompt sequence for one class: the M conditioned prompt rows followed
/// by the class token.
Matrix assemble_prompt(const Matrix& conditioned, const Vector& class_embedding);

/// Temperature-scaled cosine posterior. text_features holds one row per
/// active class, in class_ids order.
Posterior predict(const Vector& image_feature, const Matrix& text_features,
                  const ClassifierConfig& cfg);

/// Index of the winning class within the posterior; ties break toward the
/// lowest position (class_ids are kept ascending by the protocols, so this
/// is the lowest class index).
Index posterior_argmax(const Posterior& post);

struct CrossEntropyResult {
  Scalar loss = 0.0;
  bool clamped = false;  // probability hit the 1e-300 floor
};

/// loss = -log(probs[label_index]); label_index addresses the active
/// label space, not the global class id.
CrossEntropyResult cross_entropy(const Posterior& post, Index label_index);

/// Gradient of the loss with respect to the logits: probs - onehot.
Vector cross_entropy_backward(const Posterior& post, Index label_index);

/// Gradient of the loss with respect to one class's text feature, given
/// d loss / d logit for that class. Chain through sim/gamma and the
/// cosine similarity.
Vector text_feature_gradient(const Vector& image_feature,
                             const Vector& text_feature, Scalar d_logit,
                             Scalar gamma);

}  // namespace copl
