#include "copl/classifier.hpp"

#include <cmath>
#include <stdexcept>

namespace copl {

Matrix assemble_prompt(const Matrix& conditioned, const Vector& class_embedding) {
  if (conditioned.cols() != class_embedding.size()) {
    throw std::invalid_argument("token dimension mismatch");
  }
  Matrix tokens(conditioned.rows() + 1, conditioned.cols());
  tokens.topRows(conditioned.rows()) = conditioned;
  tokens.row(conditioned.rows()) = class_embedding.transpose();
  return tokens;
}

Posterior predict(const Vector& image_feature, const Matrix& text_features,
                  const ClassifierConfig& cfg) {
  if (cfg.gamma <= 0.0) throw std::invalid_argument("gamma must be positive");
  if (text_features.rows() == 0) throw std::invalid_argument("no classes");
  if (image_feature.norm() == 0.0) {
    throw std::invalid_argument("degenerate feature");
  }
  Posterior post;
  post.logits.resize(text_features.rows());
  for (Index i = 0; i < text_features.rows(); ++i) {
    if (text_features.row(i).norm() == 0.0) {
      throw std::invalid_argument("degenerate feature");
    }
    post.logits[i] =
        cosine_sim(image_feature, text_features.row(i).transpose()) / cfg.gamma;
  }
  post.probs = softmax(post.logits);
  return post;
}

Index posterior_argmax(const Posterior& post) {
  Index best = 0;
  for (Index i = 1; i < post.probs.size(); ++i) {
    if (post.probs[i] > post.probs[best]) best = i;
  }
  return best;
}

CrossEntropyResult cross_entropy(const Posterior& post, Index label_index) {
  if (label_index < 0 || label_index >= post.probs.size()) {
    throw std::out_of_range("label index out of range");
  }
  CrossEntropyResult result;
  Scalar p = post.probs[label_index];
  if (p < 1e-300) {
    p = 1e-300;
    result.clamped = true;
  }
  result.loss = -std::log(p);
  return result;
}

Vector cross_entropy_backward(const Posterior& post, Index label_index) {
  if (label_index < 0 || label_index >= post.probs.size()) {
    throw std::out_of_range("label index out of range");
  }
  Vector grad = post.probs;
  grad[label_index] -= 1.0;
  return grad;
}

Vector text_feature_gradient(const Vector& image_feature,
                             const Vector& text_feature, Scalar d_logit,
                             Scalar gamma) {
  const Scalar norm_img = image_feature.norm();
  const Scalar norm_txt = text_feature.norm();
  if (norm_img == 0.0 || norm_txt == 0.0) {
    throw std::invalid_argument("degenerate feature");
  }
  const Scalar cos = image_feature.dot(text_feature) / (norm_img * norm_txt);
  // d cos / d text = img_hat / |text| - cos * text / |text|^2
  const Vector d_cos = image_feature / (norm_img * norm_txt) -
                       (cos / (norm_txt * norm_txt)) * text_feature;
  return (d_logit / gamma) * d_cos;
}

}  // namespace copl
