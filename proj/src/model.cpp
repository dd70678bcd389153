#include "copl/model.hpp"

#include <stdexcept>

namespace copl {

namespace {
constexpr Scalar kPromptInitStd = 0.02;
constexpr std::uint64_t kSaltPrompts = 0x21;
constexpr std::uint64_t kSaltMetaNet = 0x22;
constexpr std::uint64_t kSaltAlign = 0x23;

Matrix replicate_mean_patch(const Matrix& patches) {
  const Vector mean = patches.colwise().mean().transpose();
  Matrix out(patches.rows(), patches.cols());
  out.rowwise() = mean.transpose();
  return out;
}
}  // namespace

const char* method_name(Method method) {
  switch (method) {
    case Method::kCoop: return "coop";
    case Method::kCocoop: return "cocoop";
    case Method::kCopl: return "copl";
    case Method::kCoplGlobal: return "copl_global";
  }
  throw std::logic_error("unknown method");
}

Method method_from_name(const std::string& name) {
  if (name == "coop") return Method::kCoop;
  if (name == "cocoop") return Method::kCocoop;
  if (name == "copl") return Method::kCopl;
  if (name == "copl_global") return Method::kCoplGlobal;
  throw std::invalid_argument("unknown method: " + name);
}

PromptLearner PromptLearner::init(Method method, const ModelDims& dims,
                                  std::uint64_t seed) {
  PromptLearner model;
  model.method = method;
  model.dims = dims;
  Rng prompt_rng(derive_seed(seed, kSaltPrompts));
  model.prompts = sample_gaussian(prompt_rng, dims.prompt_len, dims.token_dim,
                                  0.0, kPromptInitStd);
  model.net = MetaNet::init(dims, derive_seed(seed, kSaltMetaNet));
  Rng align_rng(derive_seed(seed, kSaltAlign));
  model.w_a =
      sample_gaussian_vector(align_rng, 2 * dims.token_dim, 0.0, kPromptInitStd);
  return model;
}

ParamGrads ParamGrads::zeros_like(const PromptLearner& model) {
  ParamGrads grads;
  grads.prompts = Matrix::Zero(model.prompts.rows(), model.prompts.cols());
  grads.net = MetaNet::zeros_like(model.net);
  grads.w_a = Vector::Zero(model.w_a.size());
  return grads;
}

void ParamGrads::accumulate(const ParamGrads& other) {
  prompts += other.prompts;
  net.u1 += other.net.u1;
  net.c1 += other.net.c1;
  net.u2 += other.net.u2;
  net.c2 += other.net.c2;
  w_a += other.w_a;
}

void ParamGrads::scale(Scalar factor) {
  prompts *= factor;
  net.u1 *= factor;
  net.c1 *= factor;
  net.u2 *= factor;
  net.c2 *= factor;
  w_a *= factor;
}

bool ParamGrads::all_finite() const {
  return prompts.allFinite() && net.u1.allFinite() && net.c1.allFinite() &&
         net.u2.allFinite() && net.c2.allFinite() && w_a.allFinite();
}

SampleForward forward_sample(const PromptLearner& model,
                             const TextEncoderStub& text,
                             const GlobalProjector& proj,
                             const ClassEmbeddingTable& table,
                             const ClassifierConfig& cfg,
                             const Matrix& patches) {
  if (cfg.class_ids.empty()) throw std::invalid_argument("empty label space");
  SampleForward fwd;
  fwd.image_feature = proj.encode(patches);

  switch (model.method) {
    case Method::kCoop:
      fwd.effective_patches = patches;
      fwd.conditioned = condition_coop(model.prompts);
      break;
    case Method::kCocoop:
      fwd.effective_patches = patches;
      fwd.cocoop_input = patches.colwise().mean().transpose();
      fwd.cocoop = condition_cocoop(fwd.cocoop_input, model.prompts, model.net);
      fwd.conditioned = fwd.cocoop.conditioned;
      break;
    case Method::kCopl:
      fwd.effective_patches = patches;
      fwd.cond = condition_copl(fwd.effective_patches, model.prompts,
                                model.net, model.w_a);
      fwd.conditioned = fwd.cond.conditioned;
      break;
    case Method::kCoplGlobal:
      // Locality ablation: the attention machinery runs unchanged over P
      // copies of the mean patch feature.
      fwd.effective_patches = replicate_mean_patch(patches);
      fwd.cond = condition_copl(fwd.effective_patches, model.prompts,
                                model.net, model.w_a);
      fwd.conditioned = fwd.cond.conditioned;
      break;
  }

  const Index k = static_cast<Index>(cfg.class_ids.size());
  fwd.text.resize(cfg.class_ids.size());
  fwd.text_features.resize(k, model.dims.joint_dim);
  for (Index i = 0; i < k; ++i) {
    const Matrix tokens =
        assemble_prompt(fwd.conditioned, table.embedding(cfg.class_ids[i]));
    fwd.text[i] = text.forward(tokens);
    fwd.text_features.row(i) = fwd.text[i].output.transpose();
  }

  fwd.posterior = predict(fwd.image_feature, fwd.text_features, cfg);
  fwd.complete = true;
  return fwd;
}

ParamGrads full_backward(const PromptLearner& model,
                         const TextEncoderStub& text,
                         const ClassifierConfig& cfg, const SampleForward& fwd,
                         Index label_index) {
  if (!fwd.complete) throw std::runtime_error("forward not run");
  const Vector d_logits = cross_entropy_backward(fwd.posterior, label_index);

  // Accumulate the text-path gradient over every active class; the class
  // token row is frozen and discarded.
  Matrix d_conditioned =
      Matrix::Zero(model.prompts.rows(), model.prompts.cols());
  for (Index i = 0; i < d_logits.size(); ++i) {
    const Vector d_text = text_feature_gradient(
        fwd.image_feature, fwd.text_features.row(i).transpose(), d_logits[i],
        cfg.gamma);
    const Matrix d_tokens = text.backward(fwd.text[i], d_text);
    d_conditioned += d_tokens.topRows(model.prompts.rows());
  }

  ParamGrads grads = ParamGrads::zeros_like(model);
  switch (model.method) {
    case Method::kCoop:
      grads.prompts = d_conditioned;
      break;
    case Method::kCocoop: {
      CocoopGrads g = condition_cocoop_backward(
          fwd.cocoop_input, model.prompts, model.net, fwd.cocoop, d_conditioned);
      grads.prompts = std::move(g.prompts);
      grads.net = std::move(g.net);
      break;
    }
    case Method::kCopl:
    case Method::kCoplGlobal: {
      ConditionerGrads g = condition_copl_backward(
          fwd.effective_patches, model.prompts, model.net, model.w_a, fwd.cond,
          d_conditioned);
      grads.prompts = std::move(g.prompts);
      grads.net = std::move(g.net);
      grads.w_a = std::move(g.w_a);
      break;
    }
  }
  return grads;
}

Scalar sample_loss(const PromptLearner& model, const TextEncoderStub& text,
                   const GlobalProjector& proj,
                   const ClassEmbeddingTable& table,
                   const ClassifierConfig& cfg, const Matrix& patches,
                   Index label_index) {
  const SampleForward fwd =
      forward_sample(model, text, proj, table, cfg, patches);
  return cross_entropy(fwd.posterior, label_index).loss;
}

}  // namespace copl
