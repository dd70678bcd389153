#include "copl/conditioners.hpp"

#include <cmath>
#include <stdexcept>

namespace copl {

MetaNet MetaNet::init(const ModelDims& dims, std::uint64_t seed) {
  Rng rng(seed);
  const int hidden = dims.meta_hidden();
  const Scalar s1 = 1.0 / std::sqrt(static_cast<Scalar>(dims.patch_dim));
  const Scalar s2 = 1.0 / std::sqrt(static_cast<Scalar>(hidden));
  MetaNet net;
  net.u1 = sample_gaussian(rng, hidden, dims.patch_dim, 0.0, s1);
  net.c1 = Vector::Zero(hidden);
  net.u2 = sample_gaussian(rng, dims.token_dim, hidden, 0.0, s2);
  net.c2 = Vector::Zero(dims.token_dim);
  return net;
}

MetaNet MetaNet::zeros(const ModelDims& dims) {
  const int hidden = dims.meta_hidden();
  MetaNet net;
  net.u1 = Matrix::Zero(hidden, dims.patch_dim);
  net.c1 = Vector::Zero(hidden);
  net.u2 = Matrix::Zero(dims.token_dim, hidden);
  net.c2 = Vector::Zero(dims.token_dim);
  return net;
}

MetaNet MetaNet::zeros_like(const MetaNet& other) {
  MetaNet net;
  net.u1 = Matrix::Zero(other.u1.rows(), other.u1.cols());
  net.c1 = Vector::Zero(other.c1.size());
  net.u2 = Matrix::Zero(other.u2.rows(), other.u2.cols());
  net.c2 = Vector::Zero(other.c2.size());
  return net;
}

MetaForward meta_transform(const MetaNet& net, const Matrix& patches) {
  if (patches.rows() < 1) throw std::invalid_argument("no patches");
  if (patches.cols() != net.u1.cols()) {
    throw std::invalid_argument("meta net input dimension mismatch");
  }
  MetaForward fwd;
  fwd.pre = (patches * net.u1.transpose()).rowwise() + net.c1.transpose();
  fwd.relu = fwd.pre.cwiseMax(0.0);
  fwd.tokens = (fwd.relu * net.u2.transpose()).rowwise() + net.c2.transpose();
  return fwd;
}

MetaBackward meta_transform_backward(const MetaNet& net, const Matrix& patches,
                                     const MetaForward& fwd,
                                     const Matrix& upstream) {
  if (upstream.rows() != patches.rows() || upstream.cols() != net.u2.rows()) {
    throw std::invalid_argument("meta net upstream shape mismatch");
  }
  const Matrix d_relu = upstream * net.u2;
  const Matrix d_pre =
      (d_relu.array() * (fwd.pre.array() > 0.0).cast<Scalar>()).matrix();

  MetaBackward back;
  back.net.u2 = upstream.transpose() * fwd.relu;
  back.net.c2 = upstream.colwise().sum().transpose();
  back.net.u1 = d_pre.transpose() * patches;
  back.net.c1 = d_pre.colwise().sum().transpose();
  back.patches = d_pre * net.u1;
  return back;
}

Scalar score(const Vector& patch_token, const Vector& prompt_token,
             const Vector& w_a) {
  const Index d = patch_token.size();
  if (prompt_token.size() != d) throw std::invalid_argument("length mismatch");
  if (w_a.size() != 2 * d) throw std::invalid_argument("alignment weight length mismatch");
  return std::tanh(w_a.head(d).dot(patch_token) + w_a.tail(d).dot(prompt_token));
}

Vector align(const Vector& patch_token, const Matrix& prompts,
             const Vector& w_a) {
  Vector scores(prompts.rows());
  for (Index i = 0; i < prompts.rows(); ++i) {
    scores[i] = score(patch_token, prompts.row(i).transpose(), w_a);
  }
  return softmax(scores);
}

Vector context(const Vector& alignment, const Matrix& prompts) {
  if (alignment.size() != prompts.rows()) {
    throw std::invalid_argument("length mismatch");
  }
  return prompts.transpose() * alignment;
}

ConditionerOutput condition_copl(const Matrix& patches, const Matrix& prompts,
                                 const MetaNet& net, const Vector& w_a) {
  const Index d = prompts.cols();
  if (w_a.size() != 2 * d) throw std::invalid_argument("alignment weight length mismatch");
  MetaForward meta = meta_transform(net, patches);
  if (meta.tokens.cols() != d) {
    throw std::invalid_argument("token dimension mismatch");
  }

  ConditionerOutput out;
  out.meta_pre = std::move(meta.pre);
  out.meta_relu = std::move(meta.relu);
  out.meta_tokens = std::move(meta.tokens);

  // score(s_p, v_i) = tanh(w_s . s_p + w_v . v_i) separates into a per-patch
  // and a per-prompt term.
  const Vector patch_part = out.meta_tokens * w_a.head(d);
  const Vector prompt_part = prompts * w_a.tail(d);
  out.scores =
      ((patch_part.rowwise().replicate(prompts.rows())).rowwise() +
       prompt_part.transpose())
          .array()
          .tanh()
          .matrix();

  out.attention.resize(patches.rows(), prompts.rows());
  for (Index p = 0; p < patches.rows(); ++p) {
    out.attention.row(p) = softmax(out.scores.row(p).transpose()).transpose();
  }
  out.context = out.attention * prompts;
  const Vector offset = out.context.colwise().sum().transpose();
  out.conditioned = prompts.rowwise() + offset.transpose();
  return out;
}

ConditionerGrads condition_copl_backward(const Matrix& patches,
                                         const Matrix& prompts,
                                         const MetaNet& net, const Vector& w_a,
                                         const ConditionerOutput& fwd,
                                         const Matrix& upstream) {
  if (upstream.rows() != prompts.rows() || upstream.cols() != prompts.cols()) {
    throw std::invalid_argument("upstream shape mismatch");
  }
  const Index num_patches = patches.rows();
  const Index d = prompts.cols();

  ConditionerGrads grads;
  // Residual path: conditioned_m = v_m + offset.
  grads.prompts = upstream;

  // The offset is shared by every prompt row, so its gradient is the
  // column sum of the upstream matrix; it reaches every context vector.
  const Vector d_offset = upstream.colwise().sum().transpose();

  // context = attention * prompts, with every context row receiving d_offset.
  const Vector attention_mass = fwd.attention.colwise().sum().transpose();
  grads.prompts.noalias() += attention_mass * d_offset.transpose();
  // d attention, identical across patch rows before the softmax Jacobian.
  const Vector d_attention_row = prompts * d_offset;

  // Softmax rows, then tanh.
  Matrix d_pre_score(num_patches, prompts.rows());
  for (Index p = 0; p < num_patches; ++p) {
    const Vector a = fwd.attention.row(p).transpose();
    const Scalar dot = a.dot(d_attention_row);
    const Vector d_score =
        (a.array() * (d_attention_row.array() - dot)).matrix();
    const Vector d_pre =
        (d_score.array() *
         (1.0 - fwd.scores.row(p).transpose().array().square()))
            .matrix();
    d_pre_score.row(p) = d_pre.transpose();
  }

  // pre_score(p, i) = w_s . s_p + w_v . v_i.
  const Vector patch_sums = d_pre_score.rowwise().sum();   // length P
  const Vector prompt_sums = d_pre_score.colwise().sum().transpose();  // length M
  grads.w_a.resize(2 * d);
  grads.w_a.head(d) = fwd.meta_tokens.transpose() * patch_sums;
  grads.w_a.tail(d) = prompts.transpose() * prompt_sums;
  grads.prompts.noalias() += prompt_sums * w_a.tail(d).transpose();

  const Matrix d_meta_tokens = patch_sums * w_a.head(d).transpose();
  MetaForward meta_cache;
  meta_cache.pre = fwd.meta_pre;
  meta_cache.relu = fwd.meta_relu;
  meta_cache.tokens = fwd.meta_tokens;
  MetaBackward meta = meta_transform_backward(net, patches, meta_cache, d_meta_tokens);
  grads.net = std::move(meta.net);
  grads.patches = std::move(meta.patches);
  return grads;
}

CocoopOutput condition_cocoop(const Vector& global_feature,
                              const Matrix& prompts, const MetaNet& net) {
  CocoopOutput out;
  out.meta = meta_transform(net, global_feature.transpose());
  if (out.meta.tokens.cols() != prompts.cols()) {
    throw std::invalid_argument("token dimension mismatch");
  }
  out.conditioned = prompts.rowwise() + out.meta.tokens.row(0);
  return out;
}

CocoopGrads condition_cocoop_backward(const Vector& global_feature,
                                      const Matrix& prompts,
                                      const MetaNet& net,
                                      const CocoopOutput& fwd,
                                      const Matrix& upstream) {
  if (upstream.rows() != prompts.rows() || upstream.cols() != prompts.cols()) {
    throw std::invalid_argument("upstream shape mismatch");
  }
  CocoopGrads grads;
  grads.prompts = upstream;
  const Matrix d_token = upstream.colwise().sum();  // 1 x token_dim
  MetaBackward meta = meta_transform_backward(net, global_feature.transpose(),
                                              fwd.meta, d_token);
  grads.net = std::move(meta.net);
  grads.input = meta.patches.row(0).transpose();
  return grads;
}

Matrix condition_coop(const Matrix& prompts) { return prompts; }

}  // namespace copl
