#include "copl/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace copl {

namespace {
constexpr std::uint64_t kSaltClassProjection = 0x11;
constexpr std::uint64_t kSaltClassNoise = 0x12;
}  // namespace

TextEncoderStub::TextEncoderStub(const ModelDims& dims, std::uint64_t seed) {
  dims_ = dims;
  const int in = (dims.prompt_len + 1) * dims.token_dim;
  const int hidden = dims.stub_hidden();
  Rng rng(seed);
  const Scalar s1 = 1.0 / std::sqrt(static_cast<Scalar>(in));
  const Scalar s2 = 1.0 / std::sqrt(static_cast<Scalar>(hidden));
  w1_ = sample_gaussian(rng, hidden, in, 0.0, s1);
  b1_ = sample_gaussian_vector(rng, hidden, 0.0, s1);
  w2_ = sample_gaussian(rng, dims.joint_dim, hidden, 0.0, s2);
  b2_ = sample_gaussian_vector(rng, dims.joint_dim, 0.0, s2);
}

TextEncoderStub TextEncoderStub::zeros(const ModelDims& dims) {
  TextEncoderStub stub;
  stub.dims_ = dims;
  const int in = (dims.prompt_len + 1) * dims.token_dim;
  const int hidden = dims.stub_hidden();
  stub.w1_ = Matrix::Zero(hidden, in);
  stub.b1_ = Vector::Zero(hidden);
  stub.w2_ = Matrix::Zero(dims.joint_dim, hidden);
  stub.b2_ = Vector::Zero(dims.joint_dim);
  return stub;
}

TextEncoderStub::Forward TextEncoderStub::forward(const Matrix& tokens) const {
  if (tokens.rows() != dims_.prompt_len + 1 || tokens.cols() != dims_.token_dim) {
    throw std::invalid_argument("prompt length mismatch");
  }
  // Row-major storage, so mapping the matrix flattens it row by row.
  Eigen::Map<const Vector> flat(tokens.data(), tokens.size());
  Forward fwd;
  fwd.hidden = (w1_ * flat + b1_).array().tanh().matrix();
  fwd.output = w2_ * fwd.hidden + b2_;
  return fwd;
}

Matrix TextEncoderStub::backward(const Forward& fwd, const Vector& upstream) const {
  if (upstream.size() != dims_.joint_dim) {
    throw std::invalid_argument("upstream size mismatch");
  }
  const Vector d_hidden = w2_.transpose() * upstream;
  const Vector d_pre =
      (d_hidden.array() * (1.0 - fwd.hidden.array().square())).matrix();
  const Vector d_flat = w1_.transpose() * d_pre;
  Matrix grad(dims_.prompt_len + 1, dims_.token_dim);
  Eigen::Map<Vector>(grad.data(), grad.size()) = d_flat;
  return grad;
}

GlobalProjector::GlobalProjector(const ModelDims& dims, std::uint64_t seed) {
  Rng rng(seed);
  const Scalar s = 1.0 / std::sqrt(static_cast<Scalar>(dims.patch_dim));
  wg_ = sample_gaussian(rng, dims.joint_dim, dims.patch_dim, 0.0, s);
}

GlobalProjector GlobalProjector::identity(int dim) {
  GlobalProjector proj;
  proj.wg_ = Matrix::Identity(dim, dim);
  return proj;
}

Vector GlobalProjector::encode(const Matrix& patches) const {
  if (patches.rows() == 0) throw std::invalid_argument("no patches");
  if (patches.cols() != wg_.cols()) {
    throw std::invalid_argument("patch dimension mismatch");
  }
  const Vector mean = patches.colwise().mean().transpose();
  return wg_ * mean;
}

ClassEmbeddingTable::ClassEmbeddingTable(const std::vector<Vector>& prototypes,
                                         const ModelDims& dims,
                                         std::uint64_t seed) {
  if (prototypes.empty()) throw std::invalid_argument("no prototypes");
  Rng proj_rng(derive_seed(seed, kSaltClassProjection));
  const Scalar s = 1.0 / std::sqrt(static_cast<Scalar>(dims.patch_dim));
  const Matrix projection =
      sample_gaussian(proj_rng, dims.token_dim, dims.patch_dim, 0.0, s);

  embeddings_.resize(static_cast<Index>(prototypes.size()), dims.token_dim);
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    if (prototypes[c].size() != dims.patch_dim) {
      throw std::invalid_argument("prototype dimension mismatch");
    }
    const std::uint64_t noise_seed =
        derive_seed(derive_seed(seed, kSaltClassNoise), c);
    embeddings_.row(static_cast<Index>(c)) =
        derive_embedding(projection, prototypes[c], noise_seed).transpose();
  }

  for (Index i = 0; i < embeddings_.rows(); ++i) {
    for (Index j = i + 1; j < embeddings_.rows(); ++j) {
      if ((embeddings_.row(i) - embeddings_.row(j)).norm() == 0.0 &&
          (prototypes[i] - prototypes[j]).norm() > 0.0) {
        throw std::runtime_error("class embeddings collapsed");
      }
    }
  }
}

Vector ClassEmbeddingTable::derive_embedding(const Matrix& projection,
                                             const Vector& prototype,
                                             std::uint64_t noise_seed) {
  Rng rng(noise_seed);
  const Vector noise =
      sample_gaussian_vector(rng, projection.rows(), 0.0, kNoiseSigma);
  return projection * prototype + noise;
}

Vector ClassEmbeddingTable::embedding(int class_id) const {
  if (class_id < 0 || class_id >= num_classes()) {
    throw std::out_of_range("class id out of range");
  }
  return embeddings_.row(class_id).transpose();
}

}  // namespace copl
