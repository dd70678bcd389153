#include "copl/numerics.hpp"

namespace copl {

Matrix sample_gaussian(Rng& rng, Index rows, Index cols, Scalar mean, Scalar stddev) {
  if (stddev < 0.0) throw std::invalid_argument("negative stddev");
  Matrix out(rows, cols);
  for (Index i = 0; i < out.size(); ++i) {
    out.data()[i] = mean + stddev * rng.gaussian();
  }
  return out;
}

Vector sample_gaussian_vector(Rng& rng, Index size, Scalar mean, Scalar stddev) {
  if (stddev < 0.0) throw std::invalid_argument("negative stddev");
  Vector out(size);
  for (Index i = 0; i < size; ++i) {
    out[i] = mean + stddev * rng.gaussian();
  }
  return out;
}

}  // namespace copl
