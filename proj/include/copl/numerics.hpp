#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace copl {

// All arithmetic is 64-bit. Matrices are row-major so their in-memory
// layout matches the binary file formats (CPFC1 / COPL1) byte for byte.
using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Index = Eigen::Index;

/// Deterministic PRNG: a SplitMix64 stream feeding a Box-Muller Gaussian
/// transform. The same seed yields the same sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw. Box-Muller produces two values per transform;
  /// the spare is cached so consecutive draws stay cheap and reproducible.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * kPi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Unbiased uniform integer in [0, n). Rejection sampling, deterministic.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("below: n must be positive");
    const std::uint64_t rem = std::uint64_t(-1) % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x > std::uint64_t(-1) - rem - 1 && rem != n - 1);
    return x % n;
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives an independent stream seed from a base seed and a salt. Used
/// wherever one experiment seed has to drive several decoupled streams
/// (dataset, shots, init, training order) without them aliasing.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  Rng mixer(base ^ (0x9E3779B97F4A7C15ull * (salt + 1)));
  return mixer.next_u64();
}

/// Numerically safe softmax (max subtraction before exponentiation).
template <typename Derived>
Vector softmax(const Eigen::MatrixBase<Derived>& x) {
  if (x.size() == 0) throw std::invalid_argument("empty vector");
  Vector v = x.template cast<Scalar>();
  if (!v.allFinite()) throw std::invalid_argument("non-finite input");
  const Scalar shift = v.maxCoeff();
  Vector e = (v.array() - shift).exp().matrix();
  return e / e.sum();
}

/// Cosine similarity, clamped to [-1, 1] against rounding.
template <typename DerivedA, typename DerivedB>
Scalar cosine_sim(const Eigen::MatrixBase<DerivedA>& a,
                  const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("length mismatch");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("degenerate vector");
  const Scalar c = a.reshaped().dot(b.reshaped()) / (na * nb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

/// Gaussian tensor draw, filled in row-major order from the stream.
/// stddev = 0 degenerates to a constant tensor.
Matrix sample_gaussian(Rng& rng, Index rows, Index cols, Scalar mean, Scalar stddev);
Vector sample_gaussian_vector(Rng& rng, Index size, Scalar mean, Scalar stddev);

}  // namespace copl
