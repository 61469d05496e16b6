#ifndef UACESD_LINALG_HPP
#define UACESD_LINALG_HPP

#include <cstdint>

#include "uacesd/types.hpp"

namespace uacesd {

/// Full SVD A = U * diag_rect(S) * V^H with U (m×m) and V (k×k) unitary,
/// S nonnegative and descending.
struct SvdResult {
  ComplexMatrix U;
  RealVector S;
  ComplexMatrix V;
};

SvdResult svd(const ComplexMatrix& A);

/// Eigendecomposition of a Hermitian PSD matrix, W ≈ C * diag(D) * C^H.
/// D is ascending and clamped at zero.
struct EigResult {
  ComplexMatrix C;
  RealVector D;
};

EigResult eig_hermitian(const ComplexMatrix& W);

/// Elementwise d^{-1/2} with small eigenvalues floored at 1e-12 * max(D) so
/// whitening never blows up on rank-deficient input.
RealVector inv_sqrt_floored(const RealVector& D);

uint64_t splitmix64(uint64_t x);

/// Deterministic random stream. Gaussian variates come from an explicit
/// Box-Muller transform so the stream does not depend on the C++ standard
/// library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  double uniform();      // [0, 1)
  double uniform_pos();  // (0, 1)
  double gaussian();     // N(0, 1)
  cdouble complex_gaussian(double mean, double variance);  // CN(mean, variance)

  /// Independent substream derived from this stream's seed (not its current
  /// state), so derivations are reproducible regardless of consumption order.
  Rng derive(uint64_t tag) const;

  uint64_t seed() const noexcept { return seed_; }

 private:
  uint64_t seed_;
  uint64_t s_[4];  // xoshiro256++ state
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// rows×cols matrix of i.i.d. circularly-symmetric complex Gaussians,
/// real and imaginary parts each with variance variance/2. Entries are drawn
/// in row-major order.
ComplexMatrix sample_complex_gaussian(Index rows, Index cols, double mean,
                                      double variance, Rng& rng);

}  // namespace uacesd

#endif
