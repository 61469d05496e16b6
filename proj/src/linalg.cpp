#include "uacesd/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>

namespace uacesd {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void require_nonempty(const ComplexMatrix& A, const char* op) {
  if (A.rows() < 1 || A.cols() < 1) {
    throw ContractError(std::string(op) + ": matrix must be at least 1x1");
  }
  if (!A.allFinite()) {
    throw ContractError(std::string(op) + ": matrix has non-finite entries");
  }
}

}  // namespace

SvdResult svd(const ComplexMatrix& A) {
  require_nonempty(A, "svd");
  Eigen::JacobiSVD<ComplexMatrix> dec(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (dec.info() != Eigen::Success) {
    throw DecompositionError("svd did not converge on a " + std::to_string(A.rows()) +
                             "x" + std::to_string(A.cols()) + " matrix");
  }
  SvdResult out{dec.matrixU(), dec.singularValues(), dec.matrixV()};
  for (Index i = 0; i < out.S.size(); ++i) {
    if (out.S(i) < 0.0) out.S(i) = 0.0;
  }
  // Reconstruction guard; a silent bad factorization would poison everything
  // downstream.
  ComplexMatrix recon = out.U.leftCols(out.S.size()) * out.S.asDiagonal() *
                        out.V.leftCols(out.S.size()).adjoint();
  double ref = A.norm();
  double resid = (A - recon).norm();
  if (!(resid <= 1e-10 * (ref > 0.0 ? ref : 1.0))) {
    throw DecompositionError("svd reconstruction residual too large on a " +
                             std::to_string(A.rows()) + "x" + std::to_string(A.cols()) +
                             " matrix");
  }
  return out;
}

EigResult eig_hermitian(const ComplexMatrix& W) {
  require_nonempty(W, "eig_hermitian");
  if (W.rows() != W.cols()) {
    throw ContractError("eig_hermitian: matrix must be square");
  }
  double scale = W.cwiseAbs().maxCoeff();
  double herm_defect = (W - W.adjoint()).cwiseAbs().maxCoeff();
  if (herm_defect > 1e-10 * std::max(1.0, scale)) {
    throw ContractError("eig_hermitian: input is not Hermitian within tolerance");
  }
  ComplexMatrix sym = 0.5 * (W + W.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> dec(sym);
  if (dec.info() != Eigen::Success) {
    throw DecompositionError("eig_hermitian did not converge on a " +
                             std::to_string(W.rows()) + "x" + std::to_string(W.cols()) +
                             " matrix");
  }
  EigResult out{dec.eigenvectors(), dec.eigenvalues()};
  for (Index i = 0; i < out.D.size(); ++i) {
    if (out.D(i) < 0.0) out.D(i) = 0.0;  // PSD guard
  }
  return out;
}

RealVector inv_sqrt_floored(const RealVector& D) {
  double dmax = D.size() > 0 ? D.maxCoeff() : 0.0;
  double floor = 1e-12 * (dmax > 0.0 ? dmax : 1.0);
  RealVector out(D.size());
  for (Index i = 0; i < D.size(); ++i) {
    out(i) = 1.0 / std::sqrt(std::max(D(i), floor));
  }
  return out;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

namespace {
inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(uint64_t seed) : seed_(seed) {
  uint64_t sm = seed;
  for (auto& w : s_) {
    sm = splitmix64(sm);
    w = sm;
  }
}

uint64_t Rng::next_u64() {
  // xoshiro256++
  uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_pos() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform_pos();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = kTwoPi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

cdouble Rng::complex_gaussian(double mean, double variance) {
  if (variance == 0.0) return {mean, 0.0};
  double u1 = uniform_pos();
  double u2 = uniform();
  double r = std::sqrt(-variance * std::log(u1));
  double a = kTwoPi * u2;
  return {mean + r * std::cos(a), r * std::sin(a)};
}

Rng Rng::derive(uint64_t tag) const {
  return Rng(splitmix64(seed_ ^ splitmix64(tag * 0x9E3779B97F4A7C15ull + 1)));
}

ComplexMatrix sample_complex_gaussian(Index rows, Index cols, double mean,
                                      double variance, Rng& rng) {
  if (rows < 1 || cols < 1) {
    throw ContractError("sample_complex_gaussian: dimensions must be positive");
  }
  if (!(variance >= 0.0)) {
    throw ContractError("sample_complex_gaussian: variance must be >= 0");
  }
  ComplexMatrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      out(i, j) = rng.complex_gaussian(mean, variance);
    }
  }
  return out;
}

}  // namespace uacesd
