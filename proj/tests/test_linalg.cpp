#include <doctest.h>

#include "uacesd/linalg.hpp"

using namespace uacesd;

namespace {

ComplexMatrix random_complex(Index rows, Index cols, Rng& rng) {
  return sample_complex_gaussian(rows, cols, 0.0, 1.0, rng);
}

double recon_error(const ComplexMatrix& A, const SvdResult& d) {
  ComplexMatrix recon = d.U.leftCols(d.S.size()) * d.S.asDiagonal() *
                        d.V.leftCols(d.S.size()).adjoint();
  return (A - recon).norm() / std::max(A.norm(), 1e-300);
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("svd of identity") {
  ComplexMatrix I = ComplexMatrix::Identity(3, 3);
  SvdResult d = svd(I);
  for (Index i = 0; i < 3; ++i) CHECK(d.S(i) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((d.U - ComplexMatrix::Identity(3, 3)).norm() < 1e-10);
  CHECK((d.V - ComplexMatrix::Identity(3, 3)).norm() < 1e-10);
}

TEST_CASE("svd of a diagonal matrix") {
  ComplexMatrix A = ComplexMatrix::Zero(2, 2);
  A(0, 0) = 3.0;
  A(1, 1) = 2.0;
  SvdResult d = svd(A);
  CHECK(d.S(0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(d.S(1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("svd reconstruction and unitarity on random matrices") {
  Rng rng(42);
  for (auto [m, k] : {std::pair<Index, Index>{4, 6}, {6, 4}, {12, 12}, {20, 7}}) {
    ComplexMatrix A = random_complex(m, k, rng);
    SvdResult d = svd(A);
    CHECK(recon_error(A, d) <= 1e-10);
    CHECK((d.U.adjoint() * d.U - ComplexMatrix::Identity(m, m)).cwiseAbs().maxCoeff() <=
          1e-10);
    CHECK((d.V.adjoint() * d.V - ComplexMatrix::Identity(k, k)).cwiseAbs().maxCoeff() <=
          1e-10);
    // descending
    for (Index i = 1; i < d.S.size(); ++i) CHECK(d.S(i - 1) >= d.S(i));
  }
}

TEST_CASE("svd round trip at 200x200") {
  Rng rng(7);
  ComplexMatrix A = random_complex(200, 200, rng);
  CHECK(recon_error(A, svd(A)) <= 1e-10);
}

TEST_CASE("eig of identity and diagonal") {
  EigResult e = eig_hermitian(ComplexMatrix::Identity(4, 4));
  for (Index i = 0; i < 4; ++i) CHECK(e.D(i) == doctest::Approx(1.0).epsilon(1e-12));

  ComplexMatrix W = ComplexMatrix::Zero(2, 2);
  W(0, 0) = 5.0;
  W(1, 1) = 1.0;
  EigResult e2 = eig_hermitian(W);
  CHECK(e2.D.minCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e2.D.maxCoeff() == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("eig of a random Gram matrix reconstructs and stays PSD") {
  Rng rng(3);
  for (Index n : {5, 40, 200}) {
    ComplexMatrix B = random_complex(n, n + 3, rng);
    ComplexMatrix W = B * B.adjoint();
    EigResult e = eig_hermitian(W);
    CHECK(e.D.minCoeff() >= 0.0);
    ComplexMatrix recon = e.C * e.D.asDiagonal() * e.C.adjoint();
    CHECK((W - recon).norm() / W.norm() <= 1e-10);
  }
}

TEST_CASE("eig rejects a clearly non-Hermitian input") {
  ComplexMatrix W(2, 2);
  W << cdouble(1, 0), cdouble(2, 1), cdouble(0, 0), cdouble(1, 0);
  CHECK_THROWS_AS(eig_hermitian(W), ContractError);
}

TEST_CASE("inv_sqrt_floored guards rank-deficient spectra") {
  RealVector D(3);
  D << 4.0, 1e-30, 0.0;
  RealVector s = inv_sqrt_floored(D);
  CHECK(s(0) == doctest::Approx(0.5));
  CHECK(s(1) == doctest::Approx(1.0 / std::sqrt(4e-12)));
  CHECK(s(2) == doctest::Approx(1.0 / std::sqrt(4e-12)));
}

TEST_CASE("zero-variance sampling returns the mean") {
  Rng rng(1);
  ComplexMatrix A = sample_complex_gaussian(3, 5, 2.5, 0.0, rng);
  CHECK((A.array() - cdouble(2.5, 0.0)).matrix().norm() == 0.0);
}

TEST_CASE("same seed gives bit-identical samples") {
  Rng a(123), b(123);
  ComplexMatrix A = sample_complex_gaussian(7, 9, 0.0, 1.7, a);
  ComplexMatrix B = sample_complex_gaussian(7, 9, 0.0, 1.7, b);
  CHECK(A == B);
  Rng c(124);
  CHECK(sample_complex_gaussian(7, 9, 0.0, 1.7, c) != A);
}

TEST_CASE("sample moments match the requested variance") {
  Rng rng(99);
  const Index n = 100000;
  ComplexMatrix A = sample_complex_gaussian(n, 1, 0.0, 2.0, rng);
  double var = A.squaredNorm() / static_cast<double>(n);
  CHECK(var == doctest::Approx(2.0).epsilon(0.03));
  double re_var = A.real().squaredNorm() / static_cast<double>(n);
  double im_var = A.imag().squaredNorm() / static_cast<double>(n);
  CHECK(re_var == doctest::Approx(1.0).epsilon(0.05));
  CHECK(im_var == doctest::Approx(1.0).epsilon(0.05));
  CHECK(std::abs(A.sum()) / static_cast<double>(n) < 0.02);
}

TEST_CASE("derived substreams are independent of consumption order") {
  Rng a(5);
  a.uniform();
  a.uniform();
  Rng b(5);
  CHECK(a.derive(17).next_u64() == b.derive(17).next_u64());
  CHECK(a.derive(17).next_u64() != a.derive(18).next_u64());
}

TEST_CASE("contract violations are rejected") {
  Rng rng(1);
  CHECK_THROWS_AS(sample_complex_gaussian(0, 3, 0.0, 1.0, rng), ContractError);
  CHECK_THROWS_AS(sample_complex_gaussian(3, 3, 0.0, -1.0, rng), ContractError);
  ComplexMatrix bad(1, 1);
  bad(0, 0) = cdouble(std::numeric_limits<double>::quiet_NaN(), 0.0);
  CHECK_THROWS_AS(svd(bad), ContractError);
}

}  // TEST_SUITE
