#ifndef UACESD_UAMP_HPP
#define UACESD_UAMP_HPP

#include <vector>

#include "uacesd/denoisers.hpp"
#include "uacesd/linalg.hpp"
#include "uacesd/types.hpp"

namespace uacesd {

/// Unitary-transformed linear model r = Phi*x + w with w ~ CN(0, 1/beta).
/// R may have several columns; each is an independent instance.
struct UnitaryTransformedModel {
  ComplexMatrix R;        // U^H y
  ComplexMatrix Phi;      // U^H A = Lambda * V^H
  RealVector lambda_vec;  // (Lambda Lambda^H) 1, length = rows of R
  double beta = 1.0;      // noise precision
};

UnitaryTransformedModel build_unitary_model(const ComplexMatrix& A, const ComplexMatrix& y,
                                            double beta);

enum class UampVariant { v1, v2 };

/// Iteration state. tau_x has one row per signal entry for v1 and a single
/// row (per-column scalar) for v2.
struct UampState {
  ComplexMatrix x_hat;
  RealMatrix tau_x;
  ComplexMatrix s;
  int iteration = 0;
};

UampState make_uamp_state(const UnitaryTransformedModel& model, UampVariant variant);

/// One sweep of Algorithm lines 1-8 for every column. Products are evaluated
/// column by column so matrix-valued runs decouple bit-exactly.
void uamp_iterate(const UnitaryTransformedModel& model, UampState& state,
                  const Denoiser& denoiser, UampVariant variant, double damping = 1.0,
                  double variance_floor = 1e-12);

struct UampOptions {
  UampVariant variant = UampVariant::v2;
  int max_iters = 200;
  double tol = 1e-8;
  double damping = 1.0;
  double variance_floor = 1e-12;
};

struct UampResult {
  ComplexMatrix x_hat;
  RealMatrix tau_x;
  std::vector<double> trace;  // relative change of x_hat per executed iteration
  int iterations = 0;         // iterations actually executed
};

/// Loop driver: stops once the relative Frobenius change drops below tol
/// (checked at the top of the next iteration) or max_iters is reached.
UampResult run_uamp(const UnitaryTransformedModel& model, const Denoiser& denoiser,
                    const UampOptions& opts);

}  // namespace uacesd

#endif
