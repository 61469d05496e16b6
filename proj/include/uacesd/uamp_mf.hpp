#ifndef UACESD_UAMP_MF_HPP
#define UACESD_UAMP_MF_HPP

#include <vector>

#include "uacesd/denoisers.hpp"
#include "uacesd/linalg.hpp"
#include "uacesd/types.hpp"

namespace uacesd {

/// Matrix-normal belief with diagonal row/column covariances. X-beliefs keep
/// col_cov = 1 (identity), H-beliefs keep row_cov = 1.
struct MatrixNormalBelief {
  ComplexMatrix mean;
  RealVector row_cov;
  RealVector col_cov;
};

/// Full state of the alternating factorization of Y = H X + W.
/// Y is M×L, H is M×N, X is N×L. S_H is kept in the transposed (N×M)
/// orientation the H-step works in.
struct MfState {
  MatrixNormalBelief X;  // mean N×L, row_cov length N, col_cov length L (ones)
  MatrixNormalBelief H;  // mean M×N, row_cov length M (ones), col_cov length N
  RealMatrix Xi_X;       // N×L per-entry posterior variances
  RealMatrix Xi_H;       // M×N
  ComplexMatrix S_X;     // N×L Onsager memory of the X-step
  ComplexMatrix S_H;     // N×M Onsager memory of the H-step
  double lambda_hat = 1.0;
  int iteration = 0;
};

/// Decoupled per-entry pseudo-observations produced by a message sweep.
struct PseudoObservation {
  ComplexMatrix Q;
  RealMatrix V;
};

struct MfOptions {
  int max_iters = 300;
  double tol = 1e-6;
  double variance_floor = 1e-12;
  double lambda_floor = 1e-12;
  double lambda_cap = 1e12;
  bool h_init_all_ones = false;  // fidelity switch; random CN(0,1) otherwise
  double damping = 1.0;
  double lambda_init = 0.0;  // 0 = 1 / mean(|Y|^2)
  int warmup_iters = 0;      // iterations before the noise precision adapts
};

MfState make_mf_state(const ComplexMatrix& Y, Index N, const ComplexMatrix& H_init,
                      double lambda_init);

/// Initial lambda estimate 1 / mean(|Y|^2).
double initial_lambda(const ComplexMatrix& Y);

/// X-step lines 1-9: whiten with eig(H^H H + M V_H), run the UAMP sweep and
/// return the decoupled pseudo-observations of X. Updates S_X in place.
PseudoObservation mf_x_message(const ComplexMatrix& Y, MfState& state,
                               double variance_floor);

/// Full X-step (lines 1-12): message sweep, denoise, row-averaged U_X.
void mf_x_step(const ComplexMatrix& Y, MfState& state, const Denoiser& x_denoiser,
               double variance_floor = 1e-12, double damping = 1.0);

/// H-step lines 13-21 on the transposed problem; returns pseudo-observations
/// in H orientation (M×N). Updates S_H in place.
PseudoObservation mf_h_message(const ComplexMatrix& Y, MfState& state,
                               double variance_floor);

/// Full H-step (lines 13-24): message sweep, denoise, column-averaged V_H.
void mf_h_step(const ComplexMatrix& Y, MfState& state, const Denoiser& h_denoiser,
               double variance_floor = 1e-12, double damping = 1.0);

/// Noise-precision update lambda = ML/C. C < 0 or non-finite raises a
/// numerical-guard error; C = 0 saturates at the cap.
double update_noise_precision(const ComplexMatrix& Y, const MfState& state,
                              double lambda_floor = 1e-12, double lambda_cap = 1e12);

struct MfResult {
  MatrixNormalBelief X;
  MatrixNormalBelief H;
  double lambda_hat = 1.0;
  std::vector<double> trace;  // max of the two relative mean changes
  int iterations = 0;
};

MfResult run_uamp_mf(const ComplexMatrix& Y, Index N, const Denoiser& x_denoiser,
                     const Denoiser& h_denoiser, const MfOptions& opts, Rng& rng);

}  // namespace uacesd

#endif
