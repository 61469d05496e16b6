#include "uacesd/uamp_mf.hpp"

#include <cmath>
#include <limits>

namespace uacesd {

namespace {

// Whitened pseudo model for one UAMP sweep: R = Phi * unknown + noise.
struct WhitenedModel {
  ComplexMatrix Phi;      // N×N, D^{-1/2} C^H
  ComplexMatrix R;        // N×cols
  RealMatrix abs_phi2;    // |Phi|^2
  RealMatrix abs_phi2_t;  // |Phi^H|^2
};

WhitenedModel whiten(const ComplexMatrix& Wbar, const ComplexMatrix& right) {
  EigResult eg = eig_hermitian(Wbar);
  RealVector dis = inv_sqrt_floored(eg.D);
  WhitenedModel wm;
  // Whitening of the Gaussian message with precision ~ Wbar: the pseudo model
  // R = Phi * unknown + w with white unit-precision-scaled w needs
  // Phi^H Phi = Wbar and Phi^H R = right, i.e. Phi = D^{1/2} C^H and
  // R = D^{-1/2} C^H right.
  RealVector ds(dis.size());
  for (Index i = 0; i < dis.size(); ++i) ds(i) = 1.0 / dis(i);
  wm.Phi = ds.asDiagonal() * eg.C.adjoint();
  wm.R = dis.asDiagonal() * (eg.C.adjoint() * right);
  wm.abs_phi2 = wm.Phi.cwiseAbs2();
  wm.abs_phi2_t = wm.Phi.adjoint().cwiseAbs2();
  return wm;
}

// Lines 4-9 / 16-21: the shared UAMPv1-style variance propagation. Consumes
// the current estimate/variances, updates the Onsager memory in place and
// returns the decoupled pseudo-observations.
PseudoObservation uamp_sweep(const WhitenedModel& wm, const ComplexMatrix& est,
                             const RealMatrix& xi, ComplexMatrix& onsager,
                             double lambda_hat, double floor) {
  RealMatrix v_p = (wm.abs_phi2 * xi).cwiseMax(floor);
  ComplexMatrix p = wm.Phi * est - v_p.cast<cdouble>().cwiseProduct(onsager);
  RealMatrix v_s = (v_p.array() + 1.0 / lambda_hat).inverse().matrix();
  onsager = v_s.cast<cdouble>().cwiseProduct(wm.R - p);
  RealMatrix v_q =
      (wm.abs_phi2_t * v_s).cwiseMax(floor).cwiseInverse().cwiseMax(floor);
  PseudoObservation obs;
  obs.Q = est + v_q.cast<cdouble>().cwiseProduct(wm.Phi.adjoint() * onsager);
  obs.V = std::move(v_q);
  return obs;
}

void blend(ComplexMatrix& mean, RealMatrix& xi, const DenoiseOutput& out,
           double damping, double floor) {
  RealMatrix var = out.variance.cwiseMax(floor);
  if (damping < 1.0) {
    mean = damping * out.mean + (1.0 - damping) * mean;
    xi = damping * var + (1.0 - damping) * xi;
  } else {
    mean = out.mean;
    xi = var;
  }
}

}  // namespace

double initial_lambda(const ComplexMatrix& Y) {
  double p = Y.squaredNorm() / static_cast<double>(Y.size());
  return p > 0.0 ? 1.0 / p : 1.0;
}

MfState make_mf_state(const ComplexMatrix& Y, Index N, const ComplexMatrix& H_init,
                      double lambda_init) {
  const Index M = Y.rows();
  const Index L = Y.cols();
  if (H_init.rows() != M || H_init.cols() != N) {
    throw ContractError("make_mf_state: H_init dimensions must be M×N");
  }
  MfState st;
  st.X.mean = ComplexMatrix::Zero(N, L);
  st.X.row_cov = RealVector::Ones(N);
  st.X.col_cov = RealVector::Ones(L);
  st.H.mean = H_init;
  st.H.row_cov = RealVector::Ones(M);
  st.H.col_cov = RealVector::Ones(N);
  st.Xi_X = RealMatrix::Ones(N, L);
  st.Xi_H = RealMatrix::Ones(M, N);
  st.S_X = ComplexMatrix::Zero(N, L);
  st.S_H = ComplexMatrix::Zero(N, M);
  st.lambda_hat = lambda_init;
  return st;
}

PseudoObservation mf_x_message(const ComplexMatrix& Y, MfState& state,
                               double variance_floor) {
  const Index M = Y.rows();
  ComplexMatrix Wbar = state.H.mean.adjoint() * state.H.mean;
  Wbar += (static_cast<double>(M) * state.H.col_cov).asDiagonal();
  WhitenedModel wm = whiten(Wbar, state.H.mean.adjoint() * Y);
  return uamp_sweep(wm, state.X.mean, state.Xi_X, state.S_X, state.lambda_hat,
                    variance_floor);
}

void mf_x_step(const ComplexMatrix& Y, MfState& state, const Denoiser& x_denoiser,
               double variance_floor, double damping) {
  PseudoObservation obs = mf_x_message(Y, state, variance_floor);
  DenoiseOutput out = x_denoiser(obs.Q, obs.V);
  blend(state.X.mean, state.Xi_X, out, damping, variance_floor);
  state.X.row_cov = state.Xi_X.rowwise().mean();
  if (!all_finite(state.X.mean)) {
    throw DivergenceError("mf_x_step: non-finite X estimate", state.iteration);
  }
}

PseudoObservation mf_h_message(const ComplexMatrix& Y, MfState& state,
                               double variance_floor) {
  const Index L = Y.cols();
  ComplexMatrix Wbar = state.X.mean * state.X.mean.adjoint();
  Wbar += (static_cast<double>(L) * state.X.row_cov).asDiagonal();
  WhitenedModel wm = whiten(Wbar, state.X.mean * Y.adjoint());
  PseudoObservation obs = uamp_sweep(wm, state.H.mean.adjoint(),
                                     state.Xi_H.transpose(), state.S_H,
                                     state.lambda_hat, variance_floor);
  // Back to H orientation (M×N).
  obs.Q = obs.Q.adjoint().eval();
  obs.V = obs.V.transpose().eval();
  return obs;
}

void mf_h_step(const ComplexMatrix& Y, MfState& state, const Denoiser& h_denoiser,
               double variance_floor, double damping) {
  PseudoObservation obs = mf_h_message(Y, state, variance_floor);
  DenoiseOutput out = h_denoiser(obs.Q, obs.V);
  blend(state.H.mean, state.Xi_H, out, damping, variance_floor);
  state.H.col_cov = state.Xi_H.colwise().mean();
  if (!all_finite(state.H.mean)) {
    throw DivergenceError("mf_h_step: non-finite H estimate", state.iteration);
  }
}

double update_noise_precision(const ComplexMatrix& Y, const MfState& state,
                              double lambda_floor, double lambda_cap) {
  const double M = static_cast<double>(Y.rows());
  const double L = static_cast<double>(Y.cols());
  const Index N = state.H.mean.cols();

  double c = (Y - state.H.mean * state.X.mean).squaredNorm();
  for (Index n = 0; n < N; ++n) {
    const double x_row_energy = state.X.mean.row(n).squaredNorm();
    const double h_col_energy = state.H.mean.col(n).squaredNorm();
    c += M * x_row_energy * state.H.col_cov(n);
    c += L * state.X.row_cov(n) * h_col_energy;
    c += M * L * state.X.row_cov(n) * state.H.col_cov(n);
  }
  if (!std::isfinite(c) || c < 0.0) {
    throw DivergenceError("update_noise_precision: invalid residual energy",
                          state.iteration);
  }
  if (c == 0.0) return lambda_cap;
  return std::clamp(M * L / c, lambda_floor, lambda_cap);
}

MfResult run_uamp_mf(const ComplexMatrix& Y, Index N, const Denoiser& x_denoiser,
                     const Denoiser& h_denoiser, const MfOptions& opts, Rng& rng) {
  if (N < 1 || Y.rows() < 1 || Y.cols() < 1) {
    throw ContractError("run_uamp_mf: invalid dimensions");
  }
  ComplexMatrix H0 = opts.h_init_all_ones
                         ? ComplexMatrix::Ones(Y.rows(), N)
                         : sample_complex_gaussian(Y.rows(), N, 0.0, 1.0, rng);
  double lambda0 = opts.lambda_init > 0.0 ? opts.lambda_init : initial_lambda(Y);
  MfState state = make_mf_state(Y, N, H0, lambda0);

  MfResult res;
  double last_change = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= opts.max_iters; ++t) {
    if (t > std::max(1, opts.warmup_iters + 1) && last_change < opts.tol) break;
    ComplexMatrix x_prev = state.X.mean;
    ComplexMatrix h_prev = state.H.mean;
    state.iteration = t;
    mf_x_step(Y, state, x_denoiser, opts.variance_floor, opts.damping);
    mf_h_step(Y, state, h_denoiser, opts.variance_floor, opts.damping);
    if (t > opts.warmup_iters) {
      state.lambda_hat =
          update_noise_precision(Y, state, opts.lambda_floor, opts.lambda_cap);
    }
    double dx = (state.X.mean - x_prev).norm() / std::max(x_prev.norm(), 1e-300);
    double dh = (state.H.mean - h_prev).norm() / std::max(h_prev.norm(), 1e-300);
    last_change = std::max(dx, dh);
    res.trace.push_back(last_change);
    res.iterations = t;
  }
  res.X = state.X;
  res.H = state.H;
  res.lambda_hat = state.lambda_hat;
  return res;
}

}  // namespace uacesd
