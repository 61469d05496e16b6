#include "uacesd/uamp.hpp"

#include <cmath>
#include <limits>

namespace uacesd {

namespace {

RealMatrix floored(RealMatrix m, double floor) {
  return m.cwiseMax(floor);
}

}  // namespace

UnitaryTransformedModel build_unitary_model(const ComplexMatrix& A, const ComplexMatrix& y,
                                            double beta) {
  if (A.rows() != y.rows()) {
    throw ContractError("build_unitary_model: A and y row counts differ");
  }
  if (!(beta > 0.0)) {
    throw ContractError("build_unitary_model: beta must be > 0");
  }
  SvdResult dec = svd(A);
  UnitaryTransformedModel model;
  model.R = dec.U.adjoint() * y;
  model.Phi = dec.U.adjoint() * A;
  model.lambda_vec = RealVector::Zero(A.rows());
  for (Index i = 0; i < dec.S.size(); ++i) {
    model.lambda_vec(i) = dec.S(i) * dec.S(i);
  }
  model.beta = beta;
  return model;
}

UampState make_uamp_state(const UnitaryTransformedModel& model, UampVariant variant) {
  const Index n = model.Phi.cols();
  const Index t = model.R.cols();
  UampState st;
  st.x_hat = ComplexMatrix::Zero(n, t);
  st.tau_x = RealMatrix::Ones(variant == UampVariant::v1 ? n : 1, t);
  st.s = ComplexMatrix::Zero(model.R.rows(), t);
  st.iteration = 0;
  return st;
}

void uamp_iterate(const UnitaryTransformedModel& model, UampState& state,
                  const Denoiser& denoiser, UampVariant variant, double damping,
                  double variance_floor) {
  const Index m = model.R.rows();
  const Index n = model.Phi.cols();
  const Index cols = model.R.cols();
  const double beta_inv = 1.0 / model.beta;

  const RealMatrix abs_phi2 = model.Phi.cwiseAbs2();

  ComplexMatrix q(n, cols);
  RealMatrix tau_q(n, cols);
  for (Index t = 0; t < cols; ++t) {
    RealVector tau_p(m);
    if (variant == UampVariant::v1) {
      tau_p = abs_phi2 * state.tau_x.col(t);
    } else {
      tau_p = state.tau_x(0, t) * model.lambda_vec;
    }
    tau_p = tau_p.cwiseMax(variance_floor);

    ComplexVector p = model.Phi * state.x_hat.col(t);
    p -= tau_p.cast<cdouble>().cwiseProduct(state.s.col(t));

    RealVector tau_s = (tau_p.array() + beta_inv).inverse().matrix();
    for (Index i = 0; i < m; ++i) {
      state.s(i, t) = tau_s(i) * (model.R(i, t) - p(i));
    }

    RealVector tq(n);
    if (variant == UampVariant::v1) {
      RealVector inv_tq = abs_phi2.transpose() * tau_s;
      tq = inv_tq.cwiseMax(variance_floor).cwiseInverse().cwiseMax(variance_floor);
    } else {
      double inv_tq = model.lambda_vec.dot(tau_s) / static_cast<double>(n);
      double v = 1.0 / std::max(inv_tq, variance_floor);
      tq.setConstant(std::max(v, variance_floor));
    }
    ComplexVector corr = model.Phi.adjoint() * state.s.col(t);
    for (Index i = 0; i < n; ++i) {
      q(i, t) = state.x_hat(i, t) + tq(i) * corr(i);
      tau_q(i, t) = tq(i);
    }
  }

  DenoiseOutput out = denoiser(q, tau_q);
  if (out.mean.rows() != n || out.mean.cols() != cols) {
    throw ContractError("uamp_iterate: denoiser output dimension mismatch");
  }

  RealMatrix tau_x_new;
  if (variant == UampVariant::v1) {
    tau_x_new = floored(out.variance, variance_floor);
  } else {
    tau_x_new = floored(out.variance.colwise().mean(), variance_floor);
  }

  if (damping < 1.0) {
    state.x_hat = damping * out.mean + (1.0 - damping) * state.x_hat;
    state.tau_x = damping * tau_x_new + (1.0 - damping) * state.tau_x;
  } else {
    state.x_hat = out.mean;
    state.tau_x = tau_x_new;
  }
  ++state.iteration;

  if (!all_finite(state.x_hat) || !all_finite(state.s) || !all_finite(state.tau_x)) {
    throw DivergenceError("uamp_iterate: non-finite state", state.iteration);
  }
}

UampResult run_uamp(const UnitaryTransformedModel& model, const Denoiser& denoiser,
                    const UampOptions& opts) {
  if (opts.max_iters < 1) {
    throw ContractError("run_uamp: max_iters must be >= 1");
  }
  if (!(opts.tol > 0.0)) {
    throw ContractError("run_uamp: tol must be > 0");
  }
  UampState state = make_uamp_state(model, opts.variant);
  UampResult res;
  double last_change = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= opts.max_iters; ++t) {
    if (t >= 2 && last_change < opts.tol) break;
    ComplexMatrix x_prev = state.x_hat;
    uamp_iterate(model, state, denoiser, opts.variant, opts.damping, opts.variance_floor);
    double denom = x_prev.norm();
    last_change = (state.x_hat - x_prev).norm() / (denom > 0.0 ? denom : 1.0);
    res.trace.push_back(last_change);
    res.iterations = t;
  }
  res.x_hat = state.x_hat;
  res.tau_x = state.tau_x;
  return res;
}

}  // namespace uacesd
