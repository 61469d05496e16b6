#include "uacesd/receiver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace uacesd {

namespace {

std::vector<Index> top_energy_columns(const ComplexMatrix& H, Index keep) {
  std::vector<Index> order(H.cols());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return H.col(a).squaredNorm() > H.col(b).squaredNorm();
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());  // keep original column order
  return order;
}

template <typename Mat>
Mat select_columns(const Mat& m, const std::vector<Index>& cols) {
  Mat out(m.rows(), static_cast<Index>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Index>(i)) = m.col(cols[i]);
  return out;
}

template <typename Mat>
Mat select_rows(const Mat& m, const std::vector<Index>& rows) {
  Mat out(static_cast<Index>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

RealVector select_entries(const RealVector& v, const std::vector<Index>& idx) {
  RealVector out(static_cast<Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = v(idx[i]);
  return out;
}

}  // namespace

BeamspaceOperator make_beamspace_operator(const ComplexMatrix& F) {
  if (F.cols() <= F.rows()) {
    throw ContractError("make_beamspace_operator: F must be wide (K > M)");
  }
  SvdResult dec = svd(F);
  BeamspaceOperator op;
  op.F = F;
  op.U_F = dec.U;
  op.lambda_F = RealVector::Zero(F.rows());
  for (Index i = 0; i < dec.S.size() && i < F.rows(); ++i) {
    op.lambda_F(i) = dec.S(i) * dec.S(i);
  }
  op.Phi_G = dec.U.adjoint() * F;
  op.abs_UF2 = dec.U.cwiseAbs2();
  return op;
}

GStepState make_g_step_state(Index K, Index N, const BernoulliGaussianPrior& prior) {
  prior.validate();
  GStepState st;
  st.G_hat = ComplexMatrix::Zero(K, N);
  st.nu_g = RealVector::Ones(N);
  st.S_G = ComplexMatrix::Zero(0, 0);  // sized on first g_step (M comes from Q_H)
  st.pi = RealMatrix::Zero(K, N);
  st.epsilon = prior.epsilon;
  st.nu = prior.nu;
  return st;
}

void g_step(const ComplexMatrix& Q_H, const RealMatrix& V_QH,
            const BeamspaceOperator& op, GStepState& state, const GStepOptions& opts) {
  const Index M = op.F.rows();
  const Index K = op.F.cols();
  const Index N = Q_H.cols();
  if (Q_H.rows() != M || V_QH.rows() != Q_H.rows() || V_QH.cols() != Q_H.cols()) {
    throw ContractError("g_step: pseudo-observation dimensions do not match F");
  }
  if (state.G_hat.rows() != K || state.G_hat.cols() != N || state.nu_g.size() != N) {
    throw ContractError("g_step: state dimensions do not match");
  }
  if (state.S_G.size() == 0) state.S_G = ComplexMatrix::Zero(M, N);
  const double floor = opts.variance_floor;

  state.R_G = op.U_F.adjoint() * Q_H;
  state.tau = V_QH.cwiseMax(floor).cwiseInverse().mean();

  state.V_PG = (op.lambda_F * state.nu_g.transpose()).cwiseMax(floor);
  state.P_G = op.Phi_G * state.G_hat -
              state.V_PG.cast<cdouble>().cwiseProduct(state.S_G);
  RealMatrix v_sg = (state.V_PG.array() + 1.0 / state.tau).inverse().matrix();
  state.S_G = v_sg.cast<cdouble>().cwiseProduct(state.R_G - state.P_G);

  RealVector vq_col(N);
  for (Index n = 0; n < N; ++n) {
    double inv = op.lambda_F.dot(v_sg.col(n)) / static_cast<double>(K);
    vq_col(n) = std::max(1.0 / std::max(inv, floor), floor);
  }
  RealMatrix V_QG = RealVector::Ones(K) * vq_col.transpose();
  ComplexMatrix Q_G =
      state.G_hat + V_QG.cast<cdouble>().cwiseProduct(op.Phi_G.adjoint() * state.S_G);

  BernoulliGaussianPrior prior{state.epsilon, state.nu};
  DenoiseOutput out = denoise_bernoulli_gaussian(
      Q_G, V_QG, prior, BgOptions{opts.full_mixture_variance});
  RealVector nu_new = out.variance.colwise().mean().transpose().cwiseMax(floor);
  if (opts.damping < 1.0) {
    state.G_hat = opts.damping * out.mean + (1.0 - opts.damping) * state.G_hat;
    state.nu_g = opts.damping * nu_new + (1.0 - opts.damping) * state.nu_g;
  } else {
    state.G_hat = out.mean;
    state.nu_g = nu_new;
  }
  state.pi = *out.aux;
  if (opts.em_epsilon) state.epsilon = em_update_sparsity(state.pi);
  if (opts.em_nu) {
    // the column normalization bounds a beamspace column's energy by ~K, so
    // the slab variance can never legitimately exceed K
    state.nu = std::clamp(em_update_component_variance(Q_G, V_QG, prior), 1e-8,
                          static_cast<double>(K));
  }

  ++state.iteration;
  if (!all_finite(state.G_hat) || !std::isfinite(state.tau) ||
      !std::isfinite(state.epsilon) || !std::isfinite(state.nu)) {
    throw DivergenceError("g_step: non-finite state", state.iteration);
  }
}

HPosterior combine_h_posterior(const BeamspaceOperator& op, const GStepState& state) {
  if (state.V_PG.size() == 0) {
    throw ContractError("combine_h_posterior: state has no cached g_step quantities");
  }
  // 1/(tau + 1/V_PG) and Vtilde/V_PG = 1/(1 + tau*V_PG), written without
  // dividing by V_PG so a collapsed prediction variance stays finite.
  RealMatrix denom = (1.0 + state.tau * state.V_PG.array()).matrix();
  RealMatrix v_tilde = state.V_PG.cwiseQuotient(denom);
  HPosterior hp;
  hp.Xi_H = op.abs_UF2 * v_tilde;
  ComplexMatrix inner =
      (state.tau * v_tilde).cast<cdouble>().cwiseProduct(state.R_G) +
      denom.cwiseInverse().cast<cdouble>().cwiseProduct(state.P_G);
  hp.H_hat = op.U_F * inner;
  hp.v_H = hp.Xi_H.colwise().mean();
  return hp;
}

RankEstimate estimate_active_count_from_singulars(const RealVector& sigma) {
  const Index n = sigma.size();
  if (n < 4) return {false, n};
  const Index n_ratios = n - 1;
  RealVector ratios(n_ratios);
  for (Index i = 0; i < n_ratios; ++i) {
    ratios(i) = sigma(i) / std::max(sigma(i + 1), 1e-300);
  }
  Index best = 0;
  for (Index i = 1; i < n_ratios; ++i) {
    if (ratios(i) > ratios(best)) best = i;  // ties go to the smaller index
  }
  RankEstimate est;
  est.n_hat = best + 1;  // 1-based gap index = rank candidate
  if (est.n_hat < 3) return est;  // average-ratio rule needs n_hat-2 >= 1
  double rbar = (ratios.sum() - ratios(best)) / static_cast<double>(est.n_hat - 2);
  est.accepted = ratios(best) > rbar;
  return est;
}

RankEstimate estimate_active_count(const ComplexMatrix& H_hat, Index current_N) {
  if (H_hat.cols() != current_N) {
    throw ContractError("estimate_active_count: current_N does not match H_hat");
  }
  EigResult eg = eig_hermitian(H_hat.adjoint() * H_hat);
  RealVector sigma(eg.D.size());
  for (Index i = 0; i < eg.D.size(); ++i) {
    sigma(i) = std::sqrt(eg.D(eg.D.size() - 1 - i));  // descending
  }
  return estimate_active_count_from_singulars(sigma);
}

void prune_to_rank(MfState& mf, GStepState& g, std::vector<RealMatrix>& symbol_posteriors,
                   Index n_hat) {
  if (n_hat >= mf.H.mean.cols()) return;
  if (n_hat < 1) throw ContractError("prune_to_rank: n_hat must be >= 1");
  const std::vector<Index> cols = top_energy_columns(mf.H.mean, n_hat);
  mf.H.mean = select_columns(mf.H.mean, cols);
  mf.Xi_H = select_columns(mf.Xi_H, cols);
  mf.H.col_cov = select_entries(mf.H.col_cov, cols);
  mf.X.mean = select_rows(mf.X.mean, cols);
  mf.Xi_X = select_rows(mf.Xi_X, cols);
  mf.X.row_cov = select_entries(mf.X.row_cov, cols);
  mf.S_X = ComplexMatrix::Zero(n_hat, mf.X.mean.cols());
  mf.S_H = ComplexMatrix::Zero(n_hat, mf.H.mean.rows());
  g.G_hat = select_columns(g.G_hat, cols);
  g.nu_g = select_entries(g.nu_g, cols);
  g.pi = select_columns(g.pi, cols);
  g.S_G = ComplexMatrix::Zero(mf.H.mean.rows(), n_hat);
  g.R_G.resize(0, 0);
  g.V_PG.resize(0, 0);
  g.P_G.resize(0, 0);
  for (auto& b : symbol_posteriors) b = select_rows(b, cols);
}

namespace {

// Shared per-iteration working set of the blind loop.
struct BlindLoop {
  MfState mf;
  GStepState g;
  std::vector<RealMatrix> beta;
  Index N_hat;
  bool rank_frozen = true;
  Index last_candidate = -1;

  void prune(Index keep) {
    if (keep >= N_hat) return;
    prune_to_rank(mf, g, beta, keep);
    N_hat = keep;
  }
};

ReceiverOutput finalize(const BlindLoop& loop, int iterations, bool diverged) {
  ReceiverOutput out;
  out.X_hat = loop.mf.X.mean;
  out.symbol_posteriors = loop.beta;
  out.H_hat = loop.mf.H.mean;
  out.G_hat = loop.g.G_hat;
  out.N_hat = loop.N_hat;
  out.lambda_hat = loop.mf.lambda_hat;
  out.epsilon_hat = loop.g.epsilon;
  out.iterations = iterations;
  out.diverged = diverged;
  return out;
}

// The blind factorization can lock a stream with its channel column rotated
// 45 degrees off the symbol grid; the pseudo observations then sit between
// constellation points and hard decisions split randomly. On a QPSK grid the
// fourth power of the observations exposes the offset (q^4 concentrates at
// e^{j4*phi}), so the stream's channel column and symbol row are counter-
// rotated and its Onsager memories reset.
void phase_retune(PseudoObservation& obs, BlindLoop& loop) {
  const Index L = obs.Q.cols();
  for (Index i = 0; i < loop.N_hat; ++i) {
    cdouble s4(0.0, 0.0);
    double mass = 0.0;
    for (Index l = 0; l < L; ++l) {
      cdouble q2 = obs.Q(i, l) * obs.Q(i, l);
      s4 += q2 * q2;
      mass += std::norm(q2);
    }
    if (mass <= 0.0) continue;
    double coherence = std::abs(s4) / mass;
    double phi = std::arg(s4) / 4.0;
    if (coherence < 0.5 || std::abs(phi) < M_PI / 16.0) continue;
    cdouble rot(std::cos(phi), std::sin(phi));
    loop.mf.H.mean.col(i) *= rot;
    loop.g.G_hat.col(i) *= rot;
    loop.mf.X.mean.row(i) *= std::conj(rot);
    obs.Q.row(i) *= std::conj(rot);
    loop.mf.S_X.row(i).setZero();
    loop.mf.S_H.row(i).setZero();
    if (loop.g.S_G.size() > 0) loop.g.S_G.col(i).setZero();
  }
}

void x_step_discrete(const ComplexMatrix& Y, BlindLoop& loop,
                     const DiscreteAlphabetPrior& alphabet, const ReceiverOptions& opts,
                     bool retune = false, double anneal = 1.0) {
  PseudoObservation obs = mf_x_message(Y, loop.mf, opts.variance_floor);
  if (retune) phase_retune(obs, loop);
  if (anneal > 1.0) obs.V *= anneal;
  DiscreteDenoiseFull full = denoise_discrete_full(obs.Q, obs.V, alphabet);
  RealMatrix var = full.out.variance.cwiseMax(opts.variance_floor);
  if (opts.damping < 1.0) {
    loop.mf.X.mean = opts.damping * full.out.mean + (1.0 - opts.damping) * loop.mf.X.mean;
    loop.mf.Xi_X = opts.damping * var + (1.0 - opts.damping) * loop.mf.Xi_X;
  } else {
    loop.mf.X.mean = full.out.mean;
    loop.mf.Xi_X = var;
  }
  loop.mf.X.row_cov = loop.mf.Xi_X.rowwise().mean();
  loop.beta = std::move(full.beta);
  if (!all_finite(loop.mf.X.mean)) {
    throw DivergenceError("x_step: non-finite X estimate", loop.mf.iteration);
  }
}

void h_update_through_beamspace(const ComplexMatrix& Y, BlindLoop& loop,
                                const BeamspaceOperator& op,
                                const ReceiverOptions& opts, bool adapt) {
  PseudoObservation obs = mf_h_message(Y, loop.mf, opts.variance_floor);
  GStepOptions gopts;
  gopts.em_epsilon = adapt;
  gopts.em_nu = adapt && opts.nu_em;
  gopts.full_mixture_variance = opts.full_mixture_variance;
  gopts.variance_floor = opts.variance_floor;
  gopts.damping = opts.g_damping;
  g_step(obs.Q, obs.V, op, loop.g, gopts);
  HPosterior hp = combine_h_posterior(op, loop.g);
  RealMatrix xi = hp.Xi_H.cwiseMax(opts.variance_floor);
  if (opts.damping < 1.0) {
    loop.mf.H.mean = opts.damping * hp.H_hat + (1.0 - opts.damping) * loop.mf.H.mean;
    loop.mf.Xi_H = opts.damping * xi + (1.0 - opts.damping) * loop.mf.Xi_H;
  } else {
    loop.mf.H.mean = hp.H_hat;
    loop.mf.Xi_H = xi;
  }
  loop.mf.H.col_cov = loop.mf.Xi_H.colwise().mean();
  if (!all_finite(loop.mf.H.mean)) {
    throw DivergenceError("h_update: non-finite H estimate", loop.mf.iteration);
  }
}

}  // namespace

namespace {

// One pass of main-loop iterations over an existing state. Returns the number
// of iterations executed; throws DivergenceError on non-finite state.
int blind_iterations(const ComplexMatrix& Y, const BeamspaceOperator& op,
                     const DiscreteAlphabetPrior& alphabet, const ReceiverOptions& opts,
                     BlindLoop& loop, int max_iters) {
  const int rank_start = opts.rank_est_start_iter > 0
                             ? opts.rank_est_start_iter
                             : std::max(3, opts.warmup_iters);
  double last_change = std::numeric_limits<double>::infinity();
  int executed = 0;
  for (int t = 1; t <= max_iters; ++t) {
    if (t > std::max(1, opts.warmup_iters + 1) && last_change < opts.tol) break;
    const bool adapt = t > opts.warmup_iters;
    ComplexMatrix x_prev = loop.mf.X.mean;
    ComplexMatrix h_prev = loop.mf.H.mean;
    loop.mf.iteration = t;

    x_step_discrete(Y, loop, alphabet, opts, /*retune=*/t >= 2);
    h_update_through_beamspace(Y, loop, op, opts, adapt);
    if (adapt) {
      // the noise cannot exceed the total received power; this floor keeps a
      // mis-tracked residual from feeding back as a huge pseudo-noise
      double lambda_floor = std::max(
          opts.lambda_floor,
          0.5 * static_cast<double>(Y.size()) / std::max(Y.squaredNorm(), 1e-300));
      loop.mf.lambda_hat =
          update_noise_precision(Y, loop.mf, lambda_floor, opts.lambda_cap);
    }

    double dx = (loop.mf.X.mean - x_prev).norm() / std::max(x_prev.norm(), 1e-300);
    double dh = (loop.mf.H.mean - h_prev).norm() / std::max(h_prev.norm(), 1e-300);
    last_change = std::max(dx, dh);
    executed = t;

    if (!loop.rank_frozen && t >= rank_start && loop.N_hat >= 3) {
      RankEstimate est = estimate_active_count(loop.mf.H.mean, loop.N_hat);
      // The printed average-ratio rule fires rarely once the EM updates start
      // absorbing idle streams; a candidate that repeats as the largest gap in
      // consecutive iterations is accepted as well.
      const bool stable = est.n_hat >= 3 && est.n_hat == loop.last_candidate;
      loop.last_candidate = est.n_hat;
      if (est.accepted || stable) {
        loop.rank_frozen = true;
        if (est.n_hat < loop.N_hat) {
          loop.prune(est.n_hat);
          last_change = std::numeric_limits<double>::infinity();
        }
      }
    }
  }
  return executed;
}

// Mis-converged streams either carry the unexplained energy in the residual
// (confident wrong decisions, matched-filter energy far above the median) or
// hide it in split symbol posteriors (low decision confidence).
std::vector<Index> flag_misconverged(const ComplexMatrix& Y, const BlindLoop& loop) {
  ComplexMatrix resid = Y - loop.mf.H.mean * loop.mf.X.mean;
  std::vector<double> energy(static_cast<size_t>(loop.N_hat), 0.0);
  for (Index i = 0; i < loop.N_hat; ++i) {
    double hn = loop.mf.H.mean.col(i).squaredNorm();
    if (hn <= 0.0) continue;
    energy[static_cast<size_t>(i)] =
        (loop.mf.H.mean.col(i).adjoint() * resid).squaredNorm() / hn;
  }
  std::vector<double> sorted = energy;
  std::sort(sorted.begin(), sorted.end());
  double median = sorted[sorted.size() / 2];
  std::vector<Index> flagged;
  const Index L = loop.mf.X.mean.cols();
  for (Index i = 0; i < loop.N_hat; ++i) {
    bool bad = energy[static_cast<size_t>(i)] > 4.0 * median;
    if (!bad && !loop.beta.empty() && loop.beta[0].rows() == loop.N_hat) {
      double conf = 0.0;
      for (Index l = 0; l < L; ++l) {
        double mx = 0.0;
        for (const auto& b : loop.beta) mx = std::max(mx, b(i, l));
        conf += mx;
      }
      bad = conf / static_cast<double>(L) < 0.8;
    }
    if (bad) flagged.push_back(i);
  }
  return flagged;
}

}  // namespace

namespace {

struct BlindRunScore {
  size_t flags = 0;
  double residual = 0.0;
};

ReceiverOutput run_blind_once(const ComplexMatrix& Y, const BeamspaceOperator& op,
                              const DiscreteAlphabetPrior& alphabet,
                              const BernoulliGaussianPrior& bg_init,
                              const ReceiverOptions& opts, Rng& rng,
                              BlindRunScore* score) {
  const bool blind = !opts.known_N.has_value();
  const Index N0 = blind ? opts.N_max : *opts.known_N;
  if (blind && N0 < 3) throw ContractError("run_blind_uacesd: N_max must be >= 3");
  if (N0 < 1) throw ContractError("run_blind_uacesd: need at least one stream");

  BlindLoop loop;
  loop.N_hat = N0;
  loop.rank_frozen = !blind;
  ComplexMatrix H0 = sample_complex_gaussian(Y.rows(), N0, 0.0, 1.0, rng);
  double lambda0 = std::min((1.0 + opts.bootstrap_snr) *
                                static_cast<double>(Y.size()) /
                                std::max(Y.squaredNorm(), 1e-300),
                            opts.lambda_cap);
  loop.mf = make_mf_state(Y, N0, H0, lambda0);
  loop.g = make_g_step_state(op.F.cols(), N0, bg_init);
  loop.beta.assign(alphabet.symbols.size(), RealMatrix::Zero(N0, Y.cols()));

  int executed = 0;
  try {
    executed = blind_iterations(Y, op, alphabet, opts, loop, opts.max_iters);
  } catch (const DivergenceError&) {
    return finalize(loop, executed, true);
  }

  // Re-factorize streams whose residual energy betrays a bad local optimum.
  for (int round = 0; round < opts.repair_rounds; ++round) {
    if (loop.N_hat < 3) break;
    std::vector<Index> flagged = flag_misconverged(Y, loop);
    if (flagged.empty() || static_cast<Index>(flagged.size()) > loop.N_hat / 2) break;

    ComplexMatrix resid = Y - loop.mf.H.mean * loop.mf.X.mean;
    ComplexMatrix Y_def = resid;
    for (Index i : flagged) Y_def += loop.mf.H.mean.col(i) * loop.mf.X.mean.row(i);
    double before = resid.squaredNorm();

    ReceiverOptions subopts = opts;
    subopts.known_N = static_cast<Index>(flagged.size());
    subopts.repair_rounds = 0;
    subopts.max_iters = std::max(40, opts.max_iters / 2);
    ReceiverOutput sub;
    try {
      sub = run_blind_uacesd(Y_def, op, alphabet, bg_init, subopts, rng);
    } catch (const std::exception&) {
      break;
    }
    if (sub.diverged) continue;  // retry with a fresh random start
    double after = (Y_def - sub.H_hat * sub.X_hat).squaredNorm();
    if (!(after < 0.9 * before)) continue;

    for (size_t k = 0; k < flagged.size(); ++k) {
      const Index i = flagged[k];
      const Index s = static_cast<Index>(k);
      loop.mf.H.mean.col(i) = sub.H_hat.col(s);
      loop.mf.X.mean.row(i) = sub.X_hat.row(s);
      // symbol posterior variances consistent with the spliced means
      for (Index l = 0; l < loop.mf.X.mean.cols(); ++l) {
        double var = 0.0;
        for (size_t a = 0; a < alphabet.symbols.size(); ++a) {
          var += sub.symbol_posteriors[a](s, l) *
                 std::norm(alphabet.symbols[a] - sub.X_hat(s, l));
        }
        loop.mf.Xi_X(i, l) = std::max(var, opts.variance_floor);
      }
      loop.mf.Xi_H.col(i).setConstant(
          std::max(1.0 / (loop.mf.lambda_hat * static_cast<double>(Y.cols())),
                   opts.variance_floor));
      loop.mf.S_X.row(i).setZero();
      loop.mf.S_H.row(i).setZero();
      if (sub.G_hat.size() > 0) loop.g.G_hat.col(i) = sub.G_hat.col(s);
      loop.g.nu_g(i) = 1.0;
      if (loop.g.S_G.size() > 0) loop.g.S_G.col(i).setZero();
      for (size_t a = 0; a < loop.beta.size() && a < sub.symbol_posteriors.size(); ++a) {
        loop.beta[a].row(i) = sub.symbol_posteriors[a].row(s);
      }
    }
    loop.mf.H.col_cov = loop.mf.Xi_H.colwise().mean();
    loop.mf.X.row_cov = loop.mf.Xi_X.rowwise().mean();

    ReceiverOptions polish = opts;
    polish.warmup_iters = 2;
    try {
      executed += blind_iterations(Y, op, alphabet, polish, loop,
                                   opts.repair_polish_iters);
    } catch (const DivergenceError&) {
      return finalize(loop, executed, true);
    }
  }
  if (score) {
    score->flags = flag_misconverged(Y, loop).size();
    score->residual = (Y - loop.mf.H.mean * loop.mf.X.mean).squaredNorm();
  }
  return finalize(loop, executed, false);
}

}  // namespace

ReceiverOutput run_blind_uacesd(const ComplexMatrix& Y, const BeamspaceOperator& op,
                                const DiscreteAlphabetPrior& alphabet,
                                const BernoulliGaussianPrior& bg_init,
                                const ReceiverOptions& opts, Rng& rng) {
  if (!Y.allFinite()) throw ContractError("run_blind_uacesd: Y has non-finite entries");
  if (Y.rows() != op.F.rows()) {
    throw ContractError("run_blind_uacesd: Y rows do not match F");
  }
  ReceiverOutput best;
  BlindRunScore best_score;
  bool have = false;
  const int attempts = std::max(1, opts.restart_attempts);
  for (int a = 0; a < attempts; ++a) {
    BlindRunScore score;
    ReceiverOutput out = run_blind_once(Y, op, alphabet, bg_init, opts, rng, &score);
    bool better = !have ||
                  (!out.diverged &&
                   (best.diverged || score.flags < best_score.flags ||
                    (score.flags == best_score.flags &&
                     score.residual < best_score.residual)));
    if (better) {
      best = std::move(out);
      best_score = score;
      have = true;
    }
    if (!best.diverged && best_score.flags == 0) break;
  }
  return best;
}


namespace {

ReceiverOutput run_sd_detection(const ComplexMatrix& Y, const ComplexMatrix& H,
                                const RealVector& v_H,
                                const DiscreteAlphabetPrior& alphabet,
                                const ReceiverOptions& opts, double lambda_init) {
  BlindLoop loop;
  loop.N_hat = H.cols();
  loop.mf = make_mf_state(Y, H.cols(), H, lambda_init);
  loop.mf.H.col_cov = v_H;
  loop.mf.Xi_H = RealVector::Ones(Y.rows()) * v_H.transpose();
  loop.g = make_g_step_state(1, H.cols(), BernoulliGaussianPrior{0.5, 1.0});
  loop.g.G_hat.resize(0, 0);

  double last_change = std::numeric_limits<double>::infinity();
  int executed = 0;
  try {
    for (int t = 1; t <= opts.max_iters; ++t) {
      if (t >= 2 && last_change < opts.tol) break;
      ComplexMatrix x_prev = loop.mf.X.mean;
      loop.mf.iteration = t;
      x_step_discrete(Y, loop, alphabet, opts);
      loop.mf.lambda_hat =
          update_noise_precision(Y, loop.mf, opts.lambda_floor, opts.lambda_cap);
      last_change = (loop.mf.X.mean - x_prev).norm() / std::max(x_prev.norm(), 1e-300);
      executed = t;
    }
  } catch (const DivergenceError&) {
    ReceiverOutput out = finalize(loop, executed, true);
    out.H_hat = H;
    out.G_hat.resize(0, 0);
    return out;
  }
  ReceiverOutput out = finalize(loop, executed, false);
  out.H_hat = H;
  out.G_hat.resize(0, 0);
  return out;
}

}  // namespace

ReceiverOutput run_baseline(const ComplexMatrix& Y, BaselineMode mode,
                            const GenieData& genie, const BeamspaceOperator& op,
                            const DiscreteAlphabetPrior& alphabet,
                            const BernoulliGaussianPrior& bg_init,
                            const ReceiverOptions& opts, Rng& rng) {
  switch (mode) {
    case BaselineMode::blind_cesd: {
      if (!genie.N) throw ContractError("run_baseline: blind-cesd needs genie N");
      ReceiverOptions o = opts;
      o.known_N = genie.N;
      return run_blind_uacesd(Y, op, alphabet, bg_init, o, rng);
    }
    case BaselineMode::sd: {
      if (!genie.H) throw ContractError("run_baseline: sd needs genie H");
      double lambda0 = std::min((1.0 + opts.bootstrap_snr) *
                                    static_cast<double>(Y.size()) /
                                    std::max(Y.squaredNorm(), 1e-300),
                                opts.lambda_cap);
      return run_sd_detection(Y, *genie.H, RealVector::Zero(genie.H->cols()), alphabet,
                              opts, lambda0);
    }
    case BaselineMode::cesd: {
      if (!genie.N || !genie.X_pilot || !genie.Y_pilot) {
        throw ContractError("run_baseline: cesd needs genie N, X_pilot and Y_pilot");
      }
      const ComplexMatrix& Yp = *genie.Y_pilot;
      const ComplexMatrix& Xp = *genie.X_pilot;
      if (Xp.rows() != *genie.N || Yp.cols() != Xp.cols() || Yp.rows() != Y.rows()) {
        throw ContractError("run_baseline: pilot dimensions inconsistent");
      }

      // Phase 1: channel estimation through the beamspace prior with the
      // pilot frame known exactly (zero X variance).
      BlindLoop loop;
      loop.N_hat = *genie.N;
      ComplexMatrix H0 = sample_complex_gaussian(Yp.rows(), *genie.N, 0.0, 1.0, rng);
      double lambda0 = std::min((1.0 + opts.bootstrap_snr) *
                                    static_cast<double>(Yp.size()) /
                                    std::max(Yp.squaredNorm(), 1e-300),
                                opts.lambda_cap);
      loop.mf = make_mf_state(Yp, *genie.N, H0, lambda0);
      loop.mf.X.mean = Xp;
      loop.mf.Xi_X.setZero();
      loop.mf.X.row_cov.setZero();
      loop.g = make_g_step_state(op.F.cols(), *genie.N, bg_init);

      int executed = 0;
      double last_change = std::numeric_limits<double>::infinity();
      bool diverged = false;
      try {
        for (int t = 1; t <= opts.max_iters; ++t) {
          if (t > std::max(1, opts.warmup_iters + 1) && last_change < opts.tol) break;
          const bool adapt = t > opts.warmup_iters;
          ComplexMatrix h_prev = loop.mf.H.mean;
          loop.mf.iteration = t;
          h_update_through_beamspace(Yp, loop, op, opts, adapt);
          if (adapt) {
            loop.mf.lambda_hat = update_noise_precision(Yp, loop.mf, opts.lambda_floor,
                                                        opts.lambda_cap);
          }
          last_change =
              (loop.mf.H.mean - h_prev).norm() / std::max(h_prev.norm(), 1e-300);
          executed = t;
        }
      } catch (const DivergenceError&) {
        diverged = true;
      }

      // Phase 2: detection on the data frame with the estimated channel.
      ReceiverOutput out = run_sd_detection(Y, loop.mf.H.mean, loop.mf.H.col_cov,
                                            alphabet, opts, loop.mf.lambda_hat);
      out.G_hat = loop.g.G_hat;
      out.epsilon_hat = loop.g.epsilon;
      out.iterations += executed;
      out.diverged = out.diverged || diverged;
      return out;
    }
  }
  throw ContractError("run_baseline: unknown mode");
}

}  // namespace uacesd
