#ifndef UACESD_RECEIVER_HPP
#define UACESD_RECEIVER_HPP

#include <optional>
#include <vector>

#include "uacesd/denoisers.hpp"
#include "uacesd/linalg.hpp"
#include "uacesd/types.hpp"
#include "uacesd/uamp_mf.hpp"

namespace uacesd {

/// Precomputed quantities of the known beamspace dictionary F (M×K, K > M).
struct BeamspaceOperator {
  ComplexMatrix F;       // M×K
  ComplexMatrix U_F;     // M×M left singular vectors
  RealVector lambda_F;   // (Lambda_F Lambda_F^H) 1, length M
  ComplexMatrix Phi_G;   // U_F^H F, M×K
  RealMatrix abs_UF2;    // |U_F|^2
};

BeamspaceOperator make_beamspace_operator(const ComplexMatrix& F);

/// State of the beamspace G estimation (Sub-graph II).
struct GStepState {
  ComplexMatrix G_hat;  // K×N posterior means
  RealVector nu_g;      // per-column variance (columns of V_G are constant)
  ComplexMatrix S_G;    // M×N Onsager memory
  RealMatrix pi;        // K×N activation probabilities
  double tau = 1.0;     // homogenized precision of the pseudo model
  double epsilon = 0.1;
  double nu = 1.0;
  // Cached by g_step for the H-posterior combination.
  ComplexMatrix R_G;   // M×N
  RealMatrix V_PG;     // M×N
  ComplexMatrix P_G;   // M×N
  int iteration = 0;
};

GStepState make_g_step_state(Index K, Index N, const BernoulliGaussianPrior& prior);

struct GStepOptions {
  bool em_epsilon = true;
  bool em_nu = true;
  bool full_mixture_variance = false;
  double variance_floor = 1e-12;
  double damping = 1.0;  // blend factor on the posterior mean/variance update
};

/// Algorithm lines 9-19: treats the decoupled H message (Q_H M×N with
/// per-entry variances V_QH) as a pseudo observation Q_H = F G + W_H, runs a
/// UAMPv2-style sweep through the dictionary, applies the Bernoulli-Gaussian
/// projection and the EM updates of epsilon (and optionally nu).
void g_step(const ComplexMatrix& Q_H, const RealMatrix& V_QH,
            const BeamspaceOperator& op, GStepState& state,
            const GStepOptions& opts = {});

struct HPosterior {
  ComplexMatrix H_hat;  // M×N
  RealMatrix Xi_H;      // M×N per-entry variances
  RealVector v_H;       // column-averaged variances, length N
};

/// Algorithm lines 20-22: per-entry product of the pseudo-observation
/// R_G (precision tau) with the dictionary-side prediction (P_G, V_PG),
/// rotated back through U_F.
HPosterior combine_h_posterior(const BeamspaceOperator& op, const GStepState& state);

struct RankEstimate {
  bool accepted = false;
  Index n_hat = 0;
};

/// Largest-gap rank detection on the singular values of H_hat; a candidate is
/// accepted when its gap ratio exceeds the printed average-ratio rule, which
/// requires the candidate index to be at least 3.
RankEstimate estimate_active_count(const ComplexMatrix& H_hat, Index current_N);
RankEstimate estimate_active_count_from_singulars(const RealVector& sigma);

/// Keeps the n_hat channel columns with the largest Euclidean norms and
/// slices every paired belief (X rows, G columns, activation probabilities,
/// symbol posteriors) consistently; Onsager memories are reset to zero.
/// n_hat >= current N is a no-op.
void prune_to_rank(MfState& mf, GStepState& g, std::vector<RealMatrix>& symbol_posteriors,
                   Index n_hat);

struct ReceiverOptions {
  int max_iters = 100;
  double tol = 1e-6;
  double epsilon_init = 0.1;
  double nu_init = 1.0;
  bool nu_em = true;
  Index N_max = 0;  // 0: ceil(0.3 U) capped at min(M,L)-1, resolved by caller
  double damping = 1.0;
  double variance_floor = 1e-12;
  std::optional<Index> known_N;
  /// The blind factorization needs a bootstrap phase: for the first
  /// warmup_iters iterations the EM updates (epsilon, nu) and the noise
  /// precision stay frozen at their initial values, and lambda starts from an
  /// assumed bootstrap SNR instead of treating all received power as noise.
  int warmup_iters = 5;
  double bootstrap_snr = 100.0;  // lambda_init = (1+bootstrap_snr)*ML/|Y|^2
  int rank_est_start_iter = 0;   // 0 = auto: first iteration after the warm-up
  /// Damping of the beamspace posterior update; the coherent partial-DFT
  /// dictionary needs it for reliable support recovery.
  double g_damping = 0.5;
  /// Feedback variance of the G projection. The published pi^2*nu_gamma
  /// projection collapses the channel belief during the blind bootstrap, so
  /// the loop defaults to the mixture (MMSE) variance; the published form
  /// stays available for ablation.
  bool full_mixture_variance = true;
  /// Mis-converged streams (self-confirming rotated mixtures of user pairs)
  /// stand out by their matched-filter residual energy. Up to repair_rounds
  /// times, such streams are re-factorized on the deflated observation from a
  /// fresh random start and spliced back when the fit improves.
  int repair_rounds = 4;
  int repair_polish_iters = 20;
  /// When flagged streams survive every repair round, rerun the whole
  /// receiver from a fresh random start and keep the better fit.
  int restart_attempts = 2;
  double lambda_floor = 1e-12;
  double lambda_cap = 1e12;
};

struct ReceiverOutput {
  ComplexMatrix X_hat;                      // N_hat×L posterior symbol means
  std::vector<RealMatrix> symbol_posteriors;  // one N_hat×L matrix per symbol
  ComplexMatrix H_hat;                      // M×N_hat
  ComplexMatrix G_hat;                      // K×N_hat
  Index N_hat = 0;
  double lambda_hat = 0.0;
  double epsilon_hat = 0.0;
  int iterations = 0;
  bool diverged = false;
};

/// Full blind joint user-activity-detection / channel-estimation / signal-
/// detection loop. With opts.known_N the rank-estimation branch never runs.
ReceiverOutput run_blind_uacesd(const ComplexMatrix& Y, const BeamspaceOperator& op,
                                const DiscreteAlphabetPrior& alphabet,
                                const BernoulliGaussianPrior& bg_init,
                                const ReceiverOptions& opts, Rng& rng);

enum class BaselineMode { blind_cesd, cesd, sd };

struct GenieData {
  std::optional<Index> N;
  std::optional<ComplexMatrix> X_pilot;  // known pilot frame (N×L)
  std::optional<ComplexMatrix> Y_pilot;  // received pilot frame (M×L)
  std::optional<ComplexMatrix> H;        // true channel (M×N)
};

/// Genie-aided baselines: blind-cesd (known N), cesd (channel estimated from
/// a known pilot frame, then detection), sd (known channel, linear problem).
ReceiverOutput run_baseline(const ComplexMatrix& Y, BaselineMode mode,
                            const GenieData& genie, const BeamspaceOperator& op,
                            const DiscreteAlphabetPrior& alphabet,
                            const BernoulliGaussianPrior& bg_init,
                            const ReceiverOptions& opts, Rng& rng);

}  // namespace uacesd

#endif
