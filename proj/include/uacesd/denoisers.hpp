#ifndef UACESD_DENOISERS_HPP
#define UACESD_DENOISERS_HPP

#include <functional>
#include <optional>
#include <vector>

#include "uacesd/types.hpp"

namespace uacesd {

/// Discrete symbol prior (uniform by default), e.g. a QPSK alphabet.
struct DiscreteAlphabetPrior {
  std::vector<cdouble> symbols;
  std::vector<double> weights;  // empty means uniform

  /// Mean symbol energy, used for SNR bookkeeping.
  double mean_energy() const;
  void validate() const;

  /// Unit-modulus QPSK alphabet {1, j, -1, -j} (index a holds j^a).
  static DiscreteAlphabetPrior qpsk();
};

/// Spike-and-slab prior: (1-epsilon) * delta(g) + epsilon * CN(g; 0, nu).
struct BernoulliGaussianPrior {
  double epsilon = 0.1;
  double nu = 1.0;

  void validate() const;
};

/// Per-entry posterior means and variances under a scalar Gaussian
/// pseudo-observation model. aux carries the activation probabilities
/// for the Bernoulli-Gaussian prior.
struct DenoiseOutput {
  ComplexMatrix mean;
  RealMatrix variance;
  std::optional<RealMatrix> aux;
};

struct BgOptions {
  /// false: variance = pi^2 * nu_gamma (projection as published).
  /// true: full mixture variance pi*nu_gamma + pi*(1-pi)*|gamma|^2.
  bool full_mixture_variance = false;
};

DenoiseOutput denoise_discrete(const ComplexMatrix& Q, const RealMatrix& Vq,
                               const DiscreteAlphabetPrior& prior);

/// denoise_discrete plus the per-symbol posterior probabilities
/// (beta[a](n,l) = P(x_nl = alpha_a | q_nl)).
struct DiscreteDenoiseFull {
  DenoiseOutput out;
  std::vector<RealMatrix> beta;
};
DiscreteDenoiseFull denoise_discrete_full(const ComplexMatrix& Q, const RealMatrix& Vq,
                                          const DiscreteAlphabetPrior& prior);

DenoiseOutput denoise_bernoulli_gaussian(const ComplexMatrix& Q, const RealMatrix& Vq,
                                         const BernoulliGaussianPrior& prior,
                                         const BgOptions& opts = {});

/// EM update of the sparsity rate: mean of the activation probabilities,
/// clipped to [1e-6, 1-1e-6].
double em_update_sparsity(const RealMatrix& pi);

/// EM update of the slab variance: sum(pi*(|gamma|^2+nu_gamma)) / sum(pi).
double em_update_component_variance(const ComplexMatrix& Q, const RealMatrix& Vq,
                                    const BernoulliGaussianPrior& prior);

/// Named contract for the AMP identity tau_q * g'(q, tau_q) = posterior
/// variance; returns DenoiseOutput.variance of the corresponding denoiser.
RealMatrix denoiser_derivative(const DiscreteAlphabetPrior& prior, const ComplexMatrix& Q,
                               const RealMatrix& Vq);
RealMatrix denoiser_derivative(const BernoulliGaussianPrior& prior, const ComplexMatrix& Q,
                               const RealMatrix& Vq, const BgOptions& opts = {});

using Denoiser = std::function<DenoiseOutput(const ComplexMatrix&, const RealMatrix&)>;

Denoiser make_denoiser(DiscreteAlphabetPrior prior);
Denoiser make_denoiser(BernoulliGaussianPrior prior, BgOptions opts = {});

}  // namespace uacesd

#endif
