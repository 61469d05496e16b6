#include "uacesd/denoisers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uacesd {

namespace {

void check_pseudo_model(const ComplexMatrix& Q, const RealMatrix& Vq, const char* op) {
  if (Q.rows() != Vq.rows() || Q.cols() != Vq.cols()) {
    throw ContractError(std::string(op) + ": Q and Vq dimensions differ");
  }
  if (Q.size() == 0) {
    throw ContractError(std::string(op) + ": empty input");
  }
  if (!(Vq.minCoeff() > 0.0)) {
    throw ContractError(std::string(op) + ": pseudo-observation variances must be > 0");
  }
}

// Stable 1/(1+exp(-t)).
double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  double e = std::exp(t);
  return e / (1.0 + e);
}

struct BgEntryPosterior {
  double pi;
  cdouble gamma;
  double nu_gamma;
};

BgEntryPosterior bg_entry(cdouble q, double vq, double eps, double nu) {
  BgEntryPosterior p;
  p.gamma = q * (nu / (vq + nu));
  p.nu_gamma = vq * nu / (vq + nu);
  double q2 = std::norm(q);
  // log of eps*CN(q;0,vq+nu) and (1-eps)*CN(q;0,vq); the shared 1/pi cancels.
  double log_active = std::log(eps) - std::log(vq + nu) - q2 / (vq + nu);
  double log_zero = std::log1p(-eps) - std::log(vq) - q2 / vq;
  p.pi = sigmoid(log_active - log_zero);
  return p;
}

}  // namespace

double DiscreteAlphabetPrior::mean_energy() const {
  double e = 0.0;
  if (weights.empty()) {
    for (const auto& s : symbols) e += std::norm(s);
    return e / static_cast<double>(symbols.size());
  }
  for (size_t a = 0; a < symbols.size(); ++a) e += weights[a] * std::norm(symbols[a]);
  return e;
}

void DiscreteAlphabetPrior::validate() const {
  if (symbols.size() < 2) {
    throw ContractError("DiscreteAlphabetPrior: alphabet needs at least 2 symbols");
  }
  if (!weights.empty()) {
    if (weights.size() != symbols.size()) {
      throw ContractError("DiscreteAlphabetPrior: weights/symbols size mismatch");
    }
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw ContractError("DiscreteAlphabetPrior: negative weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ContractError("DiscreteAlphabetPrior: weights must sum to 1");
    }
  }
}

DiscreteAlphabetPrior DiscreteAlphabetPrior::qpsk() {
  DiscreteAlphabetPrior p;
  p.symbols = {cdouble(1, 0), cdouble(0, 1), cdouble(-1, 0), cdouble(0, -1)};
  return p;
}

void BernoulliGaussianPrior::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw ContractError("BernoulliGaussianPrior: epsilon must be in (0,1)");
  }
  if (!(nu > 0.0)) {
    throw ContractError("BernoulliGaussianPrior: nu must be > 0");
  }
}

DiscreteDenoiseFull denoise_discrete_full(const ComplexMatrix& Q, const RealMatrix& Vq,
                                          const DiscreteAlphabetPrior& prior) {
  check_pseudo_model(Q, Vq, "denoise_discrete");
  prior.validate();
  const size_t A = prior.symbols.size();
  std::vector<double> logw(A, 0.0);
  if (!prior.weights.empty()) {
    for (size_t a = 0; a < A; ++a) {
      logw[a] = prior.weights[a] > 0.0 ? std::log(prior.weights[a])
                                       : -std::numeric_limits<double>::infinity();
    }
  }

  DiscreteDenoiseFull full;
  full.out.mean.resize(Q.rows(), Q.cols());
  full.out.variance.resize(Q.rows(), Q.cols());
  full.beta.assign(A, RealMatrix(Q.rows(), Q.cols()));

  std::vector<double> logxi(A);
  for (Index j = 0; j < Q.cols(); ++j) {
    for (Index i = 0; i < Q.rows(); ++i) {
      const cdouble q = Q(i, j);
      const double vq = Vq(i, j);
      double m = -std::numeric_limits<double>::infinity();
      for (size_t a = 0; a < A; ++a) {
        logxi[a] = logw[a] - std::norm(prior.symbols[a] - q) / vq;
        m = std::max(m, logxi[a]);
      }
      double norm = 0.0;
      for (size_t a = 0; a < A; ++a) {
        logxi[a] = std::exp(logxi[a] - m);  // now beta numerators
        norm += logxi[a];
      }
      cdouble mean(0.0, 0.0);
      for (size_t a = 0; a < A; ++a) {
        logxi[a] /= norm;
        mean += prior.symbols[a] * logxi[a];
      }
      double var = 0.0;
      for (size_t a = 0; a < A; ++a) {
        var += logxi[a] * std::norm(prior.symbols[a] - mean);
        full.beta[a](i, j) = logxi[a];
      }
      full.out.mean(i, j) = mean;
      full.out.variance(i, j) = var;
    }
  }
  return full;
}

DenoiseOutput denoise_discrete(const ComplexMatrix& Q, const RealMatrix& Vq,
                               const DiscreteAlphabetPrior& prior) {
  return denoise_discrete_full(Q, Vq, prior).out;
}

DenoiseOutput denoise_bernoulli_gaussian(const ComplexMatrix& Q, const RealMatrix& Vq,
                                         const BernoulliGaussianPrior& prior,
                                         const BgOptions& opts) {
  check_pseudo_model(Q, Vq, "denoise_bernoulli_gaussian");
  prior.validate();
  DenoiseOutput out;
  out.mean.resize(Q.rows(), Q.cols());
  out.variance.resize(Q.rows(), Q.cols());
  RealMatrix pi(Q.rows(), Q.cols());
  for (Index j = 0; j < Q.cols(); ++j) {
    for (Index i = 0; i < Q.rows(); ++i) {
      BgEntryPosterior p = bg_entry(Q(i, j), Vq(i, j), prior.epsilon, prior.nu);
      pi(i, j) = p.pi;
      out.mean(i, j) = p.pi * p.gamma;
      if (opts.full_mixture_variance) {
        out.variance(i, j) =
            p.pi * p.nu_gamma + p.pi * (1.0 - p.pi) * std::norm(p.gamma);
      } else {
        out.variance(i, j) = p.pi * p.pi * p.nu_gamma;
      }
    }
  }
  out.aux = std::move(pi);
  return out;
}

double em_update_sparsity(const RealMatrix& pi) {
  if (pi.size() == 0) {
    throw ContractError("em_update_sparsity: empty matrix");
  }
  if (!(pi.minCoeff() >= 0.0) || !(pi.maxCoeff() <= 1.0)) {
    throw ContractError("em_update_sparsity: entries must lie in [0,1]");
  }
  double eps = pi.mean();
  return std::clamp(eps, 1e-6, 1.0 - 1e-6);
}

double em_update_component_variance(const ComplexMatrix& Q, const RealMatrix& Vq,
                                    const BernoulliGaussianPrior& prior) {
  check_pseudo_model(Q, Vq, "em_update_component_variance");
  prior.validate();
  double num = 0.0;
  double den = 0.0;
  for (Index j = 0; j < Q.cols(); ++j) {
    for (Index i = 0; i < Q.rows(); ++i) {
      BgEntryPosterior p = bg_entry(Q(i, j), Vq(i, j), prior.epsilon, prior.nu);
      num += p.pi * (std::norm(p.gamma) + p.nu_gamma);
      den += p.pi;
    }
  }
  if (den <= 1e-12) return prior.nu;
  return std::max(num / den, 1e-12);
}

RealMatrix denoiser_derivative(const DiscreteAlphabetPrior& prior, const ComplexMatrix& Q,
                               const RealMatrix& Vq) {
  return denoise_discrete(Q, Vq, prior).variance;
}

RealMatrix denoiser_derivative(const BernoulliGaussianPrior& prior, const ComplexMatrix& Q,
                               const RealMatrix& Vq, const BgOptions& opts) {
  return denoise_bernoulli_gaussian(Q, Vq, prior, opts).variance;
}

Denoiser make_denoiser(DiscreteAlphabetPrior prior) {
  prior.validate();
  return [prior = std::move(prior)](const ComplexMatrix& Q, const RealMatrix& Vq) {
    return denoise_discrete(Q, Vq, prior);
  };
}

Denoiser make_denoiser(BernoulliGaussianPrior prior, BgOptions opts) {
  prior.validate();
  return [prior, opts](const ComplexMatrix& Q, const RealMatrix& Vq) {
    return denoise_bernoulli_gaussian(Q, Vq, prior, opts);
  };
}

}  // namespace uacesd
