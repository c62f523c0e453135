#pragma once

#include <string>
#include <vector>

#include "refprime/inference/design.hpp"

namespace refprime {

struct Priors {
  double fixed_scale = 2.5;  // Cauchy(0, scale) on each fixed coefficient
  double sd_df = 3.0;        // half-Student-t(df, 0, scale) on random-effect sds
  double sd_scale = 2.5;
  double lkj_shape = 1.0;    // LKJ(shape) on each correlated block
};

// Bernoulli-logit mixed model on the unconstrained scale:
//   y_i ~ Bernoulli(logistic(x_i'beta + sum_g u_{g,i}' b_{g,level}))
//   b_{g,level} = diag(tau_g) L_g z_{g,level}   (non-centered)
//   tau = exp(log_tau); L from unconstrained partial correlations (tanh
//   stick-breaking), with the transform Jacobians folded into the target.
//
// Parameter vector layout: [beta | per block: log_tau, chol_raw, z].
class HierarchicalLogit {
 public:
  HierarchicalLogit(const DesignMatrix& dm, Priors priors);

  int dim() const { return dim_; }
  int n_fixed() const { return dm_->p; }
  const DesignMatrix& design() const { return *dm_; }
  const Priors& priors() const { return priors_; }

  // Names of unconstrained coordinates (used in sampler error messages).
  const std::vector<std::string>& coordinate_names() const { return coord_names_; }

  // Natural-scale parameters reported per draw: b_*, sd_*, cor_*, z_*.
  const std::vector<std::string>& natural_names() const { return natural_names_; }
  int n_natural() const { return static_cast<int>(natural_names_.size()); }
  void natural_values(const std::vector<double>& theta, double* out) const;

  double log_posterior(const std::vector<double>& theta) const;
  // Returns the log posterior and fills grad (size dim()).
  double log_posterior_grad(const std::vector<double>& theta, std::vector<double>& grad) const;

 private:
  struct BlockLayout {
    int lt_off;
    int y_off;  // -1 when the block has no correlation parameters
    int z_off;
    int q;
    int m;
    bool correlated;
    int n_y() const { return y_off < 0 ? 0 : q * (q - 1) / 2; }
  };

  double evaluate(const std::vector<double>& theta, std::vector<double>* grad) const;

  const DesignMatrix* dm_;
  Priors priors_;
  std::vector<BlockLayout> layout_;
  int dim_ = 0;
  std::vector<std::string> coord_names_;
  std::vector<std::string> natural_names_;
};

// Convenience wrapper matching the one-shot operation signature.
std::pair<double, std::vector<double>> log_posterior_and_gradient(const std::vector<double>& theta,
                                                                  const DesignMatrix& dm,
                                                                  const Priors& priors);

// Builds the lower Cholesky factor of a correlation matrix from
// unconstrained values (row-major free elements), as the sampler does.
// Exposed for tests and for simulation code.
void cholesky_corr_from_unconstrained(const std::vector<double>& y, int q, std::vector<double>& L);

}  // namespace refprime
