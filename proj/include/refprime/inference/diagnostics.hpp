#pragma once

#include <string>
#include <vector>

#include "refprime/inference/sampler.hpp"

namespace refprime {

struct ConvergenceDiag {
  double rhat = 0.0;
  double ess_bulk = 0.0;
};

// Split-chain rank-normalized R-hat and bulk effective sample size for one
// parameter. Needs >= 2 chains with >= 4 draws each.
ConvergenceDiag rhat_and_ess(const std::vector<std::vector<double>>& chains);

// Per-parameter diagnostics over all named parameters.
std::vector<ConvergenceDiag> rhat_and_ess(const PosteriorDraws& draws);

// Ratio of the kernel-density estimate at zero to the estimate at the mode
// (Gaussian kernel, Silverman bandwidth, direct summation), clipped to
// [0, 1]. Needs >= 1000 non-degenerate draws.
double p_map(const std::vector<double>& coefficient_draws);

struct CoefficientSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double rhat = 0.0;
  double ess_bulk = 0.0;
  double p_map = 0.0;
};

struct FitSummary {
  std::vector<CoefficientSummary> fixed;  // one row per fixed coefficient
  int pooled_draws = 0;
  int chains = 0;
  int divergences = 0;
  std::vector<std::string> warnings;
};

FitSummary summarize(const PosteriorDraws& draws);

// Central credible interval at the given mass for one pooled parameter.
std::pair<double, double> central_interval(std::vector<double> draws, double mass);

}  // namespace refprime
