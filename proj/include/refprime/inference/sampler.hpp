#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "refprime/inference/model.hpp"

namespace refprime {

struct SamplerConfig {
  int chains = 6;
  int iterations = 4000;  // total, including warmup
  int warmup = 1000;
  double target_accept = 0.95;
  int max_tree_depth = 10;
  uint64_t seed = 0;
  bool fixed_length = false;  // static-trajectory fallback instead of tree doubling
  int leapfrog_steps = 32;    // only used when fixed_length
  double divergence_warn_rate = 0.05;
  int threads = 0;  // 0 = hardware concurrency
};

void validate_sampler_config(const SamplerConfig& config);

// Post-warmup draws on the natural scale (coefficients, sds, correlations,
// standardized offsets), organized chain-major.
struct PosteriorDraws {
  int chains = 0;
  int draws_per_chain = 0;
  std::vector<std::string> names;
  int n_fixed = 0;  // leading names are the fixed coefficients
  std::vector<double> values;  // chains x draws_per_chain x names
  std::vector<double> lp;      // chains x draws_per_chain
  std::vector<int> divergences;        // per chain
  std::vector<double> step_sizes;      // per chain, post-adaptation
  std::vector<std::string> warnings;

  int total_draws() const { return chains * draws_per_chain; }
  double value(int chain, int draw, int param) const {
    return values[(static_cast<size_t>(chain) * draws_per_chain + draw) * names.size() + param];
  }
  // All chains pooled, draw-major within chain.
  std::vector<double> pooled(int param) const;
  // Per-chain series for one parameter.
  std::vector<std::vector<double>> by_chain(int param) const;
  int index_of(const std::string& name) const;
};

// Runs config.chains independent Hamiltonian chains against the model and
// pools their post-warmup draws. Deterministic given (data, priors, config).
PosteriorDraws sample(const DesignMatrix& dm, const Priors& priors, const SamplerConfig& config);
PosteriorDraws sample(const HierarchicalLogit& model, const SamplerConfig& config);

void write_draws_csv(const std::string& path, const PosteriorDraws& draws);

}  // namespace refprime
