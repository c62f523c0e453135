#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "refprime/analysis.hpp"
#include "refprime/inference/sampler.hpp"

namespace refprime {

// Built-in oracle suites behind `validate`. Each suite returns its raw
// numbers so callers (CLI report, acceptance tests) apply the thresholds.

struct GradientCheckResult {
  int instances = 0;
  int coordinates = 0;
  double max_rel_error = 0.0;
  bool pass = false;  // max_rel_error < 1e-4
};

// Analytic gradients vs central finite differences (h = 1e-5) on random
// small hierarchical instances.
GradientCheckResult gradient_check(int n_instances, uint64_t seed);

struct GridOracleResult {
  double oracle_intercept = 0.0;
  double oracle_slope = 0.0;
  double hmc_intercept = 0.0;
  double hmc_slope = 0.0;
  double max_abs_err = 0.0;
  int pooled_draws = 0;
  bool pass = false;  // max_abs_err < 0.05 and pooled_draws == 18000
};

// Two-parameter logistic regression: sampler posterior means vs a dense-grid
// numerical-integration oracle.
GridOracleResult grid_oracle_check(uint64_t seed);

// Posterior means of an arbitrary design by 2-d grid quadrature; exposed for
// tests. Only valid for 2-parameter (intercept + slope) designs.
std::pair<double, double> grid_posterior_means(const DesignMatrix& dm, const Priors& priors);

struct RecoveryResult {
  int replications = 0;
  std::vector<std::string> coefficient_names;
  std::vector<int> covered;  // per coefficient, count of reps whose 90% interval covers truth
  double max_rhat = 0.0;
  double min_ess = 0.0;
  int divergent_reps = 0;
  bool pass = false;  // every coefficient covered in >= 0.8 of reps, rhat < 1.01, ess > 400
};

// Hierarchical simulation at published scale (24 participants x 12 items,
// correlated random intercepts and slopes) with seeded replications.
RecoveryResult recovery_check(int replications, uint64_t seed);

// Simulated records for one replication of the recovery protocol; also used
// by integration tests.
std::vector<TrialRecord> simulate_hierarchical_records(int n_participants, int n_items,
                                                       const std::vector<double>& beta,
                                                       uint64_t seed);

struct PmapCheckResult {
  double symmetric_pmap = 0.0;   // expected >= 0.9
  double shifted_pmap = 0.0;     // expected < 0.001
  double shifted_oracle = 0.0;   // analytic normal density ratio, ~3.4e-4
  bool pass = false;
};

PmapCheckResult pmap_check(uint64_t seed);

struct LeveneCheckResult {
  double max_w_err = 0.0;
  double max_p_err = 0.0;
  double identical_w = 0.0;
  double identical_p = 0.0;
  bool pass = false;  // errors under 1e-10 / 1e-8, identical groups give W=0, p=1
};

LeveneCheckResult levene_check(uint64_t seed);

// Direct-formula brute-force evaluation used as the Levene oracle.
LeveneResult levene_brute_force(const std::vector<std::vector<double>>& groups, LeveneCenter center);

struct ValidateReport {
  std::optional<GradientCheckResult> gradient;
  std::optional<GridOracleResult> grid;
  std::optional<RecoveryResult> recovery;
  std::optional<PmapCheckResult> pmap;
  std::optional<LeveneCheckResult> levene;
  bool all_pass() const;
};

// Selector: "all" or comma-separated subset of gradient,grid,recovery,pmap,levene.
ValidateReport run_validation(const std::string& selector, uint64_t seed);
std::string format_validation(const ValidateReport& report);

}  // namespace refprime
