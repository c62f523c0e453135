#include "refprime/validate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "refprime/errors.hpp"
#include "refprime/inference/diagnostics.hpp"
#include "refprime/inference/model.hpp"
#include "refprime/math/rng.hpp"
#include "refprime/math/special.hpp"

namespace refprime {

namespace {

DesignMatrix random_instance(Rng& rng) {
  DesignMatrix dm;
  dm.n = 5 + static_cast<int>(rng.below(26));
  dm.p = 1 + static_cast<int>(rng.below(3));
  dm.X.resize(static_cast<size_t>(dm.n) * dm.p);
  dm.y.resize(static_cast<size_t>(dm.n));
  for (int i = 0; i < dm.n; ++i) {
    dm.X[static_cast<size_t>(i) * dm.p] = 1.0;
    for (int j = 1; j < dm.p; ++j) dm.X[static_cast<size_t>(i) * dm.p + j] = rng.normal();
    dm.y[static_cast<size_t>(i)] = rng.bernoulli(0.5) ? 1 : 0;
    dm.row_participant.push_back("p");
    dm.row_item.push_back("i");
  }
  dm.col_names.push_back("Intercept");
  for (int j = 1; j < dm.p; ++j) dm.col_names.push_back("x" + std::to_string(j));
  int n_blocks = static_cast<int>(rng.below(3));
  const char* factors[2] = {"participant", "item"};
  for (int g = 0; g < n_blocks; ++g) {
    GroupBlock block;
    block.factor = factors[g % 2];
    block.correlated = rng.bernoulli(0.5);
    int q = 1 + static_cast<int>(rng.below(3));
    int m = 2 + static_cast<int>(rng.below(4));
    block.col_names.push_back("Intercept");
    for (int k = 1; k < q; ++k) block.col_names.push_back("s" + std::to_string(k));
    for (int lvl = 0; lvl < m; ++lvl) block.level_ids.push_back("l" + std::to_string(lvl));
    block.U.resize(static_cast<size_t>(dm.n) * q);
    block.row_level.resize(static_cast<size_t>(dm.n));
    for (int i = 0; i < dm.n; ++i) {
      block.row_level[static_cast<size_t>(i)] = static_cast<int>(rng.below(static_cast<uint64_t>(m)));
      block.U[static_cast<size_t>(i) * q] = 1.0;
      for (int k = 1; k < q; ++k) block.U[static_cast<size_t>(i) * q + k] = rng.normal();
    }
    dm.blocks.push_back(std::move(block));
  }
  return dm;
}

}  // namespace

GradientCheckResult gradient_check(int n_instances, uint64_t seed) {
  GradientCheckResult res;
  res.instances = n_instances;
  Rng rng(derive_seed(seed, "gradient"));
  const double h = 1e-5;
  for (int inst = 0; inst < n_instances; ++inst) {
    DesignMatrix dm = random_instance(rng);
    HierarchicalLogit model(dm, Priors{});
    std::vector<double> theta(static_cast<size_t>(model.dim()));
    for (auto& t : theta) t = 0.8 * rng.normal();
    std::vector<double> grad;
    model.log_posterior_grad(theta, grad);
    for (int k = 0; k < model.dim(); ++k) {
      std::vector<double> tp = theta, tm = theta;
      tp[static_cast<size_t>(k)] += h;
      tm[static_cast<size_t>(k)] -= h;
      double fd = (model.log_posterior(tp) - model.log_posterior(tm)) / (2.0 * h);
      double a = grad[static_cast<size_t>(k)];
      double rel = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
      res.max_rel_error = std::max(res.max_rel_error, rel);
      ++res.coordinates;
    }
  }
  res.pass = res.max_rel_error < 1e-4;
  return res;
}

std::pair<double, double> grid_posterior_means(const DesignMatrix& dm, const Priors& priors) {
  if (dm.p != 2 || !dm.blocks.empty()) {
    throw ValidationError("grid_posterior_means: only intercept+slope designs are supported");
  }
  HierarchicalLogit model(dm, priors);
  auto lp = [&](double b0, double b1) { return model.log_posterior({b0, b1}); };

  // Coarse scan for the posterior mode.
  double best0 = 0.0, best1 = 0.0, best = -1e300;
  for (double b0 = -6.0; b0 <= 6.0; b0 += 0.1) {
    for (double b1 = -6.0; b1 <= 6.0; b1 += 0.1) {
      double v = lp(b0, b1);
      if (v > best) {
        best = v;
        best0 = b0;
        best1 = b1;
      }
    }
  }
  // Dense grid over a wide box around the mode.
  const int grid = 601;
  const double span = 4.0;
  double sum_w = 0.0, sum0 = 0.0, sum1 = 0.0;
  for (int i = 0; i < grid; ++i) {
    double b0 = best0 - span + 2.0 * span * static_cast<double>(i) / (grid - 1);
    for (int j = 0; j < grid; ++j) {
      double b1 = best1 - span + 2.0 * span * static_cast<double>(j) / (grid - 1);
      double w = std::exp(lp(b0, b1) - best);
      sum_w += w;
      sum0 += w * b0;
      sum1 += w * b1;
    }
  }
  return {sum0 / sum_w, sum1 / sum_w};
}

GridOracleResult grid_oracle_check(uint64_t seed) {
  Rng rng(derive_seed(seed, "grid-oracle"));
  const int n = 50;
  const double true_intercept = -0.4, true_slope = 1.2;
  DesignMatrix dm;
  dm.n = n;
  dm.p = 2;
  dm.col_names = {"Intercept", "x"};
  dm.X.resize(static_cast<size_t>(n) * 2);
  dm.y.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    dm.X[static_cast<size_t>(i) * 2] = 1.0;
    dm.X[static_cast<size_t>(i) * 2 + 1] = x;
    dm.y[static_cast<size_t>(i)] = rng.bernoulli(logistic(true_intercept + true_slope * x)) ? 1 : 0;
    dm.row_participant.push_back("p");
    dm.row_item.push_back("i");
  }
  Priors priors;
  GridOracleResult res;
  std::tie(res.oracle_intercept, res.oracle_slope) = grid_posterior_means(dm, priors);

  SamplerConfig config;
  config.chains = 6;
  config.iterations = 4000;
  config.warmup = 1000;
  config.target_accept = 0.95;
  config.seed = derive_seed(seed, "grid-oracle-fit");
  PosteriorDraws draws = sample(dm, priors, config);
  res.pooled_draws = draws.total_draws();
  res.hmc_intercept = mean(draws.pooled(0));
  res.hmc_slope = mean(draws.pooled(1));
  res.max_abs_err = std::max(std::fabs(res.hmc_intercept - res.oracle_intercept),
                             std::fabs(res.hmc_slope - res.oracle_slope));
  res.pass = res.max_abs_err < 0.05 && res.pooled_draws == 18000;
  return res;
}

std::vector<TrialRecord> simulate_hierarchical_records(int n_participants, int n_items,
                                                       const std::vector<double>& beta,
                                                       uint64_t seed) {
  if (beta.size() != 4) {
    throw ConfigError("simulate_hierarchical_records: beta must have 4 entries");
  }
  if (n_items % 2 != 0) throw ConfigError("simulate_hierarchical_records: n_items must be even");
  Rng rng(derive_seed(seed, "hier-sim"));

  // Random-effect scales and correlation structure held fixed across
  // replications; moderate values at the published design scale.
  const std::vector<double> tau_item = {0.5, 0.25, 0.25, 0.25};
  const std::vector<double> tau_part = {0.5, 0.25};
  std::vector<double> L_item, L_part;
  cholesky_corr_from_unconstrained(std::vector<double>(6, 0.2), 4, L_item);
  cholesky_corr_from_unconstrained(std::vector<double>(1, 0.2), 2, L_part);

  auto draw_effects = [&](int m, int q, const std::vector<double>& tau, const std::vector<double>& L) {
    std::vector<double> b(static_cast<size_t>(m) * q, 0.0);
    for (int lvl = 0; lvl < m; ++lvl) {
      std::vector<double> z(static_cast<size_t>(q));
      for (auto& v : z) v = rng.normal();
      for (int k = 0; k < q; ++k) {
        double acc = 0.0;
        for (int l = 0; l <= k; ++l) acc += L[static_cast<size_t>(k) * q + l] * z[static_cast<size_t>(l)];
        b[static_cast<size_t>(lvl) * q + k] = tau[static_cast<size_t>(k)] * acc;
      }
    }
    return b;
  };
  std::vector<double> b_item = draw_effects(n_items, 4, tau_item, L_item);
  std::vector<double> b_part = draw_effects(n_participants, 2, tau_part, L_part);

  const double code_q[2] = {0.5, -0.5};       // subject, nonsubject focus
  const double code_p[2] = {0.51, -0.49};     // subject, nonsubject exposure

  std::vector<TrialRecord> records;
  records.reserve(static_cast<size_t>(n_participants) * n_items);
  for (int pi = 0; pi < n_participants; ++pi) {
    int cond = pi % 2;  // 0 = subject exposure
    std::vector<int> foci;
    for (int it = 0; it < n_items; ++it) foci.push_back(it < n_items / 2 ? 0 : 1);
    rng.shuffle(foci);
    for (int it = 0; it < n_items; ++it) {
      int focus = foci[static_cast<size_t>(it)];
      double qv = code_q[focus], pv = code_p[cond];
      double eta = beta[0] + beta[1] * qv + beta[2] * pv + beta[3] * qv * pv;
      const double* bi = &b_item[static_cast<size_t>(it) * 4];
      eta += bi[0] + bi[1] * qv + bi[2] * pv + bi[3] * qv * pv;
      const double* bp = &b_part[static_cast<size_t>(pi) * 2];
      eta += bp[0] + bp[1] * qv;
      int code = rng.bernoulli(logistic(eta)) ? 1 : 0;

      TrialRecord r;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "p%03d", pi + 1);
      r.participant_id = buf;
      std::snprintf(buf, sizeof(buf), "i%03d", it + 1);
      r.item_id = buf;
      r.phase = Phase::critical;
      r.verb_class = VerbClass::joint;
      r.exposure_condition = cond == 0 ? ExposureCondition::subject : ExposureCondition::nonsubject;
      r.ref_focus = focus == 0 ? QuestionFocus::subject : QuestionFocus::nonsubject;
      bool yes = (code == 1) == (focus == 0);
      r.content_raw = "Yes.";
      r.content_parsed = AnswerParse::yes;
      r.content_correct = true;
      r.ref_raw = yes ? "Yes." : "No.";
      r.ref_parsed = yes ? AnswerParse::yes : AnswerParse::no;
      r.referent_code = code;
      r.excluded = false;
      records.push_back(std::move(r));
    }
  }
  return records;
}

RecoveryResult recovery_check(int replications, uint64_t seed) {
  RecoveryResult res;
  res.replications = replications;
  const std::vector<double> beta_true = {0.2, 0.8, 0.8, -0.4};
  ExperimentModelBinding binding = model_spec_for(Experiment::e1a);
  res.coefficient_names = {"b_Intercept", "b_QtypeC", "b_PC", "b_QtypeC:PC"};
  res.covered.assign(4, 0);
  res.min_ess = 1e300;

  for (int rep = 0; rep < replications; ++rep) {
    uint64_t rep_seed = derive_seed(seed, "recovery", static_cast<uint64_t>(rep));
    std::vector<TrialRecord> records = simulate_hierarchical_records(24, 12, beta_true, rep_seed);
    DesignMatrix dm = build_design_matrix(records, binding.spec);
    SamplerConfig config;
    config.chains = 6;
    config.iterations = 4000;
    config.warmup = 1000;
    config.target_accept = 0.95;
    config.seed = derive_seed(rep_seed, "fit");
    PosteriorDraws draws = sample(dm, Priors{}, config);
    bool any_div = false;
    for (int d : draws.divergences) any_div = any_div || d > 0;
    if (any_div) ++res.divergent_reps;
    for (int k = 0; k < 4; ++k) {
      auto [lo, hi] = central_interval(draws.pooled(k), 0.90);
      if (beta_true[static_cast<size_t>(k)] >= lo && beta_true[static_cast<size_t>(k)] <= hi) {
        ++res.covered[static_cast<size_t>(k)];
      }
      ConvergenceDiag diag = rhat_and_ess(draws.by_chain(k));
      res.max_rhat = std::max(res.max_rhat, diag.rhat);
      res.min_ess = std::min(res.min_ess, diag.ess_bulk);
    }
  }
  int threshold = static_cast<int>(std::ceil(0.8 * replications));
  res.pass = res.max_rhat < 1.01 && res.min_ess > 400.0;
  for (int c : res.covered) res.pass = res.pass && c >= threshold;
  return res;
}

PmapCheckResult pmap_check(uint64_t seed) {
  PmapCheckResult res;
  Rng rng(derive_seed(seed, "pmap"));
  std::vector<double> symmetric(18000), shifted(18000);
  for (auto& v : symmetric) v = rng.normal();
  for (auto& v : shifted) v = 4.0 + rng.normal();
  res.symmetric_pmap = p_map(symmetric);
  res.shifted_pmap = p_map(shifted);
  res.shifted_oracle = std::exp(-8.0);  // N(4,1): density ratio at 0 vs mode
  res.pass = res.symmetric_pmap >= 0.9 && res.shifted_pmap < 0.001;
  return res;
}

LeveneResult levene_brute_force(const std::vector<std::vector<double>>& groups, LeveneCenter center) {
  // Literal translation of the W formula, kept naive on purpose.
  size_t k = groups.size();
  size_t N = 0;
  for (const auto& g : groups) N += g.size();
  std::vector<std::vector<double>> Z;
  for (const auto& g : groups) {
    double c;
    if (center == LeveneCenter::median) {
      std::vector<double> s = g;
      std::sort(s.begin(), s.end());
      c = s.size() % 2 == 1 ? s[s.size() / 2] : 0.5 * (s[s.size() / 2 - 1] + s[s.size() / 2]);
    } else {
      c = 0.0;
      for (double x : g) c += x;
      c /= static_cast<double>(g.size());
    }
    std::vector<double> z;
    for (double x : g) z.push_back(x >= c ? x - c : c - x);
    Z.push_back(z);
  }
  std::vector<double> zbar(k, 0.0);
  double grand = 0.0;
  for (size_t i = 0; i < k; ++i) {
    for (double v : Z[i]) zbar[i] += v;
    zbar[i] /= static_cast<double>(Z[i].size());
    for (double v : Z[i]) grand += v;
  }
  grand /= static_cast<double>(N);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < k; ++i) {
    num += static_cast<double>(Z[i].size()) * (zbar[i] - grand) * (zbar[i] - grand);
    for (double v : Z[i]) den += (v - zbar[i]) * (v - zbar[i]);
  }
  LeveneResult res;
  res.df1 = static_cast<double>(k - 1);
  res.df2 = static_cast<double>(N - k);
  res.w = (static_cast<double>(N - k) / static_cast<double>(k - 1)) * (num / den);
  res.p = reg_inc_beta(res.df2 / 2.0, res.df1 / 2.0, res.df2 / (res.df2 + res.df1 * res.w));
  return res;
}

LeveneCheckResult levene_check(uint64_t seed) {
  LeveneCheckResult res;
  Rng rng(derive_seed(seed, "levene"));
  for (int inst = 0; inst < 50; ++inst) {
    size_t k = 2 + rng.below(4);
    std::vector<std::vector<double>> groups;
    for (size_t i = 0; i < k; ++i) {
      size_t n = 5 + rng.below(36);
      double mu = rng.uniform(-2.0, 2.0);
      double sd = rng.uniform(0.5, 3.0);
      std::vector<double> g;
      for (size_t j = 0; j < n; ++j) g.push_back(mu + sd * rng.normal());
      groups.push_back(std::move(g));
    }
    for (LeveneCenter center : {LeveneCenter::median, LeveneCenter::mean}) {
      LeveneResult fast = levene_test(groups, center);
      LeveneResult slow = levene_brute_force(groups, center);
      res.max_w_err = std::max(res.max_w_err, std::fabs(fast.w - slow.w));
      res.max_p_err = std::max(res.max_p_err, std::fabs(fast.p - slow.p));
    }
  }
  std::vector<double> base = {1.0, 2.0, 3.0, 4.0, 5.0};
  LeveneResult identical = levene_test({base, base}, LeveneCenter::median);
  res.identical_w = identical.w;
  res.identical_p = identical.p;
  res.pass = res.max_w_err < 1e-10 && res.max_p_err < 1e-8 && res.identical_w == 0.0 &&
             res.identical_p == 1.0;
  return res;
}

bool ValidateReport::all_pass() const {
  if (gradient && !gradient->pass) return false;
  if (grid && !grid->pass) return false;
  if (recovery && !recovery->pass) return false;
  if (pmap && !pmap->pass) return false;
  if (levene && !levene->pass) return false;
  return gradient || grid || recovery || pmap || levene;
}

ValidateReport run_validation(const std::string& selector, uint64_t seed) {
  auto wants = [&](const std::string& name) {
    if (selector.empty() || selector == "all") return true;
    std::stringstream ss(selector);
    std::string token;
    while (std::getline(ss, token, ',')) {
      if (token == name) return true;
    }
    return false;
  };
  ValidateReport report;
  if (wants("gradient")) report.gradient = gradient_check(100, seed);
  if (wants("grid")) report.grid = grid_oracle_check(seed);
  if (wants("recovery")) report.recovery = recovery_check(20, seed);
  if (wants("pmap")) report.pmap = pmap_check(seed);
  if (wants("levene")) report.levene = levene_check(seed);
  return report;
}

std::string format_validation(const ValidateReport& r) {
  std::ostringstream out;
  char buf[256];
  if (r.gradient) {
    std::snprintf(buf, sizeof(buf),
                  "[%s] gradient: %d instances, %d coordinates, max relative error %.3e (< 1e-4)\n",
                  r.gradient->pass ? "PASS" : "FAIL", r.gradient->instances, r.gradient->coordinates,
                  r.gradient->max_rel_error);
    out << buf;
  }
  if (r.grid) {
    std::snprintf(buf, sizeof(buf),
                  "[%s] grid: |hmc - quadrature| = %.4f (< 0.05), pooled draws %d (= 18000)\n",
                  r.grid->pass ? "PASS" : "FAIL", r.grid->max_abs_err, r.grid->pooled_draws);
    out << buf;
  }
  if (r.recovery) {
    out << "[" << (r.recovery->pass ? "PASS" : "FAIL") << "] recovery: coverage";
    for (size_t i = 0; i < r.recovery->covered.size(); ++i) {
      out << " " << r.recovery->coefficient_names[i] << "=" << r.recovery->covered[i] << "/"
          << r.recovery->replications;
    }
    std::snprintf(buf, sizeof(buf), ", max R-hat %.4f (< 1.01), min bulk ESS %.0f (> 400)\n",
                  r.recovery->max_rhat, r.recovery->min_ess);
    out << buf;
  }
  if (r.pmap) {
    std::snprintf(buf, sizeof(buf),
                  "[%s] pmap: symmetric %.4f (>= 0.9), shifted %.2e (< 1e-3, oracle %.2e)\n",
                  r.pmap->pass ? "PASS" : "FAIL", r.pmap->symmetric_pmap, r.pmap->shifted_pmap,
                  r.pmap->shifted_oracle);
    out << buf;
  }
  if (r.levene) {
    std::snprintf(buf, sizeof(buf),
                  "[%s] levene: max |dW| %.2e (< 1e-10), max |dp| %.2e (< 1e-8), identical groups "
                  "W=%.1f p=%.1f\n",
                  r.levene->pass ? "PASS" : "FAIL", r.levene->max_w_err, r.levene->max_p_err,
                  r.levene->identical_w, r.levene->identical_p);
    out << buf;
  }
  return out.str();
}

}  // namespace refprime
