#include "refprime/inference/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "refprime/errors.hpp"
#include "refprime/math/special.hpp"

namespace refprime {

namespace {

// Pooled average ranks (ties averaged), then the normal-score transform.
std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& seqs) {
  size_t total = 0;
  for (const auto& s : seqs) total += s.size();
  struct Entry {
    double value;
    size_t seq, idx;
  };
  std::vector<Entry> entries;
  entries.reserve(total);
  for (size_t s = 0; s < seqs.size(); ++s) {
    for (size_t i = 0; i < seqs[s].size(); ++i) entries.push_back({seqs[s][i], s, i});
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.value < b.value; });
  std::vector<std::vector<double>> out(seqs.size());
  for (size_t s = 0; s < seqs.size(); ++s) out[s].resize(seqs[s].size());
  size_t i = 0;
  double n = static_cast<double>(total);
  while (i < entries.size()) {
    size_t j = i;
    while (j < entries.size() && entries[j].value == entries[i].value) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    double z = normal_quantile((avg_rank - 0.375) / (n + 0.25));
    for (size_t k = i; k < j; ++k) out[entries[k].seq][entries[k].idx] = z;
    i = j;
  }
  return out;
}

// Split each chain into halves.
std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
    out.emplace_back(c.begin() + static_cast<long>(c.size() - half), c.end());
  }
  return out;
}

struct Moments {
  double b_over_n;   // between-sequence variance / n
  double w;          // mean within-sequence variance
  double var_plus;   // pooled variance estimate
  std::vector<double> seq_mean;
  std::vector<double> seq_var;
};

Moments moments_of(const std::vector<std::vector<double>>& seqs) {
  Moments m;
  size_t M = seqs.size();
  size_t N = seqs[0].size();
  m.seq_mean.resize(M);
  m.seq_var.resize(M);
  for (size_t s = 0; s < M; ++s) {
    m.seq_mean[s] = mean(seqs[s]);
    m.seq_var[s] = sample_variance(seqs[s]);
  }
  double grand = std::accumulate(m.seq_mean.begin(), m.seq_mean.end(), 0.0) / static_cast<double>(M);
  double b = 0.0;
  for (double mu : m.seq_mean) b += (mu - grand) * (mu - grand);
  m.b_over_n = b / static_cast<double>(M - 1);  // = B/N in the usual notation
  m.w = std::accumulate(m.seq_var.begin(), m.seq_var.end(), 0.0) / static_cast<double>(M);
  m.var_plus = (static_cast<double>(N - 1) / static_cast<double>(N)) * m.w + m.b_over_n;
  return m;
}

// Bulk ESS via Geyer's initial monotone positive sequence over the
// multi-chain autocorrelation estimate.
double ess_of(const std::vector<std::vector<double>>& seqs) {
  size_t M = seqs.size();
  size_t N = seqs[0].size();
  Moments m = moments_of(seqs);
  if (m.var_plus <= 0.0) return std::numeric_limits<double>::quiet_NaN();

  // Autocovariance at lag t for one sequence (biased, 1/N normalization).
  auto acov = [&](const std::vector<double>& s, double mu, size_t t) {
    double acc = 0.0;
    for (size_t i = 0; i + t < s.size(); ++i) acc += (s[i] - mu) * (s[i + t] - mu);
    return acc / static_cast<double>(s.size());
  };

  double tau = 1.0;  // sum starts with rho_0 contributions folded below
  double prev_pair = std::numeric_limits<double>::infinity();
  double rho_sum = 0.0;
  size_t max_lag = N - 1;
  size_t t = 1;
  // rho_t = 1 - (W - mean_s acov_t(s)) / var_plus
  std::vector<double> rho(2, 0.0);
  while (t + 1 <= max_lag) {
    for (size_t k = 0; k < 2; ++k) {
      double mean_acov = 0.0;
      for (size_t s = 0; s < M; ++s) mean_acov += acov(seqs[s], m.seq_mean[s], t + k);
      mean_acov /= static_cast<double>(M);
      rho[k] = 1.0 - (m.w - mean_acov) / m.var_plus;
    }
    double pair = rho[0] + rho[1];
    if (pair < 0.0) break;
    if (pair > prev_pair) pair = prev_pair;  // enforce monotone decrease
    prev_pair = pair;
    rho_sum += pair;
    t += 2;
  }
  tau = 1.0 + 2.0 * rho_sum;
  double ess = static_cast<double>(M * N) / tau;
  return std::min(ess, static_cast<double>(M * N) * std::log10(static_cast<double>(M * N)));
}

}  // namespace

ConvergenceDiag rhat_and_ess(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw ValidationError("rhat_and_ess: need at least 2 chains");
  size_t len = chains[0].size();
  for (const auto& c : chains) {
    if (c.size() != len) throw ValidationError("rhat_and_ess: chains must have equal length");
  }
  if (len < 4) throw ValidationError("rhat_and_ess: need at least 4 draws per chain");

  auto split = split_chains(chains);
  bool all_constant = true;
  double first = split[0][0];
  for (const auto& s : split) {
    for (double v : s) {
      if (v != first) {
        all_constant = false;
        break;
      }
    }
    if (!all_constant) break;
  }
  ConvergenceDiag diag;
  if (all_constant) {
    diag.rhat = std::numeric_limits<double>::quiet_NaN();
    diag.ess_bulk = std::numeric_limits<double>::quiet_NaN();
    return diag;
  }
  auto normalized = rank_normalize(split);
  Moments m = moments_of(normalized);
  size_t N = normalized[0].size();
  if (m.w <= 0.0) {
    // Between-chain spread with zero within-chain variance.
    diag.rhat = std::numeric_limits<double>::infinity();
    diag.ess_bulk = std::numeric_limits<double>::quiet_NaN();
    return diag;
  }
  double var_hat = (static_cast<double>(N - 1) / static_cast<double>(N)) * m.w + m.b_over_n;
  diag.rhat = std::sqrt(var_hat / m.w);
  diag.ess_bulk = ess_of(normalized);
  return diag;
}

std::vector<ConvergenceDiag> rhat_and_ess(const PosteriorDraws& draws) {
  std::vector<ConvergenceDiag> out;
  out.reserve(draws.names.size());
  for (size_t p = 0; p < draws.names.size(); ++p) {
    out.push_back(rhat_and_ess(draws.by_chain(static_cast<int>(p))));
  }
  return out;
}

double p_map(const std::vector<double>& coefficient_draws) {
  if (coefficient_draws.size() < 1000) {
    throw ValidationError("p_map: need at least 1000 draws");
  }
  const size_t n = coefficient_draws.size();
  std::vector<double> sorted = coefficient_draws;
  std::sort(sorted.begin(), sorted.end());
  double sd = std::sqrt(sample_variance(coefficient_draws));
  double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  double spread = std::min(sd, iqr / 1.349);
  if (!(spread > 0.0)) throw ValidationError("p_map: degenerate (zero-variance) draws");
  double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);

  auto density_at = [&](double x) {
    double acc = 0.0;
    for (double d : coefficient_draws) {
      double u = (x - d) / h;
      acc += std::exp(-0.5 * u * u);
    }
    return acc / (static_cast<double>(n) * h * 2.506628274631000502);
  };

  constexpr int kGrid = 512;
  double lo = sorted.front() - 3.0 * h;
  double hi = sorted.back() + 3.0 * h;
  double best_x = lo, best_f = -1.0;
  for (int i = 0; i < kGrid; ++i) {
    double x = lo + (hi - lo) * static_cast<double>(i) / (kGrid - 1);
    double f = density_at(x);
    if (f > best_f) {
      best_f = f;
      best_x = x;
    }
  }
  (void)best_x;
  double f0 = density_at(0.0);
  double ratio = f0 / best_f;
  return std::clamp(ratio, 0.0, 1.0);
}

std::pair<double, double> central_interval(std::vector<double> draws, double mass) {
  if (draws.empty()) throw ValidationError("central_interval: no draws");
  std::sort(draws.begin(), draws.end());
  double tail = (1.0 - mass) / 2.0;
  return {quantile_sorted(draws, tail), quantile_sorted(draws, 1.0 - tail)};
}

FitSummary summarize(const PosteriorDraws& draws) {
  FitSummary fit;
  fit.pooled_draws = draws.total_draws();
  fit.chains = draws.chains;
  for (int d : draws.divergences) fit.divergences += d;
  fit.warnings = draws.warnings;
  for (int p = 0; p < draws.n_fixed; ++p) {
    CoefficientSummary row;
    row.name = draws.names[static_cast<size_t>(p)];
    std::vector<double> pooled = draws.pooled(p);
    row.mean = mean(pooled);
    row.sd = std::sqrt(sample_variance(pooled));
    auto [lo, hi] = central_interval(pooled, 0.95);
    row.q025 = lo;
    row.q975 = hi;
    ConvergenceDiag diag = rhat_and_ess(draws.by_chain(p));
    row.rhat = diag.rhat;
    row.ess_bulk = diag.ess_bulk;
    row.p_map = p_map(pooled);
    fit.fixed.push_back(std::move(row));
  }
  return fit;
}

}  // namespace refprime
