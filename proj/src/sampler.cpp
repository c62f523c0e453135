#include "refprime/inference/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

#include "refprime/errors.hpp"
#include "refprime/math/rng.hpp"

namespace refprime {

void validate_sampler_config(const SamplerConfig& c) {
  if (c.chains < 1) throw ConfigError("sampler: need at least 1 chain");
  if (c.warmup < 0 || c.warmup >= c.iterations) {
    throw ConfigError("sampler: warmup must be in [0, iterations)");
  }
  if (!(c.target_accept > 0.0 && c.target_accept < 1.0)) {
    throw ConfigError("sampler: target_accept must be in (0, 1)");
  }
  if (c.max_tree_depth < 1 || c.max_tree_depth > 16) {
    throw ConfigError("sampler: max_tree_depth must be in [1, 16]");
  }
  if (c.fixed_length && c.leapfrog_steps < 1) {
    throw ConfigError("sampler: leapfrog_steps must be >= 1");
  }
}

std::vector<double> PosteriorDraws::pooled(int param) const {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total_draws()));
  for (int c = 0; c < chains; ++c) {
    for (int d = 0; d < draws_per_chain; ++d) out.push_back(value(c, d, param));
  }
  return out;
}

std::vector<std::vector<double>> PosteriorDraws::by_chain(int param) const {
  std::vector<std::vector<double>> out(static_cast<size_t>(chains));
  for (int c = 0; c < chains; ++c) {
    out[static_cast<size_t>(c)].reserve(static_cast<size_t>(draws_per_chain));
    for (int d = 0; d < draws_per_chain; ++d) out[static_cast<size_t>(c)].push_back(value(c, d, param));
  }
  return out;
}

int PosteriorDraws::index_of(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  throw ValidationError("no parameter named " + name);
}

namespace {

struct PhasePoint {
  std::vector<double> theta;
  std::vector<double> momentum;
  std::vector<double> grad;
  double lp = 0.0;
};

// Shared per-chain machinery for both samplers.
class ChainRunner {
 public:
  ChainRunner(const HierarchicalLogit& model, const SamplerConfig& config, int chain_index)
      : model_(model),
        config_(config),
        rng_(derive_seed(config.seed, "chain", static_cast<uint64_t>(chain_index))),
        dim_(model.dim()),
        inv_metric_(static_cast<size_t>(model.dim()), 1.0) {}

  void run(double* out_values, double* out_lp, int* out_divergences, double* out_step_size);

 private:
  double joint(const PhasePoint& z) const {
    double kinetic = 0.0;
    for (int k = 0; k < dim_; ++k) {
      kinetic += inv_metric_[static_cast<size_t>(k)] * z.momentum[static_cast<size_t>(k)] *
                 z.momentum[static_cast<size_t>(k)];
    }
    return z.lp - 0.5 * kinetic;
  }

  void sample_momentum(PhasePoint& z) {
    for (int k = 0; k < dim_; ++k) {
      z.momentum[static_cast<size_t>(k)] = rng_.normal() / std::sqrt(inv_metric_[static_cast<size_t>(k)]);
    }
  }

  // One leapfrog step of size eps in place; returns false on a non-finite state.
  bool leapfrog(PhasePoint& z, double eps) {
    for (int k = 0; k < dim_; ++k) z.momentum[static_cast<size_t>(k)] += 0.5 * eps * z.grad[static_cast<size_t>(k)];
    for (int k = 0; k < dim_; ++k) {
      z.theta[static_cast<size_t>(k)] +=
          eps * inv_metric_[static_cast<size_t>(k)] * z.momentum[static_cast<size_t>(k)];
    }
    z.lp = model_.log_posterior_grad(z.theta, z.grad);
    if (!std::isfinite(z.lp)) return false;
    for (int k = 0; k < dim_; ++k) {
      if (!std::isfinite(z.grad[static_cast<size_t>(k)])) return false;
    }
    for (int k = 0; k < dim_; ++k) z.momentum[static_cast<size_t>(k)] += 0.5 * eps * z.grad[static_cast<size_t>(k)];
    return true;
  }

  double find_reasonable_epsilon(const PhasePoint& start) {
    double eps = 1.0;
    PhasePoint z = start;
    sample_momentum(z);
    double joint0 = joint(z);
    auto ratio_at = [&](double e) {
      PhasePoint trial = z;
      if (!leapfrog(trial, e)) return -1.0;
      double r = std::exp(joint(trial) - joint0);
      return std::isfinite(r) ? r : -1.0;
    };
    double ratio = ratio_at(eps);
    int guard = 0;
    while (ratio < 0.0 && ++guard < 60) {
      eps *= 0.5;
      ratio = ratio_at(eps);
    }
    if (ratio < 0.0) throw ValidationError("sampler: cannot find a stable step size");
    double dir = ratio > 0.5 ? 1.0 : -1.0;
    guard = 0;
    while (++guard < 100) {
      eps *= std::pow(2.0, dir);
      if (eps < 1e-10 || eps > 1e10) break;
      ratio = ratio_at(eps);
      if (ratio < 0.0) {
        if (dir > 0) {
          eps *= 0.5;
          break;
        }
        continue;
      }
      if ((dir > 0 && ratio <= 0.5) || (dir < 0 && ratio >= 0.5)) break;
    }
    return std::clamp(eps, 1e-10, 1e10);
  }

  struct TreeResult {
    PhasePoint minus;  // backward end of the subtree
    PhasePoint plus;   // forward end
    PhasePoint proposal;
    double n_valid = 0.0;
    bool stop = false;
    bool divergent = false;
    double sum_alpha = 0.0;
    int n_alpha = 0;
  };

  bool no_uturn(const PhasePoint& minus, const PhasePoint& plus) const {
    double dot_minus = 0.0, dot_plus = 0.0;
    for (int k = 0; k < dim_; ++k) {
      double d = plus.theta[static_cast<size_t>(k)] - minus.theta[static_cast<size_t>(k)];
      dot_minus += d * inv_metric_[static_cast<size_t>(k)] * minus.momentum[static_cast<size_t>(k)];
      dot_plus += d * inv_metric_[static_cast<size_t>(k)] * plus.momentum[static_cast<size_t>(k)];
    }
    return dot_minus >= 0.0 && dot_plus >= 0.0;
  }

  // Doubling subtree grown from `start` in direction dir.
  TreeResult build_tree(const PhasePoint& start, double log_u, int dir, int depth, double joint0,
                        double eps) {
    if (depth == 0) {
      TreeResult res;
      PhasePoint z = start;
      bool ok = leapfrog(z, dir * eps);
      double j = ok ? joint(z) : -std::numeric_limits<double>::infinity();
      res.minus = z;
      res.plus = z;
      res.proposal = std::move(z);
      res.n_valid = (ok && log_u <= j) ? 1.0 : 0.0;
      res.divergent = !ok || log_u > j + 1000.0;
      res.stop = res.divergent;
      res.sum_alpha = ok ? std::exp(std::min(0.0, j - joint0)) : 0.0;
      res.n_alpha = 1;
      return res;
    }
    TreeResult first = build_tree(start, log_u, dir, depth - 1, joint0, eps);
    if (first.stop) return first;
    const PhasePoint& edge = dir > 0 ? first.plus : first.minus;
    TreeResult second = build_tree(edge, log_u, dir, depth - 1, joint0, eps);

    TreeResult res;
    res.minus = dir > 0 ? first.minus : second.minus;
    res.plus = dir > 0 ? second.plus : first.plus;
    double total = first.n_valid + second.n_valid;
    res.proposal = first.proposal;
    if (second.n_valid > 0.0 && rng_.uniform01() < second.n_valid / total) {
      res.proposal = second.proposal;
    }
    res.n_valid = total;
    res.sum_alpha = first.sum_alpha + second.sum_alpha;
    res.n_alpha = first.n_alpha + second.n_alpha;
    res.divergent = first.divergent || second.divergent;
    res.stop = second.stop || !no_uturn(res.minus, res.plus);
    return res;
  }

  // One no-U-turn transition; returns the average acceptance statistic.
  double transition_nuts(PhasePoint& current, double eps, bool* divergent) {
    sample_momentum(current);
    double joint0 = joint(current);
    double log_u = joint0 - rng_.exponential();
    PhasePoint minus = current, plus = current;
    PhasePoint proposal = current;
    double n_valid = 1.0;
    double sum_alpha = 0.0;
    int n_alpha = 0;
    *divergent = false;
    for (int depth = 0; depth < config_.max_tree_depth; ++depth) {
      int dir = rng_.bernoulli(0.5) ? 1 : -1;
      TreeResult sub = build_tree(dir > 0 ? plus : minus, log_u, dir, depth, joint0, eps);
      if (dir > 0) {
        plus = sub.plus;
      } else {
        minus = sub.minus;
      }
      sum_alpha += sub.sum_alpha;
      n_alpha += sub.n_alpha;
      if (sub.divergent) *divergent = true;
      if (!sub.stop && rng_.uniform01() < sub.n_valid / n_valid) proposal = sub.proposal;
      n_valid += sub.n_valid;
      if (sub.stop || !no_uturn(minus, plus)) break;
    }
    current = std::move(proposal);
    return n_alpha > 0 ? sum_alpha / n_alpha : 0.0;
  }

  double transition_static(PhasePoint& current, double eps, bool* divergent) {
    sample_momentum(current);
    double joint0 = joint(current);
    PhasePoint trial = current;
    bool ok = true;
    for (int step = 0; step < config_.leapfrog_steps && ok; ++step) ok = leapfrog(trial, eps);
    double j = ok ? joint(trial) : -std::numeric_limits<double>::infinity();
    double alpha = ok ? std::exp(std::min(0.0, j - joint0)) : 0.0;
    *divergent = !ok || (joint0 - j) > 1000.0;
    if (ok && rng_.uniform01() < alpha) current = trial;
    return alpha;
  }

  const HierarchicalLogit& model_;
  const SamplerConfig& config_;
  Rng rng_;
  int dim_;
  std::vector<double> inv_metric_;
};

void ChainRunner::run(double* out_values, double* out_lp, int* out_divergences,
                      double* out_step_size) {
  // Initial point: uniform(-2, 2) on the unconstrained scale, retried until
  // the target density is finite there.
  PhasePoint current;
  current.theta.resize(static_cast<size_t>(dim_));
  current.momentum.resize(static_cast<size_t>(dim_));
  current.grad.resize(static_cast<size_t>(dim_));
  bool initialized = false;
  for (int attempt = 0; attempt < 100 && !initialized; ++attempt) {
    for (int k = 0; k < dim_; ++k) current.theta[static_cast<size_t>(k)] = rng_.uniform(-2.0, 2.0);
    current.lp = model_.log_posterior_grad(current.theta, current.grad);
    initialized = std::isfinite(current.lp);
    if (initialized) {
      for (int k = 0; k < dim_; ++k) {
        if (!std::isfinite(current.grad[static_cast<size_t>(k)])) {
          throw ValidationError("sampler: non-finite gradient for parameter " +
                                model_.coordinate_names()[static_cast<size_t>(k)] +
                                " at the initial point");
        }
      }
    }
  }
  if (!initialized) throw ValidationError("sampler: failed to find a finite starting point");

  const int warmup = config_.warmup;
  const int total = config_.iterations;
  const double delta = config_.target_accept;

  // Adaptation schedule (fast, doubling slow windows, fast).
  int init_buffer = 75, term_buffer = 50, base_window = 25;
  bool adapt_metric = warmup >= init_buffer + term_buffer + base_window;
  int window_start = init_buffer;
  int window_end = adapt_metric ? init_buffer + base_window : warmup;
  int window_size = base_window;
  std::vector<double> welford_mean(static_cast<size_t>(dim_), 0.0);
  std::vector<double> welford_m2(static_cast<size_t>(dim_), 0.0);
  long welford_n = 0;
  auto welford_reset = [&]() {
    std::fill(welford_mean.begin(), welford_mean.end(), 0.0);
    std::fill(welford_m2.begin(), welford_m2.end(), 0.0);
    welford_n = 0;
  };
  auto welford_add = [&](const std::vector<double>& x) {
    ++welford_n;
    for (int k = 0; k < dim_; ++k) {
      double d = x[static_cast<size_t>(k)] - welford_mean[static_cast<size_t>(k)];
      welford_mean[static_cast<size_t>(k)] += d / static_cast<double>(welford_n);
      welford_m2[static_cast<size_t>(k)] += d * (x[static_cast<size_t>(k)] - welford_mean[static_cast<size_t>(k)]);
    }
  };

  double eps = find_reasonable_epsilon(current);
  double mu = std::log(10.0 * eps);
  double log_eps_bar = 0.0;
  double h_bar = 0.0;
  long da_m = 0;
  constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;
  auto da_restart = [&]() {
    mu = std::log(10.0 * eps);
    log_eps_bar = 0.0;
    h_bar = 0.0;
    da_m = 0;
  };
  auto da_update = [&](double alpha) {
    ++da_m;
    double md = static_cast<double>(da_m);
    h_bar = (1.0 - 1.0 / (md + kT0)) * h_bar + (delta - alpha) / (md + kT0);
    double log_eps = mu - std::sqrt(md) / kGamma * h_bar;
    double w = std::pow(md, -kKappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
    eps = std::exp(log_eps);
  };

  int divergences = 0;
  const int n_natural = model_.n_natural();
  int draw_index = 0;
  for (int iter = 0; iter < total; ++iter) {
    bool divergent = false;
    double alpha = config_.fixed_length ? transition_static(current, eps, &divergent)
                                        : transition_nuts(current, eps, &divergent);
    bool in_warmup = iter < warmup;
    if (in_warmup) {
      da_update(alpha);
      if (adapt_metric && iter >= window_start && iter < warmup - term_buffer) {
        welford_add(current.theta);
      }
      if (adapt_metric && iter + 1 == window_end) {
        if (welford_n >= 5) {
          double nn = static_cast<double>(welford_n);
          for (int k = 0; k < dim_; ++k) {
            double var = welford_m2[static_cast<size_t>(k)] / (nn - 1.0);
            inv_metric_[static_cast<size_t>(k)] = nn / (nn + 5.0) * var + 1e-3 * (5.0 / (nn + 5.0));
          }
        }
        welford_reset();
        window_size *= 2;
        window_start = window_end;
        window_end = window_end + window_size;
        if (window_end + 2 * window_size > warmup - term_buffer) window_end = warmup - term_buffer;
        if (window_start >= warmup - term_buffer) adapt_metric = false;
        eps = find_reasonable_epsilon(current);
        da_restart();
      }
      if (iter + 1 == warmup) eps = std::exp(log_eps_bar);
    } else {
      if (divergent) ++divergences;
      model_.natural_values(current.theta,
                            out_values + static_cast<size_t>(draw_index) * n_natural);
      out_lp[draw_index] = current.lp;
      ++draw_index;
    }
  }
  *out_divergences = divergences;
  *out_step_size = eps;
}

}  // namespace

PosteriorDraws sample(const HierarchicalLogit& model, const SamplerConfig& config) {
  validate_sampler_config(config);
  PosteriorDraws draws;
  draws.chains = config.chains;
  draws.draws_per_chain = config.iterations - config.warmup;
  draws.names = model.natural_names();
  draws.n_fixed = model.n_fixed();
  draws.values.assign(static_cast<size_t>(draws.chains) * draws.draws_per_chain * draws.names.size(), 0.0);
  draws.lp.assign(static_cast<size_t>(draws.chains) * draws.draws_per_chain, 0.0);
  draws.divergences.assign(static_cast<size_t>(draws.chains), 0);
  draws.step_sizes.assign(static_cast<size_t>(draws.chains), 0.0);

  int n_threads = config.threads > 0 ? config.threads
                                     : static_cast<int>(std::thread::hardware_concurrency());
  if (n_threads < 1) n_threads = 1;
  n_threads = std::min(n_threads, config.chains);

  std::vector<std::exception_ptr> errors(static_cast<size_t>(config.chains));
  auto run_chain = [&](int c) {
    try {
      ChainRunner runner(model, config, c);
      runner.run(&draws.values[static_cast<size_t>(c) * draws.draws_per_chain * draws.names.size()],
                 &draws.lp[static_cast<size_t>(c) * draws.draws_per_chain],
                 &draws.divergences[static_cast<size_t>(c)],
                 &draws.step_sizes[static_cast<size_t>(c)]);
    } catch (...) {
      errors[static_cast<size_t>(c)] = std::current_exception();
    }
  };
  if (n_threads == 1) {
    for (int c = 0; c < config.chains; ++c) run_chain(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < n_threads; ++t) {
      pool.emplace_back([&]() {
        while (true) {
          int c = next.fetch_add(1);
          if (c >= config.chains) return;
          run_chain(c);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  int total_div = 0;
  for (int d : draws.divergences) total_div += d;
  double div_rate = static_cast<double>(total_div) /
                    static_cast<double>(std::max(1, draws.total_draws()));
  if (div_rate > config.divergence_warn_rate) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "divergence rate %.4f exceeds threshold %.4f; interpret tail quantiles with care",
                  div_rate, config.divergence_warn_rate);
    draws.warnings.push_back(buf);
  }
  return draws;
}

PosteriorDraws sample(const DesignMatrix& dm, const Priors& priors, const SamplerConfig& config) {
  HierarchicalLogit model(dm, priors);
  return sample(model, config);
}

void write_draws_csv(const std::string& path, const PosteriorDraws& draws) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open draws file for writing: " + path);
  out << "chain,draw,parameter,value\n";
  char buf[64];
  for (int c = 0; c < draws.chains; ++c) {
    for (int d = 0; d < draws.draws_per_chain; ++d) {
      for (size_t pidx = 0; pidx < draws.names.size(); ++pidx) {
        std::snprintf(buf, sizeof(buf), "%.9g", draws.value(c, d, static_cast<int>(pidx)));
        out << c + 1 << ',' << d + 1 << ',' << draws.names[pidx] << ',' << buf << '\n';
      }
    }
  }
}

}  // namespace refprime
