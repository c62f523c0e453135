#include "refprime/inference/model.hpp"

#include <cmath>
#include <stdexcept>

#include "refprime/errors.hpp"
#include "refprime/math/special.hpp"

namespace refprime {

namespace {

constexpr double kLogPi = 1.1447298858494001741;
constexpr double kLogTwoPi = 1.8378770664093454836;

// log(1 - tanh(y)^2) without catastrophic cancellation.
double log1m_tanh2(double y) {
  double a = std::fabs(y);
  return 2.0 * (0.6931471805599453094 - a - std::log1p(std::exp(-2.0 * a)));
}

}  // namespace

void cholesky_corr_from_unconstrained(const std::vector<double>& y, int q, std::vector<double>& L) {
  if (static_cast<int>(y.size()) != q * (q - 1) / 2) {
    throw std::invalid_argument("cholesky_corr_from_unconstrained: wrong size");
  }
  L.assign(static_cast<size_t>(q) * q, 0.0);
  L[0] = 1.0;
  size_t idx = 0;
  for (int i = 1; i < q; ++i) {
    double rem = 1.0;
    for (int j = 0; j < i; ++j) {
      double z = std::tanh(y[idx++]);
      double l = z * std::sqrt(rem);
      L[static_cast<size_t>(i) * q + j] = l;
      rem -= l * l;
      if (rem < 1e-16) rem = 1e-16;
    }
    L[static_cast<size_t>(i) * q + i] = std::sqrt(rem);
  }
}

HierarchicalLogit::HierarchicalLogit(const DesignMatrix& dm, Priors priors)
    : dm_(&dm), priors_(priors) {
  if (dm.n <= 0) throw ValidationError("model: empty design matrix");
  int off = dm.p;
  for (int j = 0; j < dm.p; ++j) {
    coord_names_.push_back("b_" + dm.col_names[static_cast<size_t>(j)]);
    natural_names_.push_back("b_" + dm.col_names[static_cast<size_t>(j)]);
  }
  for (const auto& block : dm.blocks) {
    BlockLayout lay;
    lay.q = block.q();
    lay.m = block.m();
    lay.correlated = block.correlated && lay.q > 1;
    lay.lt_off = off;
    off += lay.q;
    lay.y_off = -1;
    if (lay.correlated) {
      lay.y_off = off;
      off += lay.q * (lay.q - 1) / 2;
    }
    lay.z_off = off;
    off += lay.q * lay.m;
    layout_.push_back(lay);

    for (int k = 0; k < lay.q; ++k) {
      coord_names_.push_back("log_sd_" + block.factor + "__" + block.col_names[static_cast<size_t>(k)]);
      natural_names_.push_back("sd_" + block.factor + "__" + block.col_names[static_cast<size_t>(k)]);
    }
    if (lay.correlated) {
      for (int i = 1; i < lay.q; ++i) {
        for (int j = 0; j < i; ++j) {
          coord_names_.push_back("chol_raw_" + block.factor + "[" + std::to_string(i + 1) + "," +
                                 std::to_string(j + 1) + "]");
          natural_names_.push_back("cor_" + block.factor + "__" +
                                   block.col_names[static_cast<size_t>(j)] + "__" +
                                   block.col_names[static_cast<size_t>(i)]);
        }
      }
    }
    for (int lvl = 0; lvl < lay.m; ++lvl) {
      for (int k = 0; k < lay.q; ++k) {
        std::string nm = "z_" + block.factor + "[" + std::to_string(k + 1) + "," +
                         std::to_string(lvl + 1) + "]";
        coord_names_.push_back(nm);
        natural_names_.push_back(nm);
      }
    }
  }
  dim_ = off;
}

void HierarchicalLogit::natural_values(const std::vector<double>& theta, double* out) const {
  const DesignMatrix& dm = *dm_;
  int o = 0;
  for (int j = 0; j < dm.p; ++j) out[o++] = theta[static_cast<size_t>(j)];
  for (size_t g = 0; g < layout_.size(); ++g) {
    const BlockLayout& lay = layout_[g];
    for (int k = 0; k < lay.q; ++k) out[o++] = std::exp(theta[static_cast<size_t>(lay.lt_off + k)]);
    if (lay.correlated) {
      std::vector<double> y(theta.begin() + lay.y_off, theta.begin() + lay.y_off + lay.n_y());
      std::vector<double> L;
      cholesky_corr_from_unconstrained(y, lay.q, L);
      for (int i = 1; i < lay.q; ++i) {
        for (int j = 0; j < i; ++j) {
          double c = 0.0;
          for (int k = 0; k <= j; ++k) {
            c += L[static_cast<size_t>(i) * lay.q + k] * L[static_cast<size_t>(j) * lay.q + k];
          }
          out[o++] = c;
        }
      }
    }
    for (int i = 0; i < lay.q * lay.m; ++i) out[o++] = theta[static_cast<size_t>(lay.z_off + i)];
  }
}

double HierarchicalLogit::log_posterior(const std::vector<double>& theta) const {
  return evaluate(theta, nullptr);
}

double HierarchicalLogit::log_posterior_grad(const std::vector<double>& theta,
                                             std::vector<double>& grad) const {
  grad.assign(static_cast<size_t>(dim_), 0.0);
  return evaluate(theta, &grad);
}

double HierarchicalLogit::evaluate(const std::vector<double>& theta, std::vector<double>* grad) const {
  const DesignMatrix& dm = *dm_;
  if (static_cast<int>(theta.size()) != dim_) {
    throw std::invalid_argument("log posterior: parameter vector has dimension " +
                                std::to_string(theta.size()) + ", model needs " +
                                std::to_string(dim_));
  }
  const int n = dm.n, p = dm.p;
  const size_t n_blocks = dm.blocks.size();

  // ---- forward pass ----
  std::vector<double> eta(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double e = 0.0;
    const double* xi = &dm.X[static_cast<size_t>(i) * p];
    for (int j = 0; j < p; ++j) e += xi[j] * theta[static_cast<size_t>(j)];
    eta[static_cast<size_t>(i)] = e;
  }

  std::vector<std::vector<double>> tau(n_blocks), L(n_blocks), w(n_blocks), b(n_blocks);
  for (size_t g = 0; g < n_blocks; ++g) {
    const BlockLayout& lay = layout_[g];
    const GroupBlock& block = dm.blocks[g];
    const int q = lay.q, m = lay.m;
    tau[g].resize(static_cast<size_t>(q));
    for (int k = 0; k < q; ++k) tau[g][static_cast<size_t>(k)] = std::exp(theta[static_cast<size_t>(lay.lt_off + k)]);
    if (lay.correlated) {
      std::vector<double> y(theta.begin() + lay.y_off, theta.begin() + lay.y_off + lay.n_y());
      cholesky_corr_from_unconstrained(y, q, L[g]);
    }
    w[g].assign(static_cast<size_t>(q) * m, 0.0);
    b[g].assign(static_cast<size_t>(q) * m, 0.0);
    const double* z = &theta[static_cast<size_t>(lay.z_off)];
    for (int lvl = 0; lvl < m; ++lvl) {
      const double* zj = z + static_cast<size_t>(lvl) * q;
      double* wj = &w[g][static_cast<size_t>(lvl) * q];
      double* bj = &b[g][static_cast<size_t>(lvl) * q];
      if (lay.correlated) {
        for (int k = 0; k < q; ++k) {
          double acc = 0.0;
          const double* Lk = &L[g][static_cast<size_t>(k) * q];
          for (int l = 0; l <= k; ++l) acc += Lk[l] * zj[l];
          wj[k] = acc;
        }
      } else {
        for (int k = 0; k < q; ++k) wj[k] = zj[k];
      }
      for (int k = 0; k < q; ++k) bj[k] = tau[g][static_cast<size_t>(k)] * wj[k];
    }
    for (int i = 0; i < n; ++i) {
      const double* ui = &block.U[static_cast<size_t>(i) * q];
      const double* bj = &b[g][static_cast<size_t>(block.row_level[static_cast<size_t>(i)]) * q];
      double acc = 0.0;
      for (int k = 0; k < q; ++k) acc += ui[k] * bj[k];
      eta[static_cast<size_t>(i)] += acc;
    }
  }

  double lp = 0.0;
  for (int i = 0; i < n; ++i) {
    double e = eta[static_cast<size_t>(i)];
    lp += (dm.y[static_cast<size_t>(i)] != 0 ? e : 0.0) - log1p_exp(e);
  }
  // Cauchy prior on fixed coefficients.
  const double s = priors_.fixed_scale;
  for (int j = 0; j < p; ++j) {
    double bj = theta[static_cast<size_t>(j)];
    lp += -kLogPi - std::log(s) - std::log1p((bj / s) * (bj / s));
  }
  // Random-effect priors plus change-of-variable terms.
  const double df = priors_.sd_df, ss = priors_.sd_scale;
  const double half_t_const = std::log(2.0) + std::lgamma((df + 1.0) / 2.0) -
                              std::lgamma(df / 2.0) - 0.5 * std::log(df) - 0.5 * kLogPi -
                              std::log(ss);
  for (size_t g = 0; g < n_blocks; ++g) {
    const BlockLayout& lay = layout_[g];
    for (int k = 0; k < lay.q; ++k) {
      double t = tau[g][static_cast<size_t>(k)];
      lp += half_t_const - 0.5 * (df + 1.0) * std::log1p(t * t / (df * ss * ss));
      lp += theta[static_cast<size_t>(lay.lt_off + k)];  // d tau / d log_tau
    }
    const double* z = &theta[static_cast<size_t>(lay.z_off)];
    for (int i = 0; i < lay.q * lay.m; ++i) lp += -0.5 * kLogTwoPi - 0.5 * z[i] * z[i];
    if (lay.correlated) {
      const int q = lay.q;
      // LKJ density of the Cholesky factor.
      for (int k = 2; k <= q; ++k) {
        double diag = L[g][static_cast<size_t>(k - 1) * q + (k - 1)];
        lp += (q - k + 2.0 * priors_.lkj_shape - 2.0) * std::log(diag);
      }
      // Jacobian of the tanh stick-breaking transform.
      size_t idx = 0;
      for (int i = 1; i < q; ++i) {
        double rem = 1.0;
        for (int j = 0; j < i; ++j) {
          double yv = theta[static_cast<size_t>(lay.y_off) + idx++];
          lp += log1m_tanh2(yv) + 0.5 * std::log(rem);
          double l = std::tanh(yv) * std::sqrt(rem);
          rem -= l * l;
          if (rem < 1e-16) rem = 1e-16;
        }
      }
    }
  }
  if (grad == nullptr) return lp;

  // ---- backward pass ----
  std::vector<double>& g_out = *grad;
  std::vector<double> resid(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    resid[static_cast<size_t>(i)] =
        static_cast<double>(dm.y[static_cast<size_t>(i)]) - logistic(eta[static_cast<size_t>(i)]);
  }
  for (int j = 0; j < p; ++j) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += dm.X[static_cast<size_t>(i) * p + j] * resid[static_cast<size_t>(i)];
    double bj = theta[static_cast<size_t>(j)];
    g_out[static_cast<size_t>(j)] = acc - 2.0 * bj / (s * s + bj * bj);
  }

  for (size_t g = 0; g < n_blocks; ++g) {
    const BlockLayout& lay = layout_[g];
    const GroupBlock& block = dm.blocks[g];
    const int q = lay.q, m = lay.m;

    std::vector<double> db(static_cast<size_t>(q) * m, 0.0);
    for (int i = 0; i < n; ++i) {
      const double* ui = &block.U[static_cast<size_t>(i) * q];
      double* dbj = &db[static_cast<size_t>(block.row_level[static_cast<size_t>(i)]) * q];
      double r = resid[static_cast<size_t>(i)];
      for (int k = 0; k < q; ++k) dbj[k] += ui[k] * r;
    }

    const double* z = &theta[static_cast<size_t>(lay.z_off)];
    std::vector<double> dtau(static_cast<size_t>(q), 0.0);
    std::vector<double> dL;
    if (lay.correlated) dL.assign(static_cast<size_t>(q) * q, 0.0);
    for (int lvl = 0; lvl < m; ++lvl) {
      const double* dbj = &db[static_cast<size_t>(lvl) * q];
      const double* wj = &w[g][static_cast<size_t>(lvl) * q];
      const double* zj = z + static_cast<size_t>(lvl) * q;
      double* gz = &g_out[static_cast<size_t>(lay.z_off) + static_cast<size_t>(lvl) * q];
      for (int k = 0; k < q; ++k) {
        dtau[static_cast<size_t>(k)] += wj[k] * dbj[k];
      }
      if (lay.correlated) {
        // dw = tau .* db ; dz = L^T dw ; dL += dw z^T (lower part)
        for (int k = 0; k < q; ++k) {
          double dwk = tau[g][static_cast<size_t>(k)] * dbj[k];
          const double* Lk = &L[g][static_cast<size_t>(k) * q];
          double* dLk = &dL[static_cast<size_t>(k) * q];
          for (int l = 0; l <= k; ++l) {
            gz[l] += Lk[l] * dwk;
            dLk[l] += dwk * zj[l];
          }
        }
      } else {
        for (int k = 0; k < q; ++k) gz[k] += tau[g][static_cast<size_t>(k)] * dbj[k];
      }
      for (int k = 0; k < q; ++k) gz[k] -= zj[k];  // standard-normal prior
    }

    for (int k = 0; k < q; ++k) {
      double t = tau[g][static_cast<size_t>(k)];
      double dprior = -(df + 1.0) * t / (df * ss * ss + t * t);
      g_out[static_cast<size_t>(lay.lt_off + k)] = t * (dtau[static_cast<size_t>(k)] + dprior) + 1.0;
    }

    if (lay.correlated) {
      for (int k = 2; k <= q; ++k) {
        double diag = L[g][static_cast<size_t>(k - 1) * q + (k - 1)];
        dL[static_cast<size_t>(k - 1) * q + (k - 1)] +=
            (q - k + 2.0 * priors_.lkj_shape - 2.0) / diag;
      }
      // Reverse pass through the stick-breaking recursion, row by row.
      size_t row_start = 0;
      for (int i = 1; i < q; ++i) {
        // Recompute this row's intermediates.
        std::vector<double> zs(static_cast<size_t>(i)), rems(static_cast<size_t>(i));
        double rem = 1.0;
        for (int j = 0; j < i; ++j) {
          double yv = theta[static_cast<size_t>(lay.y_off) + row_start + static_cast<size_t>(j)];
          zs[static_cast<size_t>(j)] = std::tanh(yv);
          rems[static_cast<size_t>(j)] = rem;
          double l = zs[static_cast<size_t>(j)] * std::sqrt(rem);
          rem -= l * l;
          if (rem < 1e-16) rem = 1e-16;
        }
        double diag = L[g][static_cast<size_t>(i) * q + i];
        double drem = dL[static_cast<size_t>(i) * q + i] / (2.0 * diag);
        for (int j = i - 1; j >= 0; --j) {
          double zj = zs[static_cast<size_t>(j)];
          double remj = rems[static_cast<size_t>(j)];
          double sq = std::sqrt(remj);
          double lij = L[g][static_cast<size_t>(i) * q + j];
          double dlij = dL[static_cast<size_t>(i) * q + j] - 2.0 * lij * drem;
          // d/dy: through L and through the log(1 - z^2) Jacobian term.
          g_out[static_cast<size_t>(lay.y_off) + row_start + static_cast<size_t>(j)] =
              dlij * sq * (1.0 - zj * zj) - 2.0 * zj;
          drem += dlij * zj / (2.0 * sq) + 0.5 / remj;
        }
        row_start += static_cast<size_t>(i);
      }
    }
  }
  return lp;
}

std::pair<double, std::vector<double>> log_posterior_and_gradient(const std::vector<double>& theta,
                                                                  const DesignMatrix& dm,
                                                                  const Priors& priors) {
  HierarchicalLogit model(dm, priors);
  std::vector<double> grad;
  double lp = model.log_posterior_grad(theta, grad);
  return {lp, std::move(grad)};
}

}  // namespace refprime
