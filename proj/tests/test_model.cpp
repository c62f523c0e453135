#include <doctest.h>

#include <cmath>

#include "refprime/errors.hpp"
#include "refprime/inference/model.hpp"
#include "refprime/math/rng.hpp"
#include "refprime/math/special.hpp"

using namespace refprime;

namespace {

DesignMatrix fixed_only_design(int n) {
  DesignMatrix dm;
  dm.n = n;
  dm.p = 2;
  dm.col_names = {"Intercept", "x"};
  dm.X.resize(static_cast<size_t>(n) * 2);
  dm.y.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    dm.X[static_cast<size_t>(i) * 2] = 1.0;
    dm.X[static_cast<size_t>(i) * 2 + 1] = static_cast<double>(i % 5) - 2.0;
    dm.y[static_cast<size_t>(i)] = i % 2;
    dm.row_participant.push_back("p");
    dm.row_item.push_back("i");
  }
  return dm;
}

// One grouped block with q slope columns over m levels.
DesignMatrix grouped_design(int n, int q, int m, bool correlated, Rng& rng) {
  DesignMatrix dm = fixed_only_design(n);
  GroupBlock block;
  block.factor = "participant";
  block.correlated = correlated;
  block.col_names.push_back("Intercept");
  for (int k = 1; k < q; ++k) block.col_names.push_back("s" + std::to_string(k));
  for (int lvl = 0; lvl < m; ++lvl) block.level_ids.push_back("l" + std::to_string(lvl));
  block.U.resize(static_cast<size_t>(n) * q);
  block.row_level.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    block.row_level[static_cast<size_t>(i)] = static_cast<int>(rng.below(static_cast<uint64_t>(m)));
    block.U[static_cast<size_t>(i) * q] = 1.0;
    for (int k = 1; k < q; ++k) block.U[static_cast<size_t>(i) * q + k] = rng.normal();
  }
  dm.blocks.push_back(std::move(block));
  return dm;
}

}  // namespace

TEST_CASE("zero coefficients on balanced data give n log(1/2) plus the prior") {
  const int n = 40;
  DesignMatrix dm = fixed_only_design(n);
  HierarchicalLogit model(dm, Priors{});
  std::vector<double> theta(2, 0.0);
  double expected_prior = 2.0 * std::log(1.0 / (M_PI * 2.5));
  CHECK(model.log_posterior(theta) ==
        doctest::Approx(n * std::log(0.5) + expected_prior).epsilon(1e-12));
}

TEST_CASE("gradient matches central finite differences on a correlated block") {
  Rng rng(17);
  DesignMatrix dm = grouped_design(25, 3, 4, true, rng);
  HierarchicalLogit model(dm, Priors{});
  std::vector<double> theta(static_cast<size_t>(model.dim()));
  for (auto& t : theta) t = 0.7 * rng.normal();
  std::vector<double> grad;
  model.log_posterior_grad(theta, grad);
  const double h = 1e-5;
  for (int k = 0; k < model.dim(); ++k) {
    auto tp = theta, tm = theta;
    tp[static_cast<size_t>(k)] += h;
    tm[static_cast<size_t>(k)] -= h;
    double fd = (model.log_posterior(tp) - model.log_posterior(tm)) / (2 * h);
    double rel = std::fabs(grad[static_cast<size_t>(k)] - fd) /
                 std::max({1.0, std::fabs(fd), std::fabs(grad[static_cast<size_t>(k)])});
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("log posterior is exchangeable over row order") {
  Rng rng(3);
  DesignMatrix dm = grouped_design(30, 2, 5, true, rng);
  HierarchicalLogit model(dm, Priors{});
  std::vector<double> theta(static_cast<size_t>(model.dim()));
  for (auto& t : theta) t = 0.5 * rng.normal();
  double lp = model.log_posterior(theta);

  // reverse all row-indexed storage
  DesignMatrix rev = dm;
  for (int i = 0; i < dm.n; ++i) {
    int j = dm.n - 1 - i;
    for (int k = 0; k < dm.p; ++k) rev.X[static_cast<size_t>(i) * dm.p + k] = dm.X[static_cast<size_t>(j) * dm.p + k];
    rev.y[static_cast<size_t>(i)] = dm.y[static_cast<size_t>(j)];
    for (size_t g = 0; g < dm.blocks.size(); ++g) {
      int q = dm.blocks[g].q();
      rev.blocks[g].row_level[static_cast<size_t>(i)] = dm.blocks[g].row_level[static_cast<size_t>(j)];
      for (int k = 0; k < q; ++k) {
        rev.blocks[g].U[static_cast<size_t>(i) * q + k] = dm.blocks[g].U[static_cast<size_t>(j) * q + k];
      }
    }
  }
  HierarchicalLogit rev_model(rev, Priors{});
  CHECK(rev_model.log_posterior(theta) == doctest::Approx(lp).epsilon(1e-13));
}

TEST_CASE("non-centered and centered parameterizations agree up to the transform constant") {
  // Replace the standard-normal offset prior with an independently computed
  // MVN density of the natural-scale effects; the difference must be the
  // whitening log-determinant, once per group level.
  Rng rng(11);
  const int q = 3, m = 4;
  DesignMatrix dm = grouped_design(40, q, m, true, rng);
  HierarchicalLogit model(dm, Priors{});
  std::vector<double> theta(static_cast<size_t>(model.dim()));
  for (auto& t : theta) t = 0.6 * rng.normal();

  const int p = dm.p;
  const int n_y = q * (q - 1) / 2;
  std::vector<double> y(theta.begin() + p + q, theta.begin() + p + q + n_y);
  std::vector<double> z(theta.begin() + p + q + n_y, theta.end());
  std::vector<double> L;
  cholesky_corr_from_unconstrained(y, q, L);
  std::vector<double> tau(q);
  for (int k = 0; k < q; ++k) tau[static_cast<size_t>(k)] = std::exp(theta[static_cast<size_t>(p + k)]);

  // Covariance of the natural-scale effects: A = diag(tau) L, Sigma = A A'.
  std::vector<double> A(static_cast<size_t>(q) * q, 0.0);
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j <= i; ++j) {
      A[static_cast<size_t>(i) * q + j] = tau[static_cast<size_t>(i)] * L[static_cast<size_t>(i) * q + j];
    }
  }
  std::vector<double> sigma(static_cast<size_t>(q) * q, 0.0);
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      for (int k = 0; k < q; ++k) {
        sigma[static_cast<size_t>(i) * q + j] +=
            A[static_cast<size_t>(i) * q + k] * A[static_cast<size_t>(j) * q + k];
      }
    }
  }
  // Independent Cholesky of Sigma for the centered MVN density.
  std::vector<double> C(static_cast<size_t>(q) * q, 0.0);
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j <= i; ++j) {
      double acc = sigma[static_cast<size_t>(i) * q + j];
      for (int k = 0; k < j; ++k) {
        acc -= C[static_cast<size_t>(i) * q + k] * C[static_cast<size_t>(j) * q + k];
      }
      if (i == j) {
        C[static_cast<size_t>(i) * q + i] = std::sqrt(acc);
      } else {
        C[static_cast<size_t>(i) * q + j] = acc / C[static_cast<size_t>(j) * q + j];
      }
    }
  }
  double half_log_det_sigma = 0.0;
  for (int k = 0; k < q; ++k) half_log_det_sigma += std::log(C[static_cast<size_t>(k) * q + k]);

  double z_prior = 0.0;
  double mvn_lpdf = 0.0;
  for (int lvl = 0; lvl < m; ++lvl) {
    std::vector<double> b(static_cast<size_t>(q), 0.0);
    for (int k = 0; k < q; ++k) {
      double acc = 0.0;
      for (int l = 0; l <= k; ++l) {
        acc += L[static_cast<size_t>(k) * q + l] * z[static_cast<size_t>(lvl) * q + l];
      }
      b[static_cast<size_t>(k)] = tau[static_cast<size_t>(k)] * acc;
      double zv = z[static_cast<size_t>(lvl) * q + k];
      z_prior += -0.5 * std::log(2 * M_PI) - 0.5 * zv * zv;
    }
    // solve C w = b by forward substitution; quadratic form is |w|^2
    std::vector<double> w(static_cast<size_t>(q), 0.0);
    for (int k = 0; k < q; ++k) {
      double acc = b[static_cast<size_t>(k)];
      for (int l = 0; l < k; ++l) acc -= C[static_cast<size_t>(k) * q + l] * w[static_cast<size_t>(l)];
      w[static_cast<size_t>(k)] = acc / C[static_cast<size_t>(k) * q + k];
    }
    double quad = 0.0;
    for (int k = 0; k < q; ++k) quad += w[static_cast<size_t>(k)] * w[static_cast<size_t>(k)];
    mvn_lpdf += -0.5 * q * std::log(2 * M_PI) - half_log_det_sigma - 0.5 * quad;
  }

  double log_det_whiten = 0.0;
  for (int k = 0; k < q; ++k) {
    log_det_whiten += std::log(tau[static_cast<size_t>(k)]) + std::log(L[static_cast<size_t>(k) * q + k]);
  }
  // Centered log posterior (MVN prior on b) vs non-centered (std normal on z):
  // lp_centered = lp_noncentered - z_prior + mvn_lpdf + m * log|det(diag(tau) L)|.
  // Equivalently the two prior evaluations differ by the constant Jacobian.
  CHECK(mvn_lpdf == doctest::Approx(z_prior - m * log_det_whiten).epsilon(1e-10));
}

TEST_CASE("the q=2 correlation prior reduces to a uniform correlation") {
  // With all offsets at zero the likelihood ignores the correlation
  // parameter, so log-posterior differences in y must equal the tanh
  // change-of-variable density of a uniform correlation.
  Rng rng(5);
  DesignMatrix dm = grouped_design(20, 2, 3, true, rng);
  HierarchicalLogit model(dm, Priors{});
  std::vector<double> theta(static_cast<size_t>(model.dim()), 0.0);
  const int y_off = dm.p + 2;
  auto lp_at = [&](double yv) {
    auto t = theta;
    t[static_cast<size_t>(y_off)] = yv;
    return model.log_posterior(t);
  };
  auto log_density = [](double yv) {
    double z = std::tanh(yv);
    return std::log1p(-z * z);
  };
  CHECK(lp_at(0.7) - lp_at(0.2) == doctest::Approx(log_density(0.7) - log_density(0.2)).epsilon(1e-10));
}

TEST_CASE("natural values expose sds and correlations") {
  Rng rng(23);
  DesignMatrix dm = grouped_design(10, 2, 2, true, rng);
  HierarchicalLogit model(dm, Priors{});
  std::vector<double> theta(static_cast<size_t>(model.dim()), 0.0);
  theta[2] = std::log(0.7);   // sd of the intercepts
  theta[4] = 0.3;             // unconstrained correlation
  std::vector<double> natural(static_cast<size_t>(model.n_natural()));
  model.natural_values(theta, natural.data());
  auto names = model.natural_names();
  REQUIRE(names.size() == natural.size());
  int sd_idx = -1, cor_idx = -1;
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == "sd_participant__Intercept") sd_idx = static_cast<int>(i);
    if (names[i] == "cor_participant__Intercept__s1") cor_idx = static_cast<int>(i);
  }
  REQUIRE(sd_idx >= 0);
  REQUIRE(cor_idx >= 0);
  CHECK(natural[static_cast<size_t>(sd_idx)] == doctest::Approx(0.7));
  CHECK(natural[static_cast<size_t>(cor_idx)] == doctest::Approx(std::tanh(0.3)));
}

TEST_CASE("dimension mismatches are reported") {
  DesignMatrix dm = fixed_only_design(10);
  HierarchicalLogit model(dm, Priors{});
  CHECK_THROWS(model.log_posterior({0.0}));
  auto [lp, grad] = log_posterior_and_gradient({0.0, 0.0}, dm, Priors{});
  CHECK(std::isfinite(lp));
  CHECK(grad.size() == 2);
}
