#pragma once

#include <cstddef>
#include <vector>

namespace refprime {

// log(1 + exp(x)) without overflow.
double log1p_exp(double x);

// Logistic function, stable for large |x|.
double logistic(double x);

// Regularized incomplete beta function I_x(a, b).
double reg_inc_beta(double a, double b, double x);

// Upper-tail probability of the F(d1, d2) distribution at f >= 0.
double f_upper_tail(double d1, double d2, double f);

// Inverse standard normal CDF (Acklam's rational approximation refined by
// one Halley step against erfc; accurate to full double precision).
double normal_quantile(double p);

double normal_cdf(double x);

// Sample quantile with linear interpolation (R type 7). `sorted` ascending.
double quantile_sorted(const std::vector<double>& sorted, double q);

double mean(const std::vector<double>& v);

// Sample variance with n-1 denominator.
double sample_variance(const std::vector<double>& v);

double median(std::vector<double> v);

}  // namespace refprime
