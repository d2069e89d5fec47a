#pragma once

#include <functional>
#include <span>
#include <vector>

namespace wfl::stats {

struct Summary
{
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;         // sample standard deviation (n - 1)
  double ci95_half_width = 0.0; // Student-t, two-sided 95 %
};

Summary summarize(std::span<const double> values);

/// Two-sided Student-t critical value t_{1 - (1-level)/2, dof}.
double t_critical(double level, double dof);

struct KsResult
{
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against a continuous CDF (asymptotic p-value).
KsResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf);

/// Survival function of the Kolmogorov distribution, P[K > x].
double kolmogorov_sf(double x);

struct LinearFit
{
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

/// Linear interpolation of a step-free curve (x increasing) at `at`; clamps outside the range.
double interpolate(std::span<const double> x, std::span<const double> y, double at);

} // namespace wfl::stats
