#include "wfl/stats.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace wfl::stats {

Summary summarize(std::span<const double> values)
{
  Summary s;
  s.count = values.size();
  if (values.empty()) { return s; }
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() < 2) { return s; }
  double ss = 0.0;
  for (double v : values) { ss += (v - s.mean) * (v - s.mean); }
  s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  s.ci95_half_width = t_critical(0.95, static_cast<double>(values.size() - 1)) * s.stddev /
                      std::sqrt(static_cast<double>(values.size()));
  return s;
}

double t_critical(double level, double dof)
{
  if (!(level > 0.0 && level < 1.0) || !(dof > 0.0)) { throw std::invalid_argument("t_critical: bad arguments"); }
  boost::math::students_t dist(dof);
  return boost::math::quantile(dist, 1.0 - (1.0 - level) / 2.0);
}

double kolmogorov_sf(double x)
{
  if (x <= 0.0) { return 1.0; }
  if (x < 0.2) {
    // Small-x form: P[K <= x] = sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2)), negligible here.
    double sum = 0.0;
    for (int k = 1; k < 20; ++k) {
      double t = (2.0 * k - 1.0) * M_PI / x;
      sum += std::exp(-t * t / 8.0);
    }
    return 1.0 - std::sqrt(2.0 * M_PI) / x * sum;
  }
  double sum = 0.0;
  for (int k = 1; k < 100; ++k) {
    double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-17) { break; }
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf)
{
  if (samples.empty()) { throw std::invalid_argument("ks_test: no samples"); }
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double f = cdf(samples[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  // Stephens' small-sample correction of the asymptotic statistic.
  double sqrt_n = std::sqrt(n);
  return {d, kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)};
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y)
{
  if (x.size() != y.size() || x.size() < 2) { throw std::invalid_argument("linear_fit: need >= 2 paired points"); }
  const double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) { throw std::invalid_argument("linear_fit: x has no spread"); }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

double interpolate(std::span<const double> x, std::span<const double> y, double at)
{
  if (x.empty() || x.size() != y.size()) { throw std::invalid_argument("interpolate: bad curve"); }
  if (at <= x.front()) { return y.front(); }
  if (at >= x.back()) { return y.back(); }
  auto it = std::upper_bound(x.begin(), x.end(), at);
  auto hi = static_cast<std::size_t>(it - x.begin());
  auto lo = hi - 1;
  double span = x[hi] - x[lo];
  if (!(span > 0.0)) { return y[hi]; }
  double w = (at - x[lo]) / span;
  return (1.0 - w) * y[lo] + w * y[hi];
}

} // namespace wfl::stats
