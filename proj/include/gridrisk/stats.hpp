#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridrisk {

constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kSqrt2Pi = 2.5066282746310005024;

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / kSqrt2Pi; }

// Standard normal CDF via erfc, accurate over the full double range.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

// Inverse standard normal CDF. Acklam's rational approximation followed by a
// Halley refinement against erfc, giving ~1e-14 accuracy for
// p in [1e-300, 1-1e-16].
inline double inv_norm_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("inv_norm_cdf: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step: e = Phi(x) - p, u = e / phi(x).
  const double e = norm_cdf(x) - p;
  const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

struct TruncatedNormal {
  double mu = 0.0;
  double sigma = 1.0;
  double a = 0.0;  // lower bound
  double b = 1.0;  // upper bound

  double alpha_cdf() const { return norm_cdf((a - mu) / sigma); }
  double beta_cdf() const { return norm_cdf((b - mu) / sigma); }

  double cdf(double x) const {
    if (x <= a) return 0.0;
    if (x >= b) return 1.0;
    const double lo = alpha_cdf(), hi = beta_cdf();
    return (norm_cdf((x - mu) / sigma) - lo) / (hi - lo);
  }

  double inv_cdf(double u) const {
    const double lo = alpha_cdf(), hi = beta_cdf();
    const double p = lo + u * (hi - lo);
    double x = mu + sigma * inv_norm_cdf(std::clamp(p, 1e-300, 1.0 - 1e-16));
    return std::clamp(x, a, b);
  }

  double mean() const {
    const double al = (a - mu) / sigma, be = (b - mu) / sigma;
    const double z = norm_cdf(be) - norm_cdf(al);
    return mu + sigma * (norm_pdf(al) - norm_pdf(be)) / z;
  }
};

struct Weibull {
  double k = 1.0;       // shape
  double lambda = 1.0;  // scale

  double cdf(double x) const {
    if (x <= 0.0) return 0.0;
    return 1.0 - std::exp(-std::pow(x / lambda, k));
  }

  double inv_cdf(double u) const { return lambda * std::pow(-std::log1p(-u), 1.0 / k); }
};

enum class MarginalKind { TruncNormal, Weibull };

// Marginal distribution of one zonal stochastic variable: load in MW
// (truncated normal) or wind speed in m/s (Weibull).
struct MarginalSpec {
  MarginalKind kind = MarginalKind::TruncNormal;
  TruncatedNormal tn;
  Weibull wb;

  static MarginalSpec trunc_normal(double mu, double sigma, double a, double b) {
    if (!(sigma > 0.0) || !(a < b))
      throw std::invalid_argument("MarginalSpec: need sigma > 0 and a < b");
    MarginalSpec m;
    m.kind = MarginalKind::TruncNormal;
    m.tn = TruncatedNormal{mu, sigma, a, b};
    return m;
  }

  static MarginalSpec weibull(double k, double lambda) {
    if (!(k > 0.0) || !(lambda > 0.0))
      throw std::invalid_argument("MarginalSpec: need k > 0 and lambda > 0");
    MarginalSpec m;
    m.kind = MarginalKind::Weibull;
    m.wb = Weibull{k, lambda};
    return m;
  }

  double cdf(double x) const { return kind == MarginalKind::TruncNormal ? tn.cdf(x) : wb.cdf(x); }
  double inv_cdf(double u) const {
    return kind == MarginalKind::TruncNormal ? tn.inv_cdf(u) : wb.inv_cdf(u);
  }
};

// Kolmogorov-Smirnov statistic of a sample against a reference CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> sample, Cdf&& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::max(f - static_cast<double>(i) / n,
                             static_cast<double>(i + 1) / n - f));
  }
  return d;
}

inline double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty())
    throw std::invalid_argument("pearson_correlation: size mismatch");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace gridrisk
