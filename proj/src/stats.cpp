#include "review_arcade/stats.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <fmt/format.h>

#include "review_arcade/error.hpp"

namespace review_arcade::stats {

namespace {

void require_paired(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw UsageError(fmt::format("{}: length mismatch ({} vs {})", what, a.size(), b.size()));
  }
  if (a.size() < 2) {
    throw UsageError(fmt::format("{}: need at least 2 pairs, got {}", what, a.size()));
  }
}

std::vector<double> differences(std::span<const double> before, std::span<const double> after) {
  std::vector<double> d(before.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = after[i] - before[i];
  return d;
}

bool all_zero(std::span<const double> x) {
  for (double v : x) {
    if (v != 0.0) return false;
  }
  return true;
}

}  // namespace

double mean(std::span<const double> x) {
  if (x.empty()) throw UsageError("mean of empty sequence");
  double m = 0.0;
  std::size_t k = 0;
  for (double v : x) {
    ++k;
    m += (v - m) / static_cast<double>(k);
  }
  return m;
}

double sample_sd(std::span<const double> x) {
  if (x.size() < 2) throw UsageError("sample standard deviation needs n >= 2");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double population_sd(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y, "pearson");
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw UndefinedMetric("pearson: constant input sequence");
  }
  double r = sxy / std::sqrt(sxx * syy);
  if (r > 1.0) r = 1.0;
  if (r < -1.0) r = -1.0;
  return r;
}

double fisher_z(double r) {
  if (!(std::fabs(r) < 1.0)) {
    throw DomainError(fmt::format("fisher_z: |r| must be < 1, got {}", r));
  }
  return std::atanh(r);
}

double inverse_fisher_z(double z) { return std::tanh(z); }

ClampedCorrelation clamp_correlation(double r, double bound) {
  if (r > bound) return {bound, true};
  if (r < -bound) return {-bound, true};
  return {r, false};
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz. Converges quickly for
// x < (a + 1) / (a + b + 2).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw DomainError(fmt::format("incomplete beta did not converge (a={}, b={}, x={})", a, b, x));
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("incomplete beta: a and b must be positive");
  if (x < 0.0 || x > 1.0) throw DomainError("incomplete beta: x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw DomainError("student_t_cdf: df must be positive");
  if (std::isnan(t)) throw DomainError("student_t_cdf: t is NaN");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  // P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
  const double x = df / (df + t * t);
  const double tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

double cohens_d_paired(std::span<const double> before, std::span<const double> after) {
  require_paired(before, after, "cohens_d_paired");
  const auto d = differences(before, after);
  if (all_zero(d)) return 0.0;
  const double sd = sample_sd(d);
  if (sd == 0.0) throw UndefinedMetric("cohens_d_paired: differences have zero variance");
  return mean(d) / sd;
}

StatResult paired_t_test(std::span<const double> before, std::span<const double> after,
                         Sides sides) {
  require_paired(before, after, "paired_t_test");
  StatResult res;
  res.n = before.size();
  res.df = static_cast<int>(res.n) - 1;
  res.d = cohens_d_paired(before, after);
  // mean / (sd / sqrt(n)) == d * sqrt(n)
  res.t = res.d * std::sqrt(static_cast<double>(res.n));
  const double x = res.df / (res.df + res.t * res.t);
  const double two_sided = regularized_incomplete_beta(res.df / 2.0, 0.5, x);
  if (sides == Sides::two) {
    res.p = two_sided;
  } else {
    res.p = res.t > 0.0 ? 0.5 * two_sided : 1.0 - 0.5 * two_sided;
  }
  if (res.p < 0.0) res.p = 0.0;
  if (res.p > 1.0) res.p = 1.0;
  return res;
}

}  // namespace review_arcade::stats
