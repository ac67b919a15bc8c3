#pragma once

// Statistical kernel: correlation, Fisher z, Student-t distribution,
// paired t-test and paired Cohen's d. No external statistics dependency.

#include <cstddef>
#include <span>

namespace review_arcade::stats {

double mean(std::span<const double> x);

// Standard deviation with an (n - 1) divisor. Requires n >= 2.
double sample_sd(std::span<const double> x);

// Standard deviation with an n divisor. Requires n >= 1.
double population_sd(std::span<const double> x);

/// Sample Pearson correlation of two equal-length sequences.
///
/// Sums are accumulated on mean-centered values, so large offsets do not
/// cancel. Throws UsageError on length mismatch or
/// n < 2, UndefinedMetric if either sequence is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// atanh(r). Throws DomainError for |r| >= 1; callers that accept
/// boundary correlations clamp first with clamp_correlation().
double fisher_z(double r);
double inverse_fisher_z(double z);

struct ClampedCorrelation {
  double r;
  bool clamped;
};

inline constexpr double kCorrelationClamp = 0.999999;

ClampedCorrelation clamp_correlation(double r, double bound = kCorrelationClamp);

// I_x(a, b), evaluated with a Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

// P(T <= t) for Student's t with df degrees of freedom (df > 0).
double student_t_cdf(double t, double df);

enum class Sides { two, greater };

struct StatResult {
  double t = 0.0;
  int df = 0;
  double p = 1.0;
  double d = 0.0;
  std::size_t n = 0;
};

/// Paired t-test on differences after[i] - before[i].
///
/// `Sides::greater` tests whether `after` exceeds `before`. When every
/// difference is exactly zero the result is t = 0, p = 1, d = 0. A
/// non-zero constant difference has no variance and throws UndefinedMetric.
StatResult paired_t_test(std::span<const double> before, std::span<const double> after,
                         Sides sides = Sides::two);

// mean(after - before) / sample_sd(after - before).
double cohens_d_paired(std::span<const double> before, std::span<const double> after);

}  // namespace review_arcade::stats
