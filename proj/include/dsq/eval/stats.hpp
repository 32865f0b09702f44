#pragma once

#include <span>
#include <vector>

namespace dsq::eval {

inline constexpr double kSignificanceThreshold = 3.3;

/// 1-based ranks; tied values share the average of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

/// Throws LengthMismatch, DegenerateInput (n < 2 or a constant vector).
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of the average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

struct ZTest {
  double z = 0.0;
  bool significant = false;  // |z| > kSignificanceThreshold, strictly
};

/// Two-sample z on the difference of means (a - b) with the pooled standard
/// error. Both samples need at least two values. Zero pooled variance gives
/// z = 0 when the means agree and throws DegenerateInput otherwise.
ZTest significance_z(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> values);

/// Half away from zero, to one decimal.
double round1(double value);

}  // namespace dsq::eval
