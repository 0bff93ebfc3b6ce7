#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace advlab {

enum class StdKind { Population, Sample };

/// Left-to-right sum; the fixed order keeps batch statistics bit-reproducible.
double ordered_sum(std::span<const double> xs);
double mean(std::span<const double> xs);
/// Two-pass standard deviation around the ordered mean.
double stddev(std::span<const double> xs, StdKind kind = StdKind::Population);

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Streaming mean/variance (Welford) with an order-preserving merge, used by
/// the Monte Carlo probes to combine per-block partial results.
class Moments {
 public:
  void add(double x) {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }

  void merge(const Moments& other);

  std::size_t count() const { return count_; }
  double mean() const { return mean_; }
  /// Unbiased sample variance of the observations.
  double variance() const { return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0; }
  double population_variance() const { return count_ > 0 ? m2_ / static_cast<double>(count_) : 0.0; }
  /// Standard error of the mean.
  double stderr_mean() const { return count_ > 1 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0; }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace advlab
