#include "advlab/stats.hpp"

#include "advlab/error.hpp"

namespace advlab {

double ordered_sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

double mean(std::span<const double> xs) {
  require(!xs.empty(), ErrorKind::InvalidParameter, "mean of empty range");
  // Offsets from the first element keep constant inputs exact.
  const double first = xs.front();
  double offset = 0.0;
  for (double x : xs) offset += x - first;
  return first + offset / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs, StdKind kind) {
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const auto n = static_cast<double>(xs.size());
  if (kind == StdKind::Sample) {
    require(xs.size() >= 2, ErrorKind::InvalidParameter, "sample std needs at least two values");
    return std::sqrt(ss / (n - 1.0));
  }
  return std::sqrt(ss / n);
}

void Moments::merge(const Moments& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const auto na = static_cast<double>(count_);
  const auto nb = static_cast<double>(other.count_);
  const double n = na + nb;
  const double delta = other.mean_ - mean_;
  mean_ += delta * nb / n;
  m2_ += other.m2_ + delta * delta * na * nb / n;
  count_ += other.count_;
}

}  // namespace advlab
