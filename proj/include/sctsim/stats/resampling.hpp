#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sctsim/hashing.hpp"

namespace sctsim::stats {

/// Sample quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `sorted` must be ascending.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of an empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.5);
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct BootstrapCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

inline constexpr int kDefaultResamples = 1000;

/// Percentile bootstrap interval for the mean. A constant sample yields
/// exactly [c, c].
inline BootstrapCi bootstrap_ci(const std::vector<double>& samples, int n_resamples = kDefaultResamples,
                                double level = 0.95, std::uint64_t seed = 0) {
  if (samples.empty()) throw std::invalid_argument("bootstrap_ci: empty sample set");
  if (samples.size() < 2) throw std::invalid_argument("bootstrap_ci: need at least two samples");
  if (n_resamples < 1) throw std::invalid_argument("bootstrap_ci: n_resamples must be positive");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: level outside (0, 1)");
  if (std::all_of(samples.begin(), samples.end(), [&](double v) { return v == samples.front(); }))
    return {samples.front(), samples.front(), samples.front()};
  const double m = mean(samples);
  std::vector<double> dev(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) dev[i] = samples[i] - m;
  SplitMix64 rng(seed);
  std::vector<double> means(static_cast<std::size_t>(n_resamples));
  for (auto& out : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < dev.size(); ++i) s += dev[rng.below(dev.size())];
    out = m + s / static_cast<double>(dev.size());
  }
  std::sort(means.begin(), means.end());
  const double a = (1.0 - level) / 2.0;
  return {m, quantile_sorted(means, a), quantile_sorted(means, 1.0 - a)};
}

}  // namespace sctsim::stats
