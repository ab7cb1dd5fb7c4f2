#include "tsc/shift.hpp"

#include <cmath>
#include <cstdlib>

namespace tsc::shift {

bool is_valid_pmf(const TrafficDistribution& p, double tol) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

TrafficDistribution normalize(const PhaseCounts& counts) {
  std::int64_t n = 0;
  for (auto c : counts) n += c;
  if (n <= 0) throw ZeroTotalError{};
  TrafficDistribution p{};
  for (int i = 0; i < kNumPhases; ++i) {
    p[i] = static_cast<double>(counts[i]) / static_cast<double>(n);
  }
  return p;
}

double phase_ks_distance(const TrafficDistribution& a, const TrafficDistribution& b) {
  double d = 0.0;
  for (int i = 0; i < kNumPhases; ++i) {
    d = std::max(d, std::abs(a[i] - b[i]));
  }
  return d;
}

double cdf_ks_distance(const TrafficDistribution& a, const TrafficDistribution& b) {
  double d = 0.0, ca = 0.0, cb = 0.0;
  for (int i = 0; i < kNumPhases; ++i) {
    ca += a[i];
    cb += b[i];
    d = std::max(d, std::abs(ca - cb));
  }
  return d;
}

double cumulative_difference(const TrafficDistribution& a, const TrafficDistribution& b) {
  double d = 0.0;
  for (int i = 0; i < kNumPhases; ++i) {
    d += std::abs(a[i] - b[i]);
  }
  return d;
}

double ks_critical_value(double alpha, std::int64_t n) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidAlphaError{alpha};
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  return std::sqrt(-std::log(alpha / 2.0) / (2.0 * static_cast<double>(n)));
}

KsReport ks_test(const TrafficDistribution& a, const TrafficDistribution& b,
                 double alpha, std::int64_t n) {
  KsReport r;
  r.distance = phase_ks_distance(a, b);
  r.critical_value = ks_critical_value(alpha, n);
  r.reject_null = r.distance > r.critical_value;
  r.alpha = alpha;
  r.n_effective = n;
  return r;
}

}  // namespace tsc::shift
