#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsc/exp.hpp"

namespace tsc::exp {

namespace {

// Average ranks for ties.
std::vector<double> ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman needs two same-length series of >= 2 points");
  }
  return pearson(ranks(x), ranks(y));
}

TrendFit fit_trend(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw std::invalid_argument("need >= 2 points to fit");
  std::vector<double> x, y;
  x.reserve(points.size());
  y.reserve(points.size());
  for (const auto& [px, py] : points) {
    x.push_back(px);
    y.push_back(py);
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw DegenerateFitError{};
  TrendFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.spearman = spearman_rho(x, y);
  return fit;
}

AlarmState shift_alarm(const shift::TrafficDistribution& p_ref,
                       const shift::TrafficDistribution& p_obs, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("threshold must lie in (0,1]");
  }
  return shift::phase_ks_distance(p_ref, p_obs) > threshold ? AlarmState::kAlarm
                                                            : AlarmState::kOk;
}

std::vector<KsNonlinearityRow> ks_nonlinearity_report(const shift::TrafficDistribution& p_train,
                                                      const std::vector<double>& ks_levels,
                                                      scenario::PerturbMode mode,
                                                      std::uint64_t seed) {
  std::vector<KsNonlinearityRow> rows;
  rows.reserve(ks_levels.size());
  for (double level : ks_levels) {
    auto q = scenario::perturb_to_ks(p_train, level, mode, seed);
    rows.push_back({level, shift::cumulative_difference(p_train, q)});
  }
  return rows;
}

}  // namespace tsc::exp
