#pragma once

// Traffic-distribution numerics: 8-categorical pmfs over NEMA phases,
// KS-style distances between them, and the asymptotic critical-value test.
// All functions here are pure and thread-safe.

#include <array>
#include <cstdint>

#include "tsc/errors.hpp"

namespace tsc::shift {

inline constexpr int kNumPhases = 8;  // NEMA phases 1..8

// Vehicle counts per NEMA phase. Index 0 holds phase 1.
using PhaseCounts = std::array<std::int64_t, kNumPhases>;

inline std::int64_t total(const PhaseCounts& c) {
  std::int64_t n = 0;
  for (auto v : c) n += v;
  return n;
}

// Normalized distribution of vehicles across the 8 phases.
// Entries are in [0,1] and sum to 1 within kPmfTolerance.
using TrafficDistribution = std::array<double, kNumPhases>;

inline constexpr double kPmfTolerance = 1e-12;

bool is_valid_pmf(const TrafficDistribution& p, double tol = kPmfTolerance);

// p(i) = N_i / n. Throws ZeroTotalError when n == 0.
TrafficDistribution normalize(const PhaseCounts& counts);

// max_i |pA(i) - pB(i)|  (pmf form; the shift measure all experiments use)
double phase_ks_distance(const TrafficDistribution& a, const TrafficDistribution& b);

// max_i |CumSum(pA)(i) - CumSum(pB)(i)| with phases in NEMA order 1..8
double cdf_ks_distance(const TrafficDistribution& a, const TrafficDistribution& b);

// sum_i |pA(i) - pB(i)|, the L1 diagnostic; lies in [0,2]
double cumulative_difference(const TrafficDistribution& a, const TrafficDistribution& b);

// Asymptotic critical value K_{alpha,n} = sqrt(-ln(alpha/2) / (2n)).
// Throws InvalidAlphaError outside (0,1).
double ks_critical_value(double alpha, std::int64_t n);

struct KsReport {
  double distance = 0.0;
  double critical_value = 0.0;
  bool reject_null = false;  // distance > critical_value
  double alpha = 0.0;
  std::int64_t n_effective = 0;
};

KsReport ks_test(const TrafficDistribution& a, const TrafficDistribution& b,
                 double alpha, std::int64_t n);

}  // namespace tsc::shift
