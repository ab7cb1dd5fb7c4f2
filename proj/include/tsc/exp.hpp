#pragma once

// Experiment orchestration: sweep construction, parallel evaluation,
// results persistence, trend fits, plots, and the shift alarm.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsc/agent.hpp"
#include "tsc/metrics.hpp"
#include "tsc/scenario.hpp"
#include "tsc/shift.hpp"
#include "tsc/sim.hpp"

namespace tsc::exp {

// -- Trend fits ---------------------------------------------------------------

struct TrendFit {
  double slope = 0.0;
  double intercept = 0.0;
  double spearman = 0.0;
};

struct DegenerateFitError : std::invalid_argument {
  DegenerateFitError() : std::invalid_argument("all x values identical; cannot fit") {}
};

// Ordinary least squares plus Spearman rank correlation. Needs >= 2 points
// with at least two distinct x.
TrendFit fit_trend(const std::vector<std::pair<double, double>>& points);

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

// -- Shift alarm ----------------------------------------------------------------

enum class AlarmState { kOk, kAlarm };

// alarm iff phase_ks_distance(ref, obs) > threshold (strict)
AlarmState shift_alarm(const shift::TrafficDistribution& p_ref,
                       const shift::TrafficDistribution& p_obs, double threshold);

// -- Appendix-style nonlinearity table -------------------------------------------

struct KsNonlinearityRow {
  double ks_level = 0.0;
  double cumulative_difference = 0.0;
};

std::vector<KsNonlinearityRow> ks_nonlinearity_report(const shift::TrafficDistribution& p_train,
                                                      const std::vector<double>& ks_levels,
                                                      scenario::PerturbMode mode,
                                                      std::uint64_t seed);

// -- Experiment specs and runner --------------------------------------------------

enum class ExperimentKind { kRealScenarios, kFixedVolumeSweep, kFixedDistributionSweep, kGrid };

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kGrid;
  std::vector<double> ks_levels;
  std::vector<std::int64_t> volumes;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  scenario::PerturbMode mode = scenario::PerturbMode::kSpread;
  std::uint64_t master_seed = 7;
  int workers = 4;

  // training reference
  shift::TrafficDistribution p_train{};
  std::int64_t train_volume = 0;
  double duration_s = 3600.0;

  // real-scenario inputs (kind == kRealScenarios)
  std::vector<std::pair<std::string, shift::PhaseCounts>> real_hours;

  std::string out_dir = ".";
};

struct ExperimentOutput {
  std::vector<metrics::ResultRow> rows;
  std::vector<std::string> artifact_paths;  // CSV and SVG files written
};

// Evaluates `policy_net` (or the named baseline) over every scenario in the
// spec, writes results.csv and the plot family for the experiment kind, and
// returns the rows. Deterministic for fixed spec and seeds.
ExperimentOutput run_experiment(const ExperimentSpec& spec, const agent::Mlp& policy_net,
                                const sim::SimParams& params = sim::SimParams{});

// Single scenario evaluation under a policy.
metrics::ResultRow evaluate_scenario(const scenario::Scenario& s, sim::Policy& policy,
                                     std::uint64_t seed,
                                     const shift::TrafficDistribution& p_train,
                                     const sim::SimParams& params = sim::SimParams{});

// -- Config files -------------------------------------------------------------------

// Line-oriented `key = value` config; '#' starts a comment.
std::map<std::string, std::string> parse_config_file(const std::string& path);
std::map<std::string, std::string> parse_config_text(const std::string& text);

std::vector<double> parse_double_list(const std::string& csv);
std::vector<std::int64_t> parse_int_list(const std::string& csv);

// -- SVG plots ----------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Standalone SVG line chart; the raw data is embedded as an XML comment.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series);

}  // namespace tsc::exp
