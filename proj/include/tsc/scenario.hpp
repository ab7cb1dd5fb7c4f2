#pragma once

// Scenario construction: turn-count ingestion, uniform departure sampling,
// and the synthetic perturbations used by the shift sweeps.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsc/shift.hpp"

namespace tsc::scenario {

struct Vehicle {
  int id = 0;
  int phase = 1;  // NEMA phase 1..8
  double scheduled_depart_s = 0.0;
};

struct Scenario {
  double duration_s = 3600.0;
  std::vector<Vehicle> vehicles;  // sorted by scheduled_depart_s
  std::string label;
  std::uint64_t seed = 0;

  shift::PhaseCounts phase_counts() const;
  shift::TrafficDistribution distribution() const { return shift::normalize(phase_counts()); }
};

struct TurnCountRecord {
  std::string period_start;  // ISO-8601
  int phase = 1;
  std::int64_t volume = 0;
  int bucket_minutes = 60;  // one of {5, 15, 60}
};

// Parses the turn-count CSV (header: period_start,phase,volume,bucket_minutes)
// and aggregates rows into hourly PhaseCounts, one entry per distinct hour,
// sorted by hour. Buckets finer than 60 minutes are summed into their hour.
// Hours missing some phases are zero-filled with a warning on stderr.
std::vector<std::pair<std::string, shift::PhaseCounts>> ingest_turn_counts(
    const std::string& csv_path);

std::vector<TurnCountRecord> parse_turn_counts(const std::string& csv_path);

// Exactly counts[i] vehicles on phase i+1, departure times i.i.d. uniform on
// [0, duration_s), sorted by time. Deterministic given seed.
Scenario generate_scenario(const shift::PhaseCounts& counts, double duration_s,
                           std::uint64_t seed, const std::string& label = "");

// Same vehicles and phases, fresh uniform departure times.
Scenario shuffle_departures(const Scenario& s, std::uint64_t seed);

enum class PerturbMode { kConcentrated, kSpread };

// Builds a test distribution q with phase_ks_distance(p_train, q) == target_d
// (within 1e-9 by construction).
//
// Concentrated: move exactly target_d of mass from the largest-mass phase to
// the smallest-mass phase (ties broken by lowest phase id); the cumulative
// difference is then 2*target_d.
//
// Spread: the main receiver still gets exactly +target_d, but additional
// positive deviations of magnitude min(target_d/2, cap_k) are placed on other
// phases and balanced by donations spread over the remaining phases, each
// bounded by min(mass, target_d). Caps are drawn once from the seed, so the
// cumulative difference grows steeply at small target_d and flattens as the
// caps saturate. Throws InfeasibleError when no construction exists.
shift::TrafficDistribution perturb_to_ks(const shift::TrafficDistribution& p_train,
                                         double target_d, PerturbMode mode,
                                         std::uint64_t seed);

// Largest-remainder apportionment of `total` vehicles to the pmf p.
// Sum of the result equals total exactly.
shift::PhaseCounts scale_volume(const shift::TrafficDistribution& p, std::int64_t total);

// |ks_levels| x |volumes| scenarios (spread-mode perturbations), labeled
// "ks<D>_vol<V>". Deterministic given seed.
std::vector<Scenario> build_experiment_grid(const shift::TrafficDistribution& p_train,
                                            const std::vector<double>& ks_levels,
                                            const std::vector<std::int64_t>& volumes,
                                            std::uint64_t seed);

// Scenario JSON (schema: label, duration_s, seed, vehicles[{id,phase,depart_s}])
std::string to_json(const Scenario& s);
Scenario from_json(const std::string& json_text);
void save_scenario(const Scenario& s, const std::string& path);
Scenario load_scenario(const std::string& path);

}  // namespace tsc::scenario
