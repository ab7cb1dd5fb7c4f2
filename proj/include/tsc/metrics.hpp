#pragma once

// Performance measures over simulator event logs: normalized throughput,
// extended travel time, travel time, and intersection delay.
//
// Throughput counts vehicles that cross within the scenario horizon; vehicles
// that cross during the timeout slack still enter the time averages, and
// timed-out vehicles are excluded from them but stay in the denominator.

#include <cstdint>
#include <string>
#include <vector>

#include "tsc/sim.hpp"

namespace tsc::metrics {

struct NotArrivedError : std::logic_error {
  NotArrivedError() : std::logic_error("vehicle has no recorded arrival") {}
};

struct EmptyLogError : std::logic_error {
  EmptyLogError() : std::logic_error("event log is empty") {}
};

struct ZeroGeneratedError : std::invalid_argument {
  ZeroGeneratedError() : std::invalid_argument("generated vehicle count must be >= 1") {}
};

struct MetricsReport {
  double normalized_throughput = 0.0;
  double mean_extended_travel_time_s = 0.0;
  double mean_travel_time_s = 0.0;
  double mean_delay_s = 0.0;
  std::int64_t vehicles_generated = 0;
  std::int64_t vehicles_crossed = 0;  // within the scenario horizon
  std::int64_t timed_out = 0;
};

// Crossed within [0, horizon_s], divided by `generated`.
double normalized_throughput(const std::vector<sim::SimEvent>& log, std::int64_t generated,
                             double horizon_s);

// arrival - scheduled departure (includes the departure delay)
double extended_travel_time(const sim::SimEvent& v);

// arrival - actual departure
double travel_time(const sim::SimEvent& v);

// (arrival - approach entry) - free_flow_s, floored at 0. With this geometry
// the approach entry time is the actual departure time.
double intersection_delay(const sim::SimEvent& v, double free_flow_s);

MetricsReport aggregate(const std::vector<sim::SimEvent>& log, double horizon_s,
                        double free_flow_s);

struct ResultRow {
  std::string scenario_label;
  double ks_distance = 0.0;
  std::int64_t total_volume = 0;
  std::uint64_t seed = 0;
  MetricsReport report;
};

// CSV schema:
// scenario_label,ks_distance,total_volume,seed,normalized_throughput,
// mean_ett_s,mean_tt_s,mean_delay_s,timed_out
std::string results_csv_header();
std::string to_csv_row(const ResultRow& row);
void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path);

}  // namespace tsc::metrics
