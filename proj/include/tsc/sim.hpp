#pragma once

// Discrete-time (1 s step) simulator of one signalized 4-leg intersection
// with 8 NEMA phases, one lane per movement.
//
// Geometry and timing constants live in SimParams; the defaults encode
// a ~1800 veh/h saturation flow, 3 s yellow, 1 s all-red clearance, 5 s
// minimum green and a 30 m detection range (5 stopped vehicles).

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsc/scenario.hpp"
#include "tsc/shift.hpp"

namespace tsc::sim {

using shift::kNumPhases;

enum class SignalColor : int { kGreen = 0, kYellow = 1, kAllRedClearance = 2, kRed = 3 };

// The 8 compatible NEMA phase pairs, indexed 0..7.
inline constexpr std::array<std::pair<int, int>, 8> kActionPhases = {{
    {1, 5}, {1, 6}, {2, 5}, {2, 6}, {3, 7}, {3, 8}, {4, 7}, {4, 8},
}};
inline constexpr int kNumActions = 8;
inline constexpr int kDefaultAction = 3;  // (2,6): major through movements

struct SimParams {
  double yellow_s = 3.0;
  double all_red_s = 1.0;
  double min_green_s = 5.0;
  double startup_lost_s = 2.0;          // no discharge in the first seconds of a fresh green
  int saturation_veh_per_s = 1;         // discharge and entry rate per movement
  int detection_capacity = 5;           // 30 m range / 6 m per stopped vehicle
  int entry_queue_cap = 50;             // entry refused while the queue exceeds this
  double approach_length_m = 90.0;
  double free_speed_mps = 15.0;
  double timeout_slack_s = 1800.0;      // hard episode timeout = duration + slack

  double free_flow_s() const { return approach_length_m / free_speed_mps; }
};

struct SignalState {
  std::array<SignalColor, kNumPhases> color;
  std::array<double, kNumPhases> elapsed_in_color_s;
  std::optional<int> active_action;     // empty while a transition is in progress
  std::optional<int> pending_action;
  double action_green_elapsed_s = 0.0;  // since the active pair went fully green
};

struct Observation {
  std::array<int, kNumPhases> detected_vehicles;  // queue within detection range
  std::array<SignalColor, kNumPhases> color;
  std::array<double, kNumPhases> elapsed_in_color_s;

  // Flat network input: per phase [count, one-hot color x4, elapsed/120 clipped].
  static constexpr int kEncodedWidth = kNumPhases * 6;
  std::vector<double> encode() const;
};

// Per-vehicle timestamps. scheduled <= actual <= arrival when all present.
struct SimEvent {
  int vehicle_id = 0;
  int phase = 1;
  double scheduled_depart_s = 0.0;
  std::optional<double> actual_depart_s;  // entry into the approach
  std::optional<double> arrival_s;        // crossing completed
  bool timed_out = false;
};

struct MetricsSnapshot {
  double time_s = 0.0;
  std::int64_t entered = 0;
  std::int64_t crossed = 0;
  std::int64_t queued = 0;
  std::int64_t waiting_outside = 0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;  // vehicles that crossed during this step
  bool done = false;
  MetricsSnapshot info;
};

class Intersection {
 public:
  explicit Intersection(const SimParams& params = SimParams{}) : params_(params) {}

  Observation reset(const scenario::Scenario& s, std::uint64_t seed);

  // Advances one second. `action` must be in valid_actions().
  StepResult step(int action);

  std::vector<int> valid_actions() const;
  Observation observe() const;

  const SignalState& signal_state() const { return signal_; }
  const SimParams& params() const { return params_; }
  double time_s() const { return time_s_; }
  bool done() const { return done_; }
  MetricsSnapshot snapshot() const;

  // Event log; arrival/timeout fields are final once done() is true.
  const std::vector<SimEvent>& events() const { return events_; }

  // CSV: vehicle_id,phase,scheduled_s,actual_depart_s,arrival_s
  void write_event_log(const std::string& path) const;

 private:
  void begin_transition(int to_action);
  void finish_transition();
  void advance_signals();
  void admit_arrivals();
  int discharge();
  void finalize_timeout();

  SimParams params_;
  double duration_s_ = 0.0;
  double time_s_ = 0.0;
  bool done_ = false;

  SignalState signal_{};
  double transition_remaining_s_ = 0.0;
  std::array<double, kNumPhases> color_started_s_{};
  double action_green_start_s_ = 0.0;

  std::vector<SimEvent> events_;
  // Per phase: indices into events_, sorted by scheduled time; next_arrival_
  // marks the first vehicle that has not yet entered the approach.
  std::array<std::vector<int>, kNumPhases> schedule_;
  std::array<size_t, kNumPhases> next_arrival_{};
  std::array<std::vector<int>, kNumPhases> queue_;  // FIFO, front discharges first

  std::int64_t entered_ = 0;
  std::int64_t crossed_ = 0;
};

// Runs a full episode under `policy` and returns the final intersection.
// Declared here so baselines and evaluation share one loop.
class Policy;
StepResult run_episode(Intersection& sim, const scenario::Scenario& s, Policy& policy,
                       std::uint64_t seed);

class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode(std::uint64_t /*seed*/) {}
  virtual int act(const Observation& obs, const std::vector<int>& valid) = 0;
};

}  // namespace tsc::sim
