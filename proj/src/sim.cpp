#include "tsc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tsc/errors.hpp"

namespace tsc::sim {

namespace {

bool action_has_phase(int action, int phase) {
  return kActionPhases[action].first == phase || kActionPhases[action].second == phase;
}

}  // namespace

std::vector<double> Observation::encode() const {
  std::vector<double> x;
  x.reserve(kEncodedWidth);
  for (int i = 0; i < kNumPhases; ++i) {
    x.push_back(static_cast<double>(detected_vehicles[i]));
    for (int c = 0; c < 4; ++c) {
      x.push_back(static_cast<int>(color[i]) == c ? 1.0 : 0.0);
    }
    x.push_back(std::min(elapsed_in_color_s[i], 120.0) / 120.0);
  }
  return x;
}

Observation Intersection::reset(const scenario::Scenario& s, std::uint64_t /*seed*/) {
  duration_s_ = s.duration_s;
  time_s_ = 0.0;
  done_ = false;
  entered_ = 0;
  crossed_ = 0;

  events_.clear();
  events_.reserve(s.vehicles.size());
  for (auto& ph : schedule_) ph.clear();
  for (auto& q : queue_) q.clear();
  next_arrival_.fill(0);

  for (const auto& v : s.vehicles) {
    SimEvent e;
    e.vehicle_id = v.id;
    e.phase = v.phase;
    e.scheduled_depart_s = v.scheduled_depart_s;
    schedule_[v.phase - 1].push_back(static_cast<int>(events_.size()));
    events_.push_back(e);
  }
  // Scenario vehicles are sorted by time, so each per-phase schedule is too.

  signal_.color.fill(SignalColor::kRed);
  signal_.elapsed_in_color_s.fill(0.0);
  signal_.active_action.reset();
  signal_.pending_action = kDefaultAction;
  signal_.action_green_elapsed_s = 0.0;
  color_started_s_.fill(0.0);
  action_green_start_s_ = 0.0;
  transition_remaining_s_ = params_.all_red_s;  // initial all-red clearance

  return observe();
}

std::vector<int> Intersection::valid_actions() const {
  if (done_) return {};
  if (signal_.pending_action) return {*signal_.pending_action};
  if (signal_.action_green_elapsed_s < params_.min_green_s) return {*signal_.active_action};
  std::vector<int> all(kNumActions);
  for (int a = 0; a < kNumActions; ++a) all[a] = a;
  return all;
}

void Intersection::begin_transition(int to_action) {
  const int from = *signal_.active_action;
  for (int phase = 1; phase <= kNumPhases; ++phase) {
    if (action_has_phase(from, phase) && !action_has_phase(to_action, phase)) {
      signal_.color[phase - 1] = SignalColor::kYellow;
      color_started_s_[phase - 1] = time_s_;
    }
  }
  signal_.active_action.reset();
  signal_.pending_action = to_action;
  transition_remaining_s_ = params_.yellow_s + params_.all_red_s;
}

void Intersection::finish_transition() {
  const int to = *signal_.pending_action;
  for (int phase = 1; phase <= kNumPhases; ++phase) {
    const bool should_be_green = action_has_phase(to, phase);
    auto& color = signal_.color[phase - 1];
    if (should_be_green && color != SignalColor::kGreen) {
      color = SignalColor::kGreen;
      color_started_s_[phase - 1] = time_s_;
    } else if (!should_be_green && color != SignalColor::kRed) {
      color = SignalColor::kRed;
      color_started_s_[phase - 1] = time_s_;
    }
  }
  signal_.active_action = to;
  signal_.pending_action.reset();
  action_green_start_s_ = time_s_;
}

// Runs after the time increment, so time_s_ is the start of the next step.
void Intersection::advance_signals() {
  if (transition_remaining_s_ <= 0.0) return;
  transition_remaining_s_ -= 1.0;
  if (transition_remaining_s_ <= 1e-9) {
    transition_remaining_s_ = 0.0;
    finish_transition();
  } else if (transition_remaining_s_ <= params_.all_red_s + 1e-9) {
    for (int i = 0; i < kNumPhases; ++i) {
      if (signal_.color[i] == SignalColor::kYellow) {
        signal_.color[i] = SignalColor::kAllRedClearance;
        color_started_s_[i] = time_s_;
      }
    }
  }
}

void Intersection::admit_arrivals() {
  for (int i = 0; i < kNumPhases; ++i) {
    int admitted = 0;
    while (admitted < params_.saturation_veh_per_s &&
           next_arrival_[i] < schedule_[i].size() &&
           static_cast<int>(queue_[i].size()) < params_.entry_queue_cap) {
      const int ev = schedule_[i][next_arrival_[i]];
      if (events_[ev].scheduled_depart_s > time_s_) break;
      events_[ev].actual_depart_s = time_s_;
      queue_[i].push_back(ev);
      ++next_arrival_[i];
      ++entered_;
      ++admitted;
    }
  }
}

int Intersection::discharge() {
  int crossed_now = 0;
  const double free_flow = params_.free_flow_s();
  for (int i = 0; i < kNumPhases; ++i) {
    if (signal_.color[i] != SignalColor::kGreen) continue;
    if (time_s_ - color_started_s_[i] < params_.startup_lost_s) continue;
    int served = 0;
    while (served < params_.saturation_veh_per_s && !queue_[i].empty()) {
      const int ev = queue_[i].front();
      if (*events_[ev].actual_depart_s + free_flow > time_s_ + 1e-9) break;
      events_[ev].arrival_s = time_s_;
      queue_[i].erase(queue_[i].begin());
      ++crossed_;
      ++crossed_now;
      ++served;
    }
  }
  return crossed_now;
}

void Intersection::finalize_timeout() {
  const double cutoff = duration_s_ + params_.timeout_slack_s;
  for (auto& e : events_) {
    if (!e.arrival_s) {
      e.timed_out = true;
      if (!e.actual_depart_s) e.actual_depart_s = cutoff;
      e.arrival_s = cutoff;
    }
  }
}

StepResult Intersection::step(int action) {
  if (done_) throw InvalidActionError("step() called on a finished episode");
  auto valid = valid_actions();
  if (std::find(valid.begin(), valid.end(), action) == valid.end()) {
    throw InvalidActionError("action " + std::to_string(action) +
                             " is not valid at t=" + std::to_string(time_s_));
  }

  if (!signal_.pending_action && action != *signal_.active_action) {
    begin_transition(action);
  }

  admit_arrivals();
  const int crossed_now = discharge();

  time_s_ += 1.0;
  advance_signals();
  if (signal_.active_action) {
    signal_.action_green_elapsed_s = time_s_ - action_green_start_s_;
  } else {
    signal_.action_green_elapsed_s = 0.0;
  }
  for (int i = 0; i < kNumPhases; ++i) {
    signal_.elapsed_in_color_s[i] = time_s_ - color_started_s_[i];
  }

  const auto total = static_cast<std::int64_t>(events_.size());
  if (time_s_ >= duration_s_ && crossed_ == total) {
    done_ = true;
  } else if (time_s_ >= duration_s_ + params_.timeout_slack_s) {
    finalize_timeout();
    done_ = true;
  }

  StepResult r;
  r.observation = observe();
  r.reward = static_cast<double>(crossed_now);
  r.done = done_;
  r.info = snapshot();
  return r;
}

Observation Intersection::observe() const {
  Observation o;
  for (int i = 0; i < kNumPhases; ++i) {
    o.detected_vehicles[i] =
        std::min(static_cast<int>(queue_[i].size()), params_.detection_capacity);
    o.color[i] = signal_.color[i];
    o.elapsed_in_color_s[i] = signal_.elapsed_in_color_s[i];
  }
  return o;
}

MetricsSnapshot Intersection::snapshot() const {
  MetricsSnapshot m;
  m.time_s = time_s_;
  m.entered = entered_;
  m.crossed = crossed_;
  std::int64_t queued = 0;
  for (const auto& q : queue_) queued += static_cast<std::int64_t>(q.size());
  m.queued = queued;
  std::int64_t waiting = 0;
  for (int i = 0; i < kNumPhases; ++i) {
    for (size_t k = next_arrival_[i]; k < schedule_[i].size(); ++k) {
      if (events_[schedule_[i][k]].scheduled_depart_s > time_s_) break;
      ++waiting;
    }
  }
  m.waiting_outside = waiting;
  return m;
}

void Intersection::write_event_log(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write event log: " + path);
  out << "vehicle_id,phase,scheduled_s,actual_depart_s,arrival_s\n";
  char buf[160];
  for (const auto& e : events_) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.3f,%.3f,%.3f\n", e.vehicle_id, e.phase,
                  e.scheduled_depart_s, e.actual_depart_s.value_or(-1.0),
                  e.arrival_s.value_or(-1.0));
    out << buf;
  }
}

StepResult run_episode(Intersection& sim, const scenario::Scenario& s, Policy& policy,
                       std::uint64_t seed) {
  auto obs = sim.reset(s, seed);
  policy.begin_episode(seed);
  StepResult last;
  const double hard_stop = s.duration_s + sim.params().timeout_slack_s + 10.0;
  while (!sim.done() && sim.time_s() < hard_stop) {
    const auto valid = sim.valid_actions();
    const int action = policy.act(obs, valid);
    last = sim.step(action);
    obs = last.observation;
  }
  return last;
}

}  // namespace tsc::sim
