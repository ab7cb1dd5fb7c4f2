#pragma once

// Value-based control: from-scratch DQN over the intersection observation,
// plus the fixed-time and random baselines.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tsc/mlp.hpp"
#include "tsc/sim.hpp"

namespace tsc::agent {

inline constexpr int kObsWidth = sim::Observation::kEncodedWidth;

struct TrainConfig {
  double gamma = 0.99;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_decay_steps = 50000;
  int batch_size = 64;
  std::int64_t buffer_capacity = 100000;
  std::int64_t learning_starts = 1000;
  std::int64_t target_sync_interval = 1000;
  std::int64_t total_steps = 50000;
  std::vector<int> hidden_sizes = {64, 64};
  std::uint64_t seed = 0;

  std::uint64_t hash() const;
};

Mlp make_q_network(const TrainConfig& cfg);

// One Q value per action. Throws DivergenceError on non-finite outputs.
std::array<double, sim::kNumActions> q_values(const Mlp& net, const sim::Observation& obs);

// Epsilon-greedy restricted to `valid`; greedy ties break to the lowest index.
int select_action(const Mlp& net, const sim::Observation& obs, const std::vector<int>& valid,
                  double epsilon, std::mt19937_64& rng);

using ValidMask = std::array<bool, sim::kNumActions>;

struct Transition {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
  ValidMask next_valid{};
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::int64_t capacity) : capacity_(capacity) {}

  void push(Transition t);
  std::vector<const Transition*> sample(int batch_size, std::mt19937_64& rng) const;
  std::int64_t size() const { return static_cast<std::int64_t>(entries_.size()); }
  std::int64_t capacity() const { return capacity_; }

 private:
  std::int64_t capacity_;
  std::int64_t write_pos_ = 0;
  std::vector<Transition> entries_;
};

// Mean over the batch of (Q(s,a) - y)^2 with y = r + gamma * max over valid
// a' of Q_target(s',a'), and y = r on terminal transitions. When `out_grads`
// is given, the analytic gradient w.r.t. `net` is written there.
double td_loss(const std::vector<const Transition*>& batch, const Mlp& net,
               const Mlp& target_net, double gamma, Mlp::Gradients* out_grads = nullptr);

struct TrainResult {
  Mlp net;
  std::vector<double> episode_rewards;
  std::vector<double> episode_throughput;
  std::vector<double> losses;  // one sample per target sync
};

// Cycles through the training scenarios, one episode each, until total_steps
// environment steps have been taken. Deterministic given cfg.seed.
TrainResult train(const std::vector<scenario::Scenario>& scenarios, const TrainConfig& cfg,
                  const sim::SimParams& params = sim::SimParams{});

// -- Policies ---------------------------------------------------------------

class RandomPolicy : public sim::Policy {
 public:
  void begin_episode(std::uint64_t seed) override { rng_.seed(seed); }
  int act(const sim::Observation&, const std::vector<int>& valid) override;

 private:
  std::mt19937_64 rng_;
};

// Cyclic plan of (action, green seconds). The default plan gives 15 s to each
// of the four dual-through/left pairs. Forced single-valid actions (during
// transitions and minimum green) are always honored.
class FixedTimePolicy : public sim::Policy {
 public:
  struct Stage {
    int action;
    double green_s;
  };

  FixedTimePolicy();  // default 4x15 s plan
  explicit FixedTimePolicy(std::vector<Stage> plan);

  void begin_episode(std::uint64_t seed) override;
  int act(const sim::Observation& obs, const std::vector<int>& valid) override;

  double cycle_green_s() const;

 private:
  std::vector<Stage> plan_;
  size_t stage_ = 0;
};

class GreedyPolicy : public sim::Policy {
 public:
  GreedyPolicy(const Mlp* net, double epsilon = 0.0) : net_(net), epsilon_(epsilon) {}
  void begin_episode(std::uint64_t seed) override { rng_.seed(seed); }
  int act(const sim::Observation& obs, const std::vector<int>& valid) override;

 private:
  const Mlp* net_;
  double epsilon_;
  std::mt19937_64 rng_;
};

// -- Checkpoints -------------------------------------------------------------

void save_checkpoint(const Mlp& net, const TrainConfig& cfg, const std::string& path);

struct Checkpoint {
  Mlp net;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

// Loads and validates layer-size compatibility with the observation encoding.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tsc::agent
