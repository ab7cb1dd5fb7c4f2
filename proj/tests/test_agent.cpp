#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <doctest.h>

#include "tsc/agent.hpp"
#include "tsc/errors.hpp"
#include "tsc/metrics.hpp"

using namespace tsc;
using agent::Mlp;
using agent::Transition;

namespace {

sim::Observation blank_observation() {
  sim::Observation o;
  o.detected_vehicles.fill(0);
  o.color.fill(sim::SignalColor::kRed);
  o.elapsed_in_color_s.fill(0.0);
  return o;
}

void zero_weights(Mlp& net) {
  std::vector<double> flat(net.parameter_count(), 0.0);
  net.set_parameters(flat);
}

std::vector<double> random_state(int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<double> x(width);
  for (auto& v : x) v = uni(rng);
  return x;
}

}  // namespace

TEST_CASE("q network has the observation width and action count") {
  agent::TrainConfig cfg;
  cfg.seed = 3;
  auto net = agent::make_q_network(cfg);
  CHECK(net.input_width() == agent::kObsWidth);
  CHECK(net.output_width() == sim::kNumActions);

  auto net2 = agent::make_q_network(cfg);
  CHECK(net.parameters() == net2.parameters());

  cfg.seed = 4;
  auto net3 = agent::make_q_network(cfg);
  CHECK(net.parameters() != net3.parameters());
}

TEST_CASE("zero weights give zero q values") {
  agent::TrainConfig cfg;
  auto net = agent::make_q_network(cfg);
  zero_weights(net);
  auto q = agent::q_values(net, blank_observation());
  for (double v : q) CHECK(v == 0.0);
}

TEST_CASE("q values follow the output bias when weights are zero") {
  agent::TrainConfig cfg;
  auto net = agent::make_q_network(cfg);
  zero_weights(net);
  net.biases.back()(5) = 2.5;
  auto q = agent::q_values(net, blank_observation());
  CHECK(q[5] == 2.5);
  CHECK(q[0] == 0.0);
}

TEST_CASE("non-finite outputs raise DivergenceError") {
  agent::TrainConfig cfg;
  auto net = agent::make_q_network(cfg);
  zero_weights(net);
  net.biases.back()(0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(agent::q_values(net, blank_observation()), DivergenceError);
}

TEST_CASE("epsilon 1 explores uniformly over the valid set") {
  agent::TrainConfig cfg;
  auto net = agent::make_q_network(cfg);
  auto obs = blank_observation();
  std::vector<int> valid{0, 2, 4, 7};
  std::mt19937_64 rng(12);

  std::array<int, sim::kNumActions> counts{};
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) ++counts[agent::select_action(net, obs, valid, 1.0, rng)];

  for (int a = 0; a < sim::kNumActions; ++a) {
    const bool allowed = std::find(valid.begin(), valid.end(), a) != valid.end();
    if (!allowed) {
      CHECK(counts[a] == 0);
      continue;
    }
    const double expected = draws / 4.0;
    const double sigma = std::sqrt(draws * 0.25 * 0.75);
    CHECK(std::abs(counts[a] - expected) < 4.0 * sigma);
  }
}

TEST_CASE("greedy selection respects the mask and breaks ties low") {
  agent::TrainConfig cfg;
  auto net = agent::make_q_network(cfg);
  zero_weights(net);
  auto obs = blank_observation();
  std::mt19937_64 rng(1);

  // all-zero q: tie broken to the lowest valid index
  CHECK(agent::select_action(net, obs, {2, 5}, 0.0, rng) == 2);

  net.biases.back()(7) = 1.0;
  CHECK(agent::select_action(net, obs, {0, 1, 2, 3, 4, 5, 6, 7}, 0.0, rng) == 7);
  CHECK(agent::select_action(net, obs, {1, 3, 6}, 0.0, rng) == 1);  // 7 masked out

  // constant shifts never change the argmax
  for (int a = 0; a < sim::kNumActions; ++a) net.biases.back()(a) += 10.0;
  CHECK(agent::select_action(net, obs, {0, 1, 2, 3, 4, 5, 6, 7}, 0.0, rng) == 7);

  CHECK_THROWS_AS(agent::select_action(net, obs, {}, 0.0, rng), std::invalid_argument);
}

TEST_CASE("td loss is zero when predictions match the targets") {
  Mlp net({4, 8}, 1);
  zero_weights(net);
  Mlp target = net;

  Transition t;
  t.state = {0.0, 0.0, 0.0, 0.0};
  t.next_state = t.state;
  t.action = 2;
  t.reward = 0.0;
  t.done = true;
  std::vector<const Transition*> batch{&t};
  CHECK(agent::td_loss(batch, net, target, 0.99) == 0.0);

  // Q(s,a)=3, terminal reward 3: still zero
  net.biases.back()(2) = 3.0;
  t.reward = 3.0;
  CHECK(agent::td_loss(batch, net, target, 0.99) == 0.0);
}

TEST_CASE("td loss matches the hand-computed value") {
  Mlp net({4, 8}, 1);
  zero_weights(net);
  Mlp target({4, 8}, 2);
  zero_weights(target);
  target.biases.back()(6) = 2.0;  // max target Q over valid actions

  Transition t;
  t.state = {0.0, 0.0, 0.0, 0.0};
  t.next_state = t.state;
  t.action = 1;
  t.reward = 1.0;
  t.done = false;
  t.next_valid.fill(true);
  std::vector<const Transition*> batch{&t};

  // y = 1 + 0.9 * 2 = 2.8, Q(s,a) = 0, loss = 7.84
  CHECK(agent::td_loss(batch, net, target, 0.9) == doctest::Approx(7.84).epsilon(1e-12));

  // masking action 6 drops the bootstrap to 0: y = 1, loss = 1
  t.next_valid[6] = false;
  CHECK(agent::td_loss(batch, net, target, 0.9) == doctest::Approx(1.0).epsilon(1e-12));

  // terminal: bootstrap ignored entirely
  t.done = true;
  t.next_valid.fill(true);
  CHECK(agent::td_loss(batch, net, target, 0.9) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("analytic td gradients match central finite differences") {
  const int width = 6;
  Mlp net({width, 7, 8}, 11);
  Mlp target({width, 7, 8}, 12);

  std::mt19937_64 rng(31);
  std::vector<Transition> storage;
  for (int k = 0; k < 5; ++k) {
    Transition t;
    t.state = random_state(width, rng);
    t.next_state = random_state(width, rng);
    t.action = static_cast<int>(rng() % sim::kNumActions);
    t.reward = static_cast<double>(rng() % 3);
    t.done = (k == 4);
    t.next_valid.fill(false);
    t.next_valid[rng() % sim::kNumActions] = true;
    t.next_valid[rng() % sim::kNumActions] = true;
    storage.push_back(std::move(t));
  }
  std::vector<const Transition*> batch;
  for (auto& t : storage) batch.push_back(&t);

  Mlp::Gradients grads;
  agent::td_loss(batch, net, target, 0.95, &grads);

  // flatten analytic gradients in the same layer-major order as parameters()
  std::vector<double> flat_grad;
  for (size_t layer = 0; layer < grads.dw.size(); ++layer) {
    const auto& w = grads.dw[layer];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat_grad.push_back(w(r, c));
    }
    const auto& b = grads.db[layer];
    for (Eigen::Index r = 0; r < b.size(); ++r) flat_grad.push_back(b(r));
  }
  auto params = net.parameters();
  REQUIRE(flat_grad.size() == params.size());

  const double h = 1e-6;
  for (size_t i = 0; i < params.size(); ++i) {
    auto plus = params;
    auto minus = params;
    plus[i] += h;
    minus[i] -= h;
    Mlp net_p = net;
    Mlp net_m = net;
    net_p.set_parameters(plus);
    net_m.set_parameters(minus);
    const double numeric =
        (agent::td_loss(batch, net_p, target, 0.95) - agent::td_loss(batch, net_m, target, 0.95)) /
        (2.0 * h);
    const double scale = std::max({1.0, std::abs(numeric), std::abs(flat_grad[i])});
    CHECK(std::abs(flat_grad[i] - numeric) <= 1e-4 * scale);
  }
}

TEST_CASE("replay buffer is a ring and samples near-uniformly") {
  agent::ReplayBuffer buf(100);
  for (int i = 0; i < 110; ++i) {
    Transition t;
    t.reward = static_cast<double>(i);
    buf.push(std::move(t));
  }
  CHECK(buf.size() == 100);

  std::mt19937_64 rng(5);
  std::array<int, 110> seen{};
  const int rounds = 30000;
  for (int r = 0; r < rounds; ++r) {
    auto batch = buf.sample(10, rng);
    CHECK(batch.size() == 10);
    std::set<const Transition*> uniq(batch.begin(), batch.end());
    CHECK(uniq.size() == batch.size());
    for (auto* t : batch) ++seen[static_cast<int>(t->reward)];
  }
  // entries 0..9 were overwritten
  for (int i = 0; i < 10; ++i) CHECK(seen[i] == 0);
  const double expected = rounds * 10.0 / 100.0;
  const double sigma = std::sqrt(rounds * 0.1 * 0.9);
  for (int i = 10; i < 110; ++i) {
    CHECK(std::abs(seen[i] - expected) < 4.5 * sigma);
  }

  agent::ReplayBuffer tiny(4);
  tiny.push(Transition{});
  CHECK_THROWS_AS(tiny.sample(2, rng), std::logic_error);
}

TEST_CASE("checkpoints round trip through json") {
  agent::TrainConfig cfg;
  cfg.seed = 9;
  cfg.hidden_sizes = {16, 16};
  auto net = agent::make_q_network(cfg);

  auto path = (std::filesystem::temp_directory_path() / "tsc_ckpt.json").string();
  agent::save_checkpoint(net, cfg, path);
  auto ck = agent::load_checkpoint(path);
  CHECK(ck.net.parameters() == net.parameters());
  CHECK(ck.net.layer_sizes() == net.layer_sizes());
  CHECK(ck.config_hash == cfg.hash());
  CHECK(ck.seed == 9);

  CHECK_THROWS_AS(agent::load_checkpoint("/nonexistent/ckpt.json"), ParseError);

  auto bad = (std::filesystem::temp_directory_path() / "tsc_ckpt_bad.json").string();
  {
    std::ofstream out(bad);
    out << R"({"version":1,"layer_sizes":[3,8],"parameters":[],"config_hash":0,"seed":0})";
  }
  CHECK_THROWS_AS(agent::load_checkpoint(bad), ParseError);
}

TEST_CASE("config hash separates distinct configurations") {
  agent::TrainConfig a, b;
  CHECK(a.hash() == b.hash());
  b.learning_rate = 2e-3;
  CHECK(a.hash() != b.hash());
  b = a;
  b.hidden_sizes = {64, 64, 64};
  CHECK(a.hash() != b.hash());
}

TEST_CASE("fixed time policy validates its plan") {
  using Stage = agent::FixedTimePolicy::Stage;
  CHECK_THROWS_AS(agent::FixedTimePolicy(std::vector<Stage>{}), std::invalid_argument);
  // (2,6) and (1,5) alone leave phases 3,4,7,8 unserved
  std::vector<Stage> partial{{3, 15.0}, {0, 15.0}};
  CHECK_THROWS_AS(agent::FixedTimePolicy{partial}, std::invalid_argument);
  std::vector<Stage> negative{{3, -1.0}, {0, 15.0}, {7, 15.0}, {4, 15.0}};
  CHECK_THROWS_AS(agent::FixedTimePolicy{negative}, std::invalid_argument);
  agent::FixedTimePolicy ok;
  CHECK(ok.cycle_green_s() == 60.0);
}

TEST_CASE("short training run learns a single-pair scenario") {
  shift::PhaseCounts counts{0, 90, 0, 0, 0, 90, 0, 0};  // all demand on (2,6)
  auto s = scenario::generate_scenario(counts, 300.0, 7, "pair26");

  agent::TrainConfig cfg;
  cfg.seed = 5;
  cfg.hidden_sizes = {32, 32};
  cfg.total_steps = 6000;
  cfg.epsilon_decay_steps = 4000;
  cfg.learning_starts = 200;
  cfg.buffer_capacity = 6000;
  cfg.target_sync_interval = 250;

  auto result = agent::train({s}, cfg);
  CHECK_FALSE(result.losses.empty());
  for (double l : result.losses) CHECK(std::isfinite(l));
  CHECK_FALSE(result.episode_throughput.empty());

  agent::GreedyPolicy greedy(&result.net);
  agent::RandomPolicy random;
  sim::Intersection a, b;
  sim::run_episode(a, s, greedy, 99);
  sim::run_episode(b, s, random, 99);
  const double ft =
      metrics::normalized_throughput(a.events(), static_cast<std::int64_t>(s.vehicles.size()),
                                     s.duration_s);
  const double rt =
      metrics::normalized_throughput(b.events(), static_cast<std::int64_t>(s.vehicles.size()),
                                     s.duration_s);
  CHECK(ft >= rt);
}
