#include "tsc/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "tsc/errors.hpp"
#include "tsc/metrics.hpp"
#include "tsc/rng.hpp"

namespace tsc::agent {

std::uint64_t TrainConfig::hash() const {
  char buf[512];
  std::string hidden;
  for (int h : hidden_sizes) hidden += std::to_string(h) + ",";
  std::snprintf(buf, sizeof(buf),
                "g=%.17g lr=%.17g mom=%.17g e0=%.17g e1=%.17g ed=%lld b=%d cap=%lld ls=%lld "
                "ts=%lld n=%lld hidden=%s seed=%llu",
                gamma, learning_rate, momentum, epsilon_start, epsilon_end,
                static_cast<long long>(epsilon_decay_steps), batch_size,
                static_cast<long long>(buffer_capacity), static_cast<long long>(learning_starts),
                static_cast<long long>(target_sync_interval), static_cast<long long>(total_steps),
                hidden.c_str(), static_cast<unsigned long long>(seed));
  // FNV-1a
  std::uint64_t h = 14695981039346656037ULL;
  for (const char* p = buf; *p; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 1099511628211ULL;
  }
  return h;
}

Mlp make_q_network(const TrainConfig& cfg) {
  std::vector<int> sizes;
  sizes.push_back(kObsWidth);
  for (int h : cfg.hidden_sizes) sizes.push_back(h);
  sizes.push_back(sim::kNumActions);
  return Mlp(sizes, derive_seed(cfg.seed, 0x6e6574 /*"net"*/));
}

std::array<double, sim::kNumActions> q_values(const Mlp& net, const sim::Observation& obs) {
  const auto enc = obs.encode();
  Eigen::Map<const Eigen::VectorXd> x(enc.data(), static_cast<Eigen::Index>(enc.size()));
  Eigen::MatrixXd q = net.forward(x);
  std::array<double, sim::kNumActions> out{};
  for (int a = 0; a < sim::kNumActions; ++a) {
    out[a] = q(a, 0);
    if (!std::isfinite(out[a])) throw DivergenceError("non-finite Q output");
  }
  return out;
}

int select_action(const Mlp& net, const sim::Observation& obs, const std::vector<int>& valid,
                  double epsilon, std::mt19937_64& rng) {
  if (valid.empty()) throw std::invalid_argument("valid action set must be non-empty");
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    if (uni(rng) < epsilon) {
      std::uniform_int_distribution<size_t> pick(0, valid.size() - 1);
      return valid[pick(rng)];
    }
  }
  const auto q = q_values(net, obs);
  int best = valid.front();
  for (int a : valid) {
    if (q[a] > q[best]) best = a;
  }
  return best;
}

void ReplayBuffer::push(Transition t) {
  if (static_cast<std::int64_t>(entries_.size()) < capacity_) {
    entries_.push_back(std::move(t));
  } else {
    entries_[write_pos_] = std::move(t);
  }
  write_pos_ = (write_pos_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(int batch_size, std::mt19937_64& rng) const {
  const auto n = static_cast<std::int64_t>(entries_.size());
  if (n < batch_size) throw std::logic_error("replay buffer smaller than batch");
  // Floyd's sampling: batch indices distinct, uniform over the buffer.
  std::unordered_set<std::int64_t> chosen;
  std::vector<const Transition*> out;
  out.reserve(batch_size);
  for (std::int64_t i = n - batch_size; i < n; ++i) {
    std::uniform_int_distribution<std::int64_t> pick(0, i);
    std::int64_t j = pick(rng);
    if (!chosen.insert(j).second) {
      chosen.insert(i);
      out.push_back(&entries_[i]);
    } else {
      out.push_back(&entries_[j]);
    }
  }
  return out;
}

double td_loss(const std::vector<const Transition*>& batch, const Mlp& net,
               const Mlp& target_net, double gamma, Mlp::Gradients* out_grads) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const int b = static_cast<int>(batch.size());
  const int width = net.input_width();

  Eigen::MatrixXd s(width, b), s2(width, b);
  for (int k = 0; k < b; ++k) {
    for (int i = 0; i < width; ++i) {
      s(i, k) = batch[k]->state[i];
      s2(i, k) = batch[k]->next_state[i];
    }
  }

  Mlp::Cache cache;
  Eigen::MatrixXd q = net.forward(s, &cache);
  Eigen::MatrixXd q2 = target_net.forward(s2);

  double loss = 0.0;
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  for (int k = 0; k < b; ++k) {
    double y = batch[k]->reward;
    if (!batch[k]->done) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < sim::kNumActions; ++a) {
        if (batch[k]->next_valid[a]) best = std::max(best, q2(a, k));
      }
      y += gamma * best;
    }
    const double diff = q(batch[k]->action, k) - y;
    loss += diff * diff / b;
    d_out(batch[k]->action, k) = 2.0 * diff / b;
  }

  if (out_grads) *out_grads = net.backward(cache, d_out);
  return loss;
}

namespace {

ValidMask mask_from(const std::vector<int>& valid) {
  ValidMask m{};
  for (int a : valid) m[a] = true;
  return m;
}

}  // namespace

TrainResult train(const std::vector<scenario::Scenario>& scenarios, const TrainConfig& cfg,
                  const sim::SimParams& params) {
  if (scenarios.empty()) throw std::invalid_argument("need at least one training scenario");

  Mlp net = make_q_network(cfg);
  Mlp target = net;
  SgdMomentum opt(cfg.learning_rate, cfg.momentum);
  ReplayBuffer buffer(cfg.buffer_capacity);
  std::mt19937_64 rng_action(derive_seed(cfg.seed, 0xac7));
  std::mt19937_64 rng_sample(derive_seed(cfg.seed, 0x5a3));

  TrainResult result{net, {}, {}, {}};
  sim::Intersection sim(params);

  std::int64_t steps = 0;
  std::int64_t episode = 0;
  double last_loss = 0.0;
  const std::int64_t warmup = std::max<std::int64_t>(cfg.batch_size, cfg.learning_starts);

  while (steps < cfg.total_steps) {
    const auto& scen = scenarios[episode % scenarios.size()];
    auto obs = sim.reset(scen, derive_seed(cfg.seed, 0xe9, episode));
    double ep_reward = 0.0;

    while (!sim.done() && steps < cfg.total_steps) {
      const double frac =
          cfg.epsilon_decay_steps > 0
              ? std::min(1.0, static_cast<double>(steps) / cfg.epsilon_decay_steps)
              : 1.0;
      const double eps = cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);

      const auto valid = sim.valid_actions();
      const int action = select_action(net, obs, valid, eps, rng_action);
      const auto res = sim.step(action);

      Transition t;
      t.state = obs.encode();
      t.action = action;
      t.reward = res.reward;
      t.next_state = res.observation.encode();
      t.done = res.done;
      if (res.done) {
        t.next_valid.fill(true);
      } else {
        t.next_valid = mask_from(sim.valid_actions());
      }
      buffer.push(std::move(t));

      obs = res.observation;
      ep_reward += res.reward;
      ++steps;

      if (buffer.size() >= warmup) {
        auto batch = buffer.sample(cfg.batch_size, rng_sample);
        Mlp::Gradients grads;
        last_loss = td_loss(batch, net, target, cfg.gamma, &grads);
        if (!std::isfinite(last_loss)) throw DivergenceError("TD loss became non-finite");
        opt.apply(net, grads);
      }
      if (steps % cfg.target_sync_interval == 0) {
        target = net;
        result.losses.push_back(last_loss);
      }
    }

    if (sim.done()) {
      result.episode_rewards.push_back(ep_reward);
      result.episode_throughput.push_back(metrics::normalized_throughput(
          sim.events(), static_cast<std::int64_t>(sim.events().size()), scen.duration_s));
      ++episode;
    }
  }

  result.net = net;
  return result;
}

int RandomPolicy::act(const sim::Observation&, const std::vector<int>& valid) {
  std::uniform_int_distribution<size_t> pick(0, valid.size() - 1);
  return valid[pick(rng_)];
}

FixedTimePolicy::FixedTimePolicy()
    : FixedTimePolicy(std::vector<Stage>{{3, 15.0}, {0, 15.0}, {7, 15.0}, {4, 15.0}}) {}
// 3=(2,6), 0=(1,5), 7=(4,8), 4=(3,7): covers all 8 phases

FixedTimePolicy::FixedTimePolicy(std::vector<Stage> plan) : plan_(std::move(plan)) {
  if (plan_.empty()) throw std::invalid_argument("empty fixed-time plan");
  std::array<bool, shift::kNumPhases> covered{};
  for (const auto& st : plan_) {
    if (st.action < 0 || st.action >= sim::kNumActions || st.green_s <= 0.0) {
      throw std::invalid_argument("bad fixed-time stage");
    }
    covered[sim::kActionPhases[st.action].first - 1] = true;
    covered[sim::kActionPhases[st.action].second - 1] = true;
  }
  for (bool c : covered) {
    if (!c) throw std::invalid_argument("fixed-time plan must cover all 8 phases");
  }
}

void FixedTimePolicy::begin_episode(std::uint64_t /*seed*/) { stage_ = 0; }

int FixedTimePolicy::act(const sim::Observation& obs, const std::vector<int>& valid) {
  if (valid.size() == 1) return valid.front();
  const auto& st = plan_[stage_];
  const auto [p1, p2] = sim::kActionPhases[st.action];
  const bool stage_green = obs.color[p1 - 1] == sim::SignalColor::kGreen &&
                           obs.color[p2 - 1] == sim::SignalColor::kGreen;
  if (stage_green &&
      std::min(obs.elapsed_in_color_s[p1 - 1], obs.elapsed_in_color_s[p2 - 1]) >= st.green_s) {
    stage_ = (stage_ + 1) % plan_.size();
  }
  return plan_[stage_].action;
}

double FixedTimePolicy::cycle_green_s() const {
  double total = 0.0;
  for (const auto& st : plan_) total += st.green_s;
  return total;
}

int GreedyPolicy::act(const sim::Observation& obs, const std::vector<int>& valid) {
  return select_action(*net_, obs, valid, epsilon_, rng_);
}

void save_checkpoint(const Mlp& net, const TrainConfig& cfg, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["layer_sizes"] = net.layer_sizes();
  j["parameters"] = net.parameters();
  j["config_hash"] = cfg.hash();
  j["seed"] = cfg.seed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint json: ") + e.what());
  }
  if (j.at("version").get<int>() != 1) throw ParseError("unsupported checkpoint version");
  auto sizes = j.at("layer_sizes").get<std::vector<int>>();
  if (sizes.size() < 2 || sizes.front() != kObsWidth || sizes.back() != sim::kNumActions) {
    throw ParseError("checkpoint layer sizes incompatible with observation encoding");
  }
  Mlp net(sizes, 0);
  net.set_parameters(j.at("parameters").get<std::vector<double>>());
  Checkpoint ck{std::move(net), j.at("config_hash").get<std::uint64_t>(),
                j.at("seed").get<std::uint64_t>()};
  return ck;
}

}  // namespace tsc::agent
