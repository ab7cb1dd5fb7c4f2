// tsw — traffic-shift workbench CLI.
//
// Subcommands: generate, train, evaluate, experiment, ks-report, alarm.
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tsc/agent.hpp"
#include "tsc/errors.hpp"
#include "tsc/exp.hpp"
#include "tsc/metrics.hpp"
#include "tsc/rng.hpp"
#include "tsc/scenario.hpp"
#include "tsc/shift.hpp"
#include "tsc/sim.hpp"

namespace fs = std::filesystem;
using namespace tsc;

namespace {

using ConfigMap = std::map<std::string, std::string>;

// CLI flags win over config-file values, which win over built-in defaults.
template <typename T>
T resolved(const CLI::Option* opt, const T& cli_value, const ConfigMap& cfg,
           const std::string& key, const T& fallback);

template <>
double resolved(const CLI::Option* opt, const double& v, const ConfigMap& cfg,
                const std::string& key, const double& fb) {
  if (opt && opt->count() > 0) return v;
  if (auto it = cfg.find(key); it != cfg.end()) return std::stod(it->second);
  return fb;
}

template <>
std::int64_t resolved(const CLI::Option* opt, const std::int64_t& v, const ConfigMap& cfg,
                      const std::string& key, const std::int64_t& fb) {
  if (opt && opt->count() > 0) return v;
  if (auto it = cfg.find(key); it != cfg.end()) return std::stoll(it->second);
  return fb;
}

template <>
std::string resolved(const CLI::Option* opt, const std::string& v, const ConfigMap& cfg,
                     const std::string& key, const std::string& fb) {
  if (opt && opt->count() > 0) return v;
  if (auto it = cfg.find(key); it != cfg.end()) return it->second;
  return fb;
}

shift::TrafficDistribution parse_distribution(const std::string& csv) {
  auto vals = exp::parse_double_list(csv);
  if (vals.size() != shift::kNumPhases) throw ConfigError("distribution needs 8 values");
  shift::TrafficDistribution p{};
  std::copy(vals.begin(), vals.end(), p.begin());
  if (!shift::is_valid_pmf(p, 1e-9)) throw ConfigError("distribution is not a valid pmf");
  return p;
}

shift::PhaseCounts parse_counts(const std::string& csv) {
  auto vals = exp::parse_int_list(csv);
  if (vals.size() != shift::kNumPhases) throw ConfigError("counts need 8 values");
  shift::PhaseCounts c{};
  std::copy(vals.begin(), vals.end(), c.begin());
  return c;
}

scenario::PerturbMode parse_mode(const std::string& mode) {
  if (mode == "concentrated") return scenario::PerturbMode::kConcentrated;
  if (mode == "spread") return scenario::PerturbMode::kSpread;
  throw ConfigError("mode must be 'concentrated' or 'spread'");
}

// Training-reference distribution from whichever source the user gave.
struct TrainRef {
  shift::TrafficDistribution p{};
  std::int64_t volume = 0;
  scenario::Scenario scenario;
  bool has_scenario = false;
};

TrainRef load_train_ref(const std::string& train_scenario_path, std::int64_t uniform_volume,
                        std::uint64_t seed) {
  TrainRef ref;
  if (!train_scenario_path.empty()) {
    ref.scenario = scenario::load_scenario(train_scenario_path);
    ref.p = ref.scenario.distribution();
    ref.volume = static_cast<std::int64_t>(ref.scenario.vehicles.size());
    ref.has_scenario = true;
  } else if (uniform_volume > 0) {
    ref.p.fill(1.0 / shift::kNumPhases);
    ref.volume = uniform_volume;
    ref.scenario = scenario::generate_scenario(scenario::scale_volume(ref.p, uniform_volume),
                                               3600.0, seed, "uniform_train");
    ref.has_scenario = true;
  } else {
    throw ConfigError("provide --train-scenario or --uniform-volume");
  }
  return ref;
}

int cmd_generate(const std::string& counts_csv, const std::string& dist_csv,
                 std::int64_t volume, double duration, std::uint64_t seed,
                 const std::string& label, const std::string& out) {
  shift::PhaseCounts counts{};
  if (!counts_csv.empty()) {
    counts = parse_counts(counts_csv);
  } else if (!dist_csv.empty() && volume > 0) {
    counts = scenario::scale_volume(parse_distribution(dist_csv), volume);
  } else {
    throw ConfigError("provide --counts, or --distribution with --volume");
  }
  auto s = scenario::generate_scenario(counts, duration, seed, label);
  scenario::save_scenario(s, out);
  std::cout << "wrote " << out << " (" << s.vehicles.size() << " vehicles)\n";
  return 0;
}

int cmd_alarm(const std::string& ref_csv, const std::string& obs_csv, double threshold) {
  const auto p_ref = parse_distribution(ref_csv);
  const auto p_obs = parse_distribution(obs_csv);
  const double d = shift::phase_ks_distance(p_ref, p_obs);
  const auto state = exp::shift_alarm(p_ref, p_obs, threshold);
  std::printf("ks_distance=%.6f threshold=%.6f -> %s\n", d, threshold,
              state == exp::AlarmState::kAlarm ? "alarm" : "ok");
  return 0;
}

int cmd_ks_report(const TrainRef& ref, const std::vector<double>& levels,
                  scenario::PerturbMode mode, std::uint64_t seed, const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto rows = exp::ks_nonlinearity_report(ref.p, levels, mode, seed);
  const std::string csv_path = out_dir + "/ks_nonlinearity.csv";
  std::ofstream out(csv_path);
  out << "ks_level,cumulative_difference\n";
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f,%.9f\n", r.ks_level, r.cumulative_difference);
    out << buf;
    pts.emplace_back(r.ks_level, r.cumulative_difference);
  }
  exp::write_svg_chart(out_dir + "/ks_nonlinearity.svg",
                       "Cumulative difference vs phase KS distance", "phase KS distance",
                       "cumulative difference", {{"cumulative difference", pts}});
  std::cout << "wrote " << csv_path << " and ks_nonlinearity.svg\n";
  return 0;
}

int cmd_train(const TrainRef& ref, agent::TrainConfig cfg, int shuffles,
              const std::string& out_path) {
  std::vector<scenario::Scenario> training;
  for (int k = 0; k < shuffles; ++k) {
    training.push_back(scenario::shuffle_departures(ref.scenario, derive_seed(cfg.seed, 77, k)));
  }
  auto result = agent::train(training, cfg);
  agent::save_checkpoint(result.net, cfg, out_path);
  std::cout << "trained " << cfg.total_steps << " steps over " << result.episode_rewards.size()
            << " episodes; checkpoint: " << out_path << "\n";
  for (size_t i = 0; i < result.episode_throughput.size(); ++i) {
    std::printf("episode %zu: reward=%.0f throughput=%.4f\n", i, result.episode_rewards[i],
                result.episode_throughput[i]);
  }
  return 0;
}

int cmd_evaluate(const std::string& scenario_path, const std::string& checkpoint,
                 const std::string& policy_name, const TrainRef& ref,
                 const std::vector<std::uint64_t>& seeds, const std::string& event_log) {
  auto s = scenario::load_scenario(scenario_path);
  sim::SimParams params;

  std::optional<agent::Checkpoint> ck;
  if (!checkpoint.empty()) ck = agent::load_checkpoint(checkpoint);

  std::cout << metrics::results_csv_header() << "\n";
  for (auto seed : seeds) {
    std::unique_ptr<sim::Policy> policy;
    if (ck) {
      policy = std::make_unique<agent::GreedyPolicy>(&ck->net, 0.0);
    } else if (policy_name == "fixed") {
      policy = std::make_unique<agent::FixedTimePolicy>();
    } else if (policy_name == "random") {
      policy = std::make_unique<agent::RandomPolicy>();
    } else {
      throw ConfigError("provide --checkpoint or --policy {fixed|random}");
    }
    sim::Intersection sim(params);
    sim::run_episode(sim, s, *policy, seed);
    metrics::ResultRow row;
    row.scenario_label = s.label;
    row.ks_distance = shift::phase_ks_distance(ref.p, s.distribution());
    row.total_volume = static_cast<std::int64_t>(s.vehicles.size());
    row.seed = seed;
    row.report = metrics::aggregate(sim.events(), s.duration_s, params.free_flow_s());
    std::cout << metrics::to_csv_row(row) << "\n";
    if (!event_log.empty()) sim.write_event_log(event_log);
  }
  return 0;
}

int cmd_experiment(int which, const TrainRef& ref, const std::string& checkpoint,
                   const std::string& turn_counts, std::vector<double> ks_levels,
                   std::vector<std::int64_t> volumes, std::vector<std::uint64_t> seeds,
                   scenario::PerturbMode mode, int workers, std::uint64_t master_seed,
                   const std::string& out_dir) {
  if (checkpoint.empty()) throw ConfigError("experiment needs --checkpoint");
  auto ck = agent::load_checkpoint(checkpoint);
  fs::create_directories(out_dir);

  exp::ExperimentSpec spec;
  spec.p_train = ref.p;
  spec.train_volume = ref.volume;
  spec.seeds = seeds;
  spec.mode = mode;
  spec.workers = workers;
  spec.master_seed = master_seed;

  auto announce = [](const exp::ExperimentOutput& out) {
    for (const auto& p : out.artifact_paths) std::cout << "wrote " << p << "\n";
  };

  if (which == 1) {
    if (turn_counts.empty()) throw ConfigError("experiment 1 needs --turn-counts");
    spec.kind = exp::ExperimentKind::kRealScenarios;
    spec.real_hours = scenario::ingest_turn_counts(turn_counts);
    spec.out_dir = out_dir;
    announce(exp::run_experiment(spec, ck.net));
  } else if (which == 2) {
    // fixed-volume KS sweep
    spec.kind = exp::ExperimentKind::kFixedVolumeSweep;
    spec.ks_levels = ks_levels.empty() ? std::vector<double>{0.0, 0.02, 0.04, 0.08, 0.16}
                                       : ks_levels;
    spec.out_dir = out_dir + "/fixed_volume";
    fs::create_directories(spec.out_dir);
    announce(exp::run_experiment(spec, ck.net));
    // fixed-distribution volume sweep
    exp::ExperimentSpec spec2 = spec;
    spec2.kind = exp::ExperimentKind::kFixedDistributionSweep;
    spec2.volumes = volumes.empty()
                        ? std::vector<std::int64_t>{2000, 3000, 4000, 5000, 6000, 7000}
                        : volumes;
    spec2.out_dir = out_dir + "/fixed_distribution";
    fs::create_directories(spec2.out_dir);
    announce(exp::run_experiment(spec2, ck.net));
  } else if (which == 3) {
    spec.kind = exp::ExperimentKind::kGrid;
    spec.ks_levels = ks_levels.empty()
                         ? std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6}
                         : ks_levels;
    if (volumes.empty()) {
      for (std::int64_t v = 4000; v <= 7000; v += 250) volumes.push_back(v);
    }
    spec.volumes = volumes;
    spec.out_dir = out_dir;
    announce(exp::run_experiment(spec, ck.net));
  } else {
    throw ConfigError("experiment number must be 1, 2 or 3");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"traffic-shift workbench"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "key = value config file; flags override it");

  // shared options
  std::string train_scenario, checkpoint, out_dir = "out", mode_name = "spread";
  std::int64_t uniform_volume = 0;
  std::uint64_t seed = 7;
  std::vector<double> ks_levels;
  std::vector<std::int64_t> volumes;
  std::vector<std::uint64_t> seeds;
  std::int64_t workers = 4;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--train-scenario", train_scenario, "training scenario JSON");
    sub->add_option("--uniform-volume", uniform_volume,
                    "synthetic uniform training reference with this hourly volume");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out-dir", out_dir, "output directory");
  };

  // generate
  auto* gen = app.add_subcommand("generate", "build a scenario JSON from counts");
  std::string gen_counts, gen_dist, gen_label = "scenario", gen_out = "scenario.json";
  std::int64_t gen_volume = 0;
  double gen_duration = 3600.0;
  gen->add_option("--counts", gen_counts, "8 per-phase vehicle counts, comma separated");
  gen->add_option("--distribution", gen_dist, "8 probabilities, comma separated");
  gen->add_option("--volume", gen_volume, "total vehicles (with --distribution)");
  gen->add_option("--duration", gen_duration, "scenario duration in seconds");
  gen->add_option("--seed", seed, "departure-time seed");
  gen->add_option("--label", gen_label, "scenario label");
  gen->add_option("--out", gen_out, "output JSON path");

  // train
  auto* tr = app.add_subcommand("train", "train the DQN agent");
  agent::TrainConfig tcfg;
  std::int64_t tr_shuffles = 10;
  std::string tr_out = "checkpoint.json";
  add_common(tr);
  auto* opt_steps = tr->add_option("--steps", tcfg.total_steps, "environment steps");
  auto* opt_lr = tr->add_option("--learning-rate", tcfg.learning_rate, "SGD learning rate");
  auto* opt_gamma = tr->add_option("--gamma", tcfg.gamma, "discount factor");
  auto* opt_eps_end = tr->add_option("--epsilon-end", tcfg.epsilon_end, "final exploration rate");
  auto* opt_eps_decay = tr->add_option("--epsilon-decay-steps", tcfg.epsilon_decay_steps,
                                       "steps over which exploration anneals");
  tr->add_option("--batch-size", tcfg.batch_size, "replay minibatch size");
  tr->add_option("--target-sync", tcfg.target_sync_interval, "steps between target syncs");
  tr->add_option("--shuffles", tr_shuffles, "number of shuffled training scenarios");
  tr->add_option("--out", tr_out, "checkpoint output path");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "run a policy on one scenario");
  std::string ev_scenario, ev_policy, ev_event_log;
  add_common(ev);
  ev->add_option("--scenario", ev_scenario, "scenario JSON")->required();
  ev->add_option("--checkpoint", checkpoint, "trained agent checkpoint");
  ev->add_option("--policy", ev_policy, "baseline policy: fixed | random");
  ev->add_option("--seeds", seeds, "episode seeds");
  ev->add_option("--event-log", ev_event_log, "write per-vehicle event CSV here");

  // experiment
  auto* ex = app.add_subcommand("experiment", "reproduce experiment 1, 2 or 3");
  int ex_which = 2;
  std::string ex_turn_counts;
  ex->add_option("number", ex_which, "experiment number (1|2|3)")->required();
  add_common(ex);
  ex->add_option("--checkpoint", checkpoint, "trained agent checkpoint");
  ex->add_option("--turn-counts", ex_turn_counts, "turn-count CSV (experiment 1)");
  ex->add_option("--ks-levels", ks_levels, "phase KS distance levels");
  ex->add_option("--volumes", volumes, "total vehicle volumes");
  ex->add_option("--seeds", seeds, "evaluation seeds per scenario");
  ex->add_option("--mode", mode_name, "perturbation mode: concentrated | spread");
  ex->add_option("--workers", workers, "worker threads");

  // ks-report
  auto* ks = app.add_subcommand("ks-report", "KS-vs-cumulative-difference table");
  add_common(ks);
  ks->add_option("--ks-levels", ks_levels, "phase KS distance levels");
  ks->add_option("--mode", mode_name, "perturbation mode");

  // alarm
  auto* al = app.add_subcommand("alarm", "threshold check between two distributions");
  std::string al_ref, al_obs;
  double al_threshold = 0.04;
  al->add_option("--reference", al_ref, "8 reference probabilities")->required();
  al->add_option("--observed", al_obs, "8 observed probabilities")->required();
  al->add_option("--threshold", al_threshold, "alarm threshold on phase KS distance");

  CLI11_PARSE(app, argc, argv);

  try {
    ConfigMap cfg;
    if (!config_path.empty()) cfg = exp::parse_config_file(config_path);

    if (gen->parsed()) {
      return cmd_generate(gen_counts, gen_dist, gen_volume, gen_duration, seed, gen_label,
                          gen_out);
    }
    if (al->parsed()) return cmd_alarm(al_ref, al_obs, al_threshold);

    // config-file fallbacks for the heavier subcommands
    train_scenario = resolved(nullptr, train_scenario, cfg, "train_scenario",
                              train_scenario);
    if (uniform_volume == 0 && cfg.count("uniform_volume")) {
      uniform_volume = std::stoll(cfg.at("uniform_volume"));
    }
    if (ks_levels.empty() && cfg.count("ks_levels")) {
      ks_levels = exp::parse_double_list(cfg.at("ks_levels"));
    }
    if (volumes.empty() && cfg.count("volumes")) {
      volumes = exp::parse_int_list(cfg.at("volumes"));
    }
    if (seeds.empty() && cfg.count("seeds")) {
      for (auto v : exp::parse_int_list(cfg.at("seeds"))) {
        seeds.push_back(static_cast<std::uint64_t>(v));
      }
    }
    if (seeds.empty()) seeds = {1, 2, 3};
    mode_name = resolved(nullptr, mode_name, cfg, "mode", mode_name);

    if (ks->parsed()) {
      auto ref = load_train_ref(train_scenario, uniform_volume, seed);
      if (ks_levels.empty()) ks_levels = {0.0, 0.02, 0.04, 0.08, 0.16};
      return cmd_ks_report(ref, ks_levels, parse_mode(mode_name), seed, out_dir);
    }
    if (tr->parsed()) {
      auto ref = load_train_ref(train_scenario, uniform_volume, seed);
      tcfg.seed = seed;
      tcfg.total_steps = resolved(opt_steps, tcfg.total_steps, cfg, "steps", tcfg.total_steps);
      tcfg.learning_rate =
          resolved(opt_lr, tcfg.learning_rate, cfg, "learning_rate", tcfg.learning_rate);
      tcfg.gamma = resolved(opt_gamma, tcfg.gamma, cfg, "gamma", tcfg.gamma);
      tcfg.epsilon_end =
          resolved(opt_eps_end, tcfg.epsilon_end, cfg, "epsilon_end", tcfg.epsilon_end);
      tcfg.epsilon_decay_steps = resolved(opt_eps_decay, tcfg.epsilon_decay_steps, cfg,
                                          "epsilon_decay_steps", tcfg.epsilon_decay_steps);
      return cmd_train(ref, tcfg, static_cast<int>(tr_shuffles), tr_out);
    }
    if (ev->parsed()) {
      auto ref = load_train_ref(train_scenario, uniform_volume, seed);
      return cmd_evaluate(ev_scenario, checkpoint, ev_policy, ref, seeds, ev_event_log);
    }
    if (ex->parsed()) {
      auto ref = load_train_ref(train_scenario, uniform_volume, seed);
      return cmd_experiment(ex_which, ref, checkpoint, ex_turn_counts, ks_levels, volumes,
                            seeds, parse_mode(mode_name), static_cast<int>(workers), seed,
                            out_dir);
    }
    throw ConfigError("no subcommand");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
