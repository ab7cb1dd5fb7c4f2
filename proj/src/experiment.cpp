#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include "tsc/errors.hpp"
#include "tsc/exp.hpp"
#include "tsc/rng.hpp"

namespace tsc::exp {

using scenario::Scenario;
using shift::TrafficDistribution;

metrics::ResultRow evaluate_scenario(const Scenario& s, sim::Policy& policy, std::uint64_t seed,
                                     const TrafficDistribution& p_train,
                                     const sim::SimParams& params) {
  sim::Intersection sim(params);
  sim::run_episode(sim, s, policy, seed);
  metrics::ResultRow row;
  row.scenario_label = s.label;
  row.ks_distance = shift::phase_ks_distance(p_train, s.distribution());
  row.total_volume = static_cast<std::int64_t>(s.vehicles.size());
  row.seed = seed;
  row.report = metrics::aggregate(sim.events(), s.duration_s, params.free_flow_s());
  return row;
}

namespace {

struct Job {
  Scenario scenario;
  std::uint64_t seed;
};

std::vector<metrics::ResultRow> run_jobs(const std::vector<Job>& jobs, const agent::Mlp& net,
                                         const sim::SimParams& params,
                                         const TrafficDistribution& p_train, int workers) {
  std::vector<metrics::ResultRow> rows(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    agent::GreedyPolicy policy(&net, 0.0);
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      rows[i] = evaluate_scenario(jobs[i].scenario, policy, jobs[i].seed, p_train, params);
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.scenario_label != b.scenario_label) return a.scenario_label < b.scenario_label;
    return a.seed < b.seed;
  });
  return rows;
}

std::string label_for(double ks, std::int64_t volume) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "ks%.3f_vol%lld", ks, static_cast<long long>(volume));
  return buf;
}

// mean metric per x, grouped and sorted by x
std::vector<std::pair<double, double>> mean_by(
    const std::vector<metrics::ResultRow>& rows,
    double (*x_of)(const metrics::ResultRow&), double (*y_of)(const metrics::ResultRow&)) {
  std::map<double, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    auto& [sum, n] = acc[x_of(r)];
    sum += y_of(r);
    n += 1;
  }
  std::vector<std::pair<double, double>> out;
  for (const auto& [x, sn] : acc) out.emplace_back(x, sn.first / sn.second);
  return out;
}

double x_ks(const metrics::ResultRow& r) { return r.ks_distance; }
double x_vol(const metrics::ResultRow& r) { return static_cast<double>(r.total_volume); }
double y_thr(const metrics::ResultRow& r) { return r.report.normalized_throughput; }
double y_ett(const metrics::ResultRow& r) { return r.report.mean_extended_travel_time_s; }
double y_delay(const metrics::ResultRow& r) { return r.report.mean_delay_s; }

}  // namespace

ExperimentOutput run_experiment(const ExperimentSpec& spec, const agent::Mlp& net,
                                const sim::SimParams& params) {
  std::vector<Job> jobs;
  TrafficDistribution p_train = spec.p_train;

  switch (spec.kind) {
    case ExperimentKind::kRealScenarios: {
      if (spec.real_hours.empty()) throw ConfigError("real_scenarios needs ingested hours");
      p_train = shift::normalize(spec.real_hours.front().second);
      for (size_t hi = 0; hi < spec.real_hours.size(); ++hi) {
        const auto& [label, counts] = spec.real_hours[hi];
        for (auto seed : spec.seeds) {
          auto s = scenario::generate_scenario(counts, spec.duration_s,
                                               derive_seed(spec.master_seed, hi, seed), label);
          jobs.push_back({std::move(s), seed});
        }
      }
      break;
    }
    case ExperimentKind::kFixedVolumeSweep: {
      if (spec.ks_levels.empty()) throw ConfigError("fixed_volume_sweep needs ks_levels");
      if (spec.train_volume < 1) throw ConfigError("fixed_volume_sweep needs train_volume");
      for (size_t li = 0; li < spec.ks_levels.size(); ++li) {
        auto q = scenario::perturb_to_ks(p_train, spec.ks_levels[li], spec.mode,
                                         spec.master_seed);
        auto counts = scenario::scale_volume(q, spec.train_volume);
        for (auto seed : spec.seeds) {
          auto s = scenario::generate_scenario(counts, spec.duration_s,
                                               derive_seed(spec.master_seed, li, seed),
                                               label_for(spec.ks_levels[li], spec.train_volume));
          jobs.push_back({std::move(s), seed});
        }
      }
      break;
    }
    case ExperimentKind::kFixedDistributionSweep: {
      if (spec.volumes.empty()) throw ConfigError("fixed_distribution_sweep needs volumes");
      for (size_t vi = 0; vi < spec.volumes.size(); ++vi) {
        auto counts = scenario::scale_volume(p_train, spec.volumes[vi]);
        for (auto seed : spec.seeds) {
          auto s = scenario::generate_scenario(counts, spec.duration_s,
                                               derive_seed(spec.master_seed, 1000 + vi, seed),
                                               label_for(0.0, spec.volumes[vi]));
          jobs.push_back({std::move(s), seed});
        }
      }
      break;
    }
    case ExperimentKind::kGrid: {
      if (spec.ks_levels.empty() || spec.volumes.empty()) {
        throw ConfigError("grid needs both ks_levels and volumes");
      }
      for (size_t li = 0; li < spec.ks_levels.size(); ++li) {
        auto q = scenario::perturb_to_ks(p_train, spec.ks_levels[li], spec.mode,
                                         spec.master_seed);
        for (size_t vi = 0; vi < spec.volumes.size(); ++vi) {
          auto counts = scenario::scale_volume(q, spec.volumes[vi]);
          for (auto seed : spec.seeds) {
            auto s = scenario::generate_scenario(
                counts, spec.duration_s, derive_seed(spec.master_seed, li * 977 + vi, seed),
                label_for(spec.ks_levels[li], spec.volumes[vi]));
            jobs.push_back({std::move(s), seed});
          }
        }
      }
      break;
    }
  }

  ExperimentOutput out;
  out.rows = run_jobs(jobs, net, params, p_train, spec.workers);

  const std::string csv_path = spec.out_dir + "/results.csv";
  metrics::write_results_csv(out.rows, csv_path);
  out.artifact_paths.push_back(csv_path);

  auto emit = [&](const std::string& file, const std::string& title, const std::string& xl,
                  const std::string& yl, const std::vector<Series>& series) {
    const std::string path = spec.out_dir + "/" + file;
    write_svg_chart(path, title, xl, yl, series);
    out.artifact_paths.push_back(path);
  };

  switch (spec.kind) {
    case ExperimentKind::kRealScenarios:
    case ExperimentKind::kFixedVolumeSweep: {
      emit("throughput_vs_ks.svg", "Normalized throughput vs phase KS distance",
           "phase KS distance", "normalized throughput",
           {{"throughput", mean_by(out.rows, x_ks, y_thr)}});
      emit("ett_vs_ks.svg", "Extended travel time vs phase KS distance", "phase KS distance",
           "mean ETT [s]", {{"ETT", mean_by(out.rows, x_ks, y_ett)}});
      emit("delay_vs_ks.svg", "Intersection delay vs phase KS distance", "phase KS distance",
           "mean delay [s]", {{"delay", mean_by(out.rows, x_ks, y_delay)}});
      break;
    }
    case ExperimentKind::kFixedDistributionSweep: {
      emit("throughput_vs_volume.svg", "Normalized throughput vs total volume",
           "total vehicle volume", "normalized throughput",
           {{"throughput", mean_by(out.rows, x_vol, y_thr)}});
      emit("ett_vs_volume.svg", "Extended travel time vs total volume", "total vehicle volume",
           "mean ETT [s]", {{"ETT", mean_by(out.rows, x_vol, y_ett)}});
      break;
    }
    case ExperimentKind::kGrid: {
      std::vector<Series> thr_series, ett_series;
      std::string trend_csv = "ks_level,metric,slope,intercept,spearman\n";
      for (double level : spec.ks_levels) {
        std::vector<metrics::ResultRow> group;
        for (const auto& r : out.rows) {
          // realized distance differs from the level only by integer rounding
          if (std::abs(r.ks_distance - level) < 0.005) group.push_back(r);
        }
        char name[32];
        std::snprintf(name, sizeof(name), "KS=%.2f", level);
        auto thr = mean_by(group, x_vol, y_thr);
        auto ett = mean_by(group, x_vol, y_ett);
        thr_series.push_back({name, thr});
        ett_series.push_back({name, ett});
        if (thr.size() >= 2) {
          const auto ft = fit_trend(thr);
          const auto fe = fit_trend(ett);
          char line[256];
          std::snprintf(line, sizeof(line), "%.3f,throughput,%.8g,%.8g,%.4f\n", level, ft.slope,
                        ft.intercept, ft.spearman);
          trend_csv += line;
          std::snprintf(line, sizeof(line), "%.3f,ett,%.8g,%.8g,%.4f\n", level, fe.slope,
                        fe.intercept, fe.spearman);
          trend_csv += line;
        }
      }
      emit("throughput_vs_volume_by_ks.svg", "Normalized throughput vs total volume",
           "total vehicle volume", "normalized throughput", thr_series);
      emit("ett_vs_volume_by_ks.svg", "Extended travel time vs total volume",
           "total vehicle volume", "mean ETT [s]", ett_series);
      const std::string trend_path = spec.out_dir + "/trend_fits.csv";
      std::ofstream tf(trend_path);
      if (!tf) throw std::runtime_error("cannot write " + trend_path);
      tf << trend_csv;
      out.artifact_paths.push_back(trend_path);
      break;
    }
  }
  return out;
}

}  // namespace tsc::exp
