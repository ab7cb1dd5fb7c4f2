#include "tsc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tsc/rng.hpp"

namespace tsc::scenario {

using shift::kNumPhases;
using shift::PhaseCounts;
using shift::TrafficDistribution;

PhaseCounts Scenario::phase_counts() const {
  PhaseCounts c{};
  for (const auto& v : vehicles) c[v.phase - 1] += 1;
  return c;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::vector<TurnCountRecord> parse_turn_counts(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw ParseError("cannot open turn-count file: " + csv_path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty turn-count file: " + csv_path);
  if (strip_cr(line) != "period_start,phase,volume,bucket_minutes") {
    throw ParseError("unexpected turn-count header: " + line);
  }

  std::vector<TurnCountRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields");
    }
    TurnCountRecord rec;
    rec.period_start = fields[0];
    try {
      rec.phase = std::stoi(fields[1]);
      rec.volume = std::stoll(fields[2]);
      rec.bucket_minutes = std::stoi(fields[3]);
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed number");
    }
    if (rec.phase < 1 || rec.phase > kNumPhases) {
      throw ParseError("line " + std::to_string(line_no) + ": phase out of range 1..8");
    }
    if (rec.volume < 0) {
      throw ParseError("line " + std::to_string(line_no) + ": negative volume");
    }
    if (rec.bucket_minutes != 5 && rec.bucket_minutes != 15 && rec.bucket_minutes != 60) {
      throw ParseError("line " + std::to_string(line_no) + ": bucket_minutes must be 5, 15 or 60");
    }
    // Minimal ISO-8601 shape check: YYYY-MM-DDTHH...
    if (rec.period_start.size() < 13 || rec.period_start[4] != '-' ||
        rec.period_start[7] != '-' || rec.period_start[10] != 'T') {
      throw ParseError("line " + std::to_string(line_no) + ": bad timestamp");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<std::pair<std::string, PhaseCounts>> ingest_turn_counts(const std::string& csv_path) {
  auto records = parse_turn_counts(csv_path);

  std::map<std::string, PhaseCounts> hours;
  std::map<std::string, std::set<int>> phases_seen;
  for (const auto& rec : records) {
    std::string hour_key = rec.period_start.substr(0, 13) + ":00:00";
    auto& counts = hours.try_emplace(hour_key, PhaseCounts{}).first->second;
    counts[rec.phase - 1] += rec.volume;
    phases_seen[hour_key].insert(rec.phase);
  }

  std::vector<std::pair<std::string, PhaseCounts>> out;
  out.reserve(hours.size());
  for (auto& [hour, counts] : hours) {
    if (phases_seen[hour].size() < static_cast<size_t>(kNumPhases)) {
      std::cerr << "warning: hour " << hour << " has only " << phases_seen[hour].size()
                << " of 8 phases; missing phases zero-filled\n";
    }
    out.emplace_back(hour, counts);
  }
  return out;
}

Scenario generate_scenario(const PhaseCounts& counts, double duration_s, std::uint64_t seed,
                           const std::string& label) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("duration_s must be positive");
  Scenario s;
  s.duration_s = duration_s;
  s.seed = seed;
  s.label = label;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, duration_s);
  for (int phase = 1; phase <= kNumPhases; ++phase) {
    for (std::int64_t k = 0; k < counts[phase - 1]; ++k) {
      s.vehicles.push_back(Vehicle{0, phase, uni(rng)});
    }
  }
  std::sort(s.vehicles.begin(), s.vehicles.end(), [](const Vehicle& a, const Vehicle& b) {
    if (a.scheduled_depart_s != b.scheduled_depart_s)
      return a.scheduled_depart_s < b.scheduled_depart_s;
    return a.phase < b.phase;
  });
  for (size_t i = 0; i < s.vehicles.size(); ++i) s.vehicles[i].id = static_cast<int>(i);
  return s;
}

Scenario shuffle_departures(const Scenario& s, std::uint64_t seed) {
  Scenario out = generate_scenario(s.phase_counts(), s.duration_s, seed, s.label);
  return out;
}

namespace {

double capacity(const TrafficDistribution& p, const std::vector<int>& donors, double d) {
  double cap = 0.0;
  for (int i : donors) cap += std::min(p[i], d);
  return cap;
}

// phases sorted by (mass, id)
std::vector<int> by_mass_ascending(const TrafficDistribution& p) {
  std::vector<int> idx(kNumPhases);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return p[a] < p[b]; });
  return idx;
}

}  // namespace

TrafficDistribution perturb_to_ks(const TrafficDistribution& p_train, double target_d,
                                  PerturbMode mode, std::uint64_t seed) {
  if (!(target_d >= 0.0 && target_d <= 1.0)) {
    throw std::invalid_argument("target_d must lie in [0,1]");
  }
  if (target_d == 0.0) return p_train;

  auto order = by_mass_ascending(p_train);
  TrafficDistribution q = p_train;

  if (mode == PerturbMode::kConcentrated) {
    int receiver = order.front();
    if (p_train[receiver] + target_d > 1.0 + 1e-15) {
      throw InfeasibleError("receiving phase would exceed probability 1");
    }
    // Largest-mass phase other than the receiver donates the full amount.
    int donor = -1;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if (*it != receiver) { donor = *it; break; }
    }
    if (p_train[donor] < target_d - 1e-15) {
      throw InfeasibleError("no phase has mass >= target_d to donate");
    }
    q[receiver] += target_d;
    q[donor] -= target_d;
    return q;
  }

  // Spread mode. The main receiver carries exactly +target_d; up to three
  // secondary receivers carry min(target_d/2, cap_k), keeping the receiver the
  // unique largest deviation; everything is balanced by donations bounded by
  // min(mass, target_d) per donor.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.8, 1.2);
  const double base_caps[3] = {0.05, 0.035, 0.02};
  double caps[3];
  for (int k = 0; k < 3; ++k) caps[k] = base_caps[k] * uni(rng);

  int receiver = -1;
  for (int i : order) {
    if (p_train[i] + target_d <= 1.0 + 1e-15) { receiver = i; break; }
  }
  if (receiver < 0) throw InfeasibleError("no phase can receive +target_d");

  std::vector<int> rest;
  for (int i : order) if (i != receiver) rest.push_back(i);
  if (capacity(p_train, rest, target_d) < target_d - 1e-12) {
    throw InfeasibleError("donor mass insufficient for target_d");
  }

  std::vector<std::pair<int, double>> extras;  // (phase, positive deviation)
  double extras_total = 0.0;
  std::vector<int> donors = rest;
  for (int k = 0; k < 3 && !donors.empty(); ++k) {
    int cand = donors.front();  // smallest remaining mass
    double e = std::min({0.5 * target_d, caps[k], 1.0 - p_train[cand]});
    std::vector<int> donors_if(donors.begin() + 1, donors.end());
    double budget = capacity(p_train, donors_if, target_d) - target_d - extras_total;
    e = std::min(e, budget);
    if (e <= 1e-15) break;
    extras.emplace_back(cand, e);
    extras_total += e;
    donors.erase(donors.begin());
  }

  q[receiver] += target_d;
  for (auto& [ph, e] : extras) q[ph] += e;

  double remaining = target_d + extras_total;
  // Donate from the largest-mass phases first.
  for (auto it = donors.rbegin(); it != donors.rend() && remaining > 1e-15; ++it) {
    double g = std::min({p_train[*it], target_d, remaining});
    q[*it] -= g;
    remaining -= g;
  }
  if (remaining > 1e-12) throw InfeasibleError("could not balance perturbation");
  return q;
}

PhaseCounts scale_volume(const TrafficDistribution& p, std::int64_t total) {
  if (total < 1) throw std::invalid_argument("total must be >= 1");
  PhaseCounts counts{};
  double remainders[kNumPhases];
  std::int64_t assigned = 0;
  for (int i = 0; i < kNumPhases; ++i) {
    double raw = p[i] * static_cast<double>(total);
    counts[i] = static_cast<std::int64_t>(std::floor(raw));
    remainders[i] = raw - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::int64_t leftover = total - assigned;
  std::vector<int> idx(kNumPhases);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::int64_t k = 0; k < leftover; ++k) counts[idx[k % kNumPhases]] += 1;
  return counts;
}

std::vector<Scenario> build_experiment_grid(const TrafficDistribution& p_train,
                                            const std::vector<double>& ks_levels,
                                            const std::vector<std::int64_t>& volumes,
                                            std::uint64_t seed) {
  if (ks_levels.empty() || volumes.empty()) {
    throw std::invalid_argument("ks_levels and volumes must be non-empty");
  }
  std::vector<Scenario> grid;
  grid.reserve(ks_levels.size() * volumes.size());
  for (size_t li = 0; li < ks_levels.size(); ++li) {
    auto q = perturb_to_ks(p_train, ks_levels[li], PerturbMode::kSpread, seed);
    for (size_t vi = 0; vi < volumes.size(); ++vi) {
      auto counts = scale_volume(q, volumes[vi]);
      char label[64];
      std::snprintf(label, sizeof(label), "ks%.3f_vol%lld", ks_levels[li],
                    static_cast<long long>(volumes[vi]));
      auto s = generate_scenario(counts, 3600.0, derive_seed(seed, li, vi), label);
      grid.push_back(std::move(s));
    }
  }
  return grid;
}

std::string to_json(const Scenario& s) {
  nlohmann::json j;
  j["label"] = s.label;
  j["duration_s"] = s.duration_s;
  j["seed"] = s.seed;
  auto& arr = j["vehicles"] = nlohmann::json::array();
  for (const auto& v : s.vehicles) {
    arr.push_back({{"id", v.id}, {"phase", v.phase}, {"depart_s", v.scheduled_depart_s}});
  }
  return j.dump(2);
}

Scenario from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("scenario json: ") + e.what());
  }
  Scenario s;
  s.label = j.at("label").get<std::string>();
  s.duration_s = j.at("duration_s").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& jv : j.at("vehicles")) {
    Vehicle v;
    v.id = jv.at("id").get<int>();
    v.phase = jv.at("phase").get<int>();
    v.scheduled_depart_s = jv.at("depart_s").get<double>();
    if (v.phase < 1 || v.phase > kNumPhases) throw ParseError("vehicle phase out of range");
    if (v.scheduled_depart_s < 0.0 || v.scheduled_depart_s >= s.duration_s) {
      throw ParseError("vehicle departure outside [0, duration)");
    }
    s.vehicles.push_back(v);
  }
  std::sort(s.vehicles.begin(), s.vehicles.end(), [](const Vehicle& a, const Vehicle& b) {
    return a.scheduled_depart_s < b.scheduled_depart_s;
  });
  return s;
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario file: " + path);
  out << to_json(s) << "\n";
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace tsc::scenario
