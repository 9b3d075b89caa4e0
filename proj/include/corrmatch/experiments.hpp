// Copyright 2026 The corrmatch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CORRMATCH_EXPERIMENTS_HPP
#define CORRMATCH_EXPERIMENTS_HPP

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "corrmatch/adversary.hpp"
#include "corrmatch/mechanisms.hpp"
#include "corrmatch/population.hpp"
#include "corrmatch/tracegen.hpp"

#include <json.hpp>

namespace corrmatch {

/// 95% Wilson score interval for k successes in n Bernoulli trials.
struct wilson_interval {
  double lo = 0.0;
  double hi = 1.0;
};

inline wilson_interval wilson95(std::uint64_t k, std::uint64_t n) {
  if (n == 0) return {0.0, 1.0};
  constexpr double z = 1.959963984540054;
  const double p = static_cast<double>(k) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// One full experiment: population model, coupling, mechanism, sweep grid,
/// trials and master seed. Each (m, a_n) grid point runs `trials`
/// independent populations / traces / mechanisms / attacks.
struct experiment_spec {
  model_kind kind = model_kind::two_state;
  int n = 100;
  int s = 2;                 // uniform group size; 1 = isolated users
  int r = 2;
  double epsilon = 0.3;
  group_topology topology = group_topology::chain;
  double coupling = 0.6;     // lambda for i.i.d. models, mu for markov
  double w = 0.5;            // latent weight for i.i.d. coupling
  scheme mechanism = scheme::none;
  double a_n = 0.0;
  std::vector<std::uint32_t> m_grid;
  std::vector<double> a_n_grid;  // optional; empty means {a_n}
  int trials = 50;
  std::uint64_t master_seed = 1;
  double tau = 0.0;          // 0 = default m^{-1/3} rule
  match_strategy strategy = match_strategy::nearest;
  int threads = 0;           // 0 = CORRMATCH_THREADS env or hardware
  std::vector<state_edge> structure;  // markov transition structure
  std::uint32_t burn_in = 0;
  int target_user = 0;

  void validate() const {
    if (trials < 1) throw config_error("trials must be >= 1");
    if (m_grid.empty()) throw config_error("sweep grid is empty");
    if (n < 1) throw config_error("n must be >= 1");
    if (s < 1 || n % s != 0)
      throw config_error("group size s must divide n");
    if (target_user < 0 || target_user >= n)
      throw config_error("target user out of range");
    density().validate();
  }

  density_spec density() const {
    density_spec d;
    d.kind = kind;
    d.r = r;
    d.epsilon = epsilon;
    d.structure = structure;
    return d;
  }

  std::vector<double> noise_grid() const {
    return a_n_grid.empty() ? std::vector<double>{a_n} : a_n_grid;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"schema_version", 1},
                     {"model", to_string(kind)},
                     {"n", n},
                     {"s", s},
                     {"r", r},
                     {"epsilon", epsilon},
                     {"topology", to_string(topology)},
                     {"coupling", coupling},
                     {"w", w},
                     {"mechanism", to_string(mechanism)},
                     {"a_n", a_n},
                     {"m_grid", m_grid},
                     {"trials", trials},
                     {"seed", master_seed},
                     {"tau", tau},
                     {"strategy", strategy == match_strategy::nearest
                                      ? "nearest"
                                      : "assignment"},
                     {"burn_in", burn_in},
                     {"target_user", target_user}};
    if (!a_n_grid.empty()) j["a_n_grid"] = a_n_grid;
    if (!structure.empty()) {
      nlohmann::json st = nlohmann::json::array();
      for (const auto& [a, b] : structure)
        st.push_back(std::vector<int>{a, b});
      j["structure"] = st;
    }
    return j;
  }

  static experiment_spec from_json(const nlohmann::json& j) {
    experiment_spec spec;
    spec.kind = model_kind_from_string(j.at("model").get<std::string>());
    spec.n = j.at("n").get<int>();
    spec.s = j.value("s", 1);
    spec.r = j.value("r", 2);
    spec.epsilon = j.value("epsilon", 0.05);
    spec.topology = topology_from_string(j.value("topology", "chain"));
    spec.coupling = j.value("coupling", 0.0);
    spec.w = j.value("w", 0.5);
    spec.mechanism = scheme_from_string(j.value("mechanism", "none"));
    spec.a_n = j.value("a_n", 0.0);
    spec.m_grid = j.at("m_grid").get<std::vector<std::uint32_t>>();
    if (j.contains("a_n_grid"))
      spec.a_n_grid = j.at("a_n_grid").get<std::vector<double>>();
    spec.trials = j.at("trials").get<int>();
    spec.master_seed = j.value("seed", 1ULL);
    spec.tau = j.value("tau", 0.0);
    spec.strategy = j.value("strategy", std::string("nearest")) == "assignment"
                        ? match_strategy::assignment
                        : match_strategy::nearest;
    spec.burn_in = j.value("burn_in", 0u);
    spec.target_user = j.value("target_user", 0);
    if (j.contains("structure")) {
      for (const auto& e : j.at("structure"))
        spec.structure.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
    spec.validate();
    return spec;
  }
};

/// Aggregated statistics of one grid point. All rates derive from integer
/// counts, so aggregation over trials is order-independent.
struct point_result {
  std::string model;
  int n = 0;
  std::uint32_t m = 0;
  int s = 0;
  int r = 0;
  double a_n = 0.0;
  double coupling = 0.0;
  int trials = 0;
  std::uint64_t successes = 0;
  std::uint64_t sample_errors = 0;
  std::uint64_t samples = 0;
  std::uint64_t edge_true_positive = 0;
  std::uint64_t edge_predicted = 0;
  std::uint64_t edge_actual = 0;
  std::uint64_t noise_mismatches = 0;
  std::uint64_t noise_cells = 0;
  int degenerate_trials = 0;
  double seconds = 0.0;

  double success_rate() const {
    return trials ? static_cast<double>(successes) / trials : 0.0;
  }
  double pe_mean() const {
    return samples ? static_cast<double>(sample_errors) / samples : 1.0;
  }
  wilson_interval pe_interval() const {
    return wilson95(sample_errors, samples);
  }
  double edge_precision() const {
    return edge_predicted
               ? static_cast<double>(edge_true_positive) / edge_predicted
               : 1.0;
  }
  double edge_recall() const {
    return edge_actual ? static_cast<double>(edge_true_positive) / edge_actual
                       : 1.0;
  }
  double mean_noise() const {
    return noise_cells ? static_cast<double>(noise_mismatches) / noise_cells
                       : 0.0;
  }
};

inline constexpr const char* kSweepCsvHeader =
    "model,n,m,s,r,a_n,coupling,trials,success_rate,pe_mean,pe_lo,pe_hi,"
    "edge_precision,edge_recall,mean_noise,seconds";

struct sweep_result {
  std::vector<point_result> rows;

  /// Writes the CSV contract. All columns except `seconds` are formatted
  /// deterministically from counts, so reruns with the same master seed
  /// produce identical bytes apart from the wall-clock column.
  void write_csv(std::ostream& os) const {
    os << kSweepCsvHeader << "\n";
    char buf[512];
    for (const auto& p : rows) {
      const auto pe = p.pe_interval();
      std::snprintf(buf, sizeof(buf),
                    "%s,%d,%u,%d,%d,%.10g,%.10g,%d,%.6f,%.8f,%.8f,%.8f,%.6f,"
                    "%.6f,%.8f,%.3f",
                    p.model.c_str(), p.n, p.m, p.s, p.r, p.a_n, p.coupling,
                    p.trials, p.success_rate(), p.pe_mean(), pe.lo, pe.hi,
                    p.edge_precision(), p.edge_recall(), p.mean_noise(),
                    p.seconds);
      os << buf << "\n";
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& p : rows) {
      const auto pe = p.pe_interval();
      rows_json.push_back({{"model", p.model},
                           {"n", p.n},
                           {"m", p.m},
                           {"s", p.s},
                           {"r", p.r},
                           {"a_n", p.a_n},
                           {"coupling", p.coupling},
                           {"trials", p.trials},
                           {"success_rate", p.success_rate()},
                           {"pe_mean", p.pe_mean()},
                           {"pe_lo", pe.lo},
                           {"pe_hi", pe.hi},
                           {"edge_precision", p.edge_precision()},
                           {"edge_recall", p.edge_recall()},
                           {"mean_noise", p.mean_noise()},
                           {"degenerate_trials", p.degenerate_trials},
                           {"seconds", p.seconds}});
    }
    return {{"schema_version", 1}, {"rows", rows_json}};
  }

  bool any_degenerate() const {
    for (const auto& p : rows) {
      if (p.degenerate_trials == p.trials) return true;
    }
    return false;
  }
};

namespace detail {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CORRMATCH_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

/// Per-trial contribution to a point, combined after all workers join.
struct trial_stats {
  bool degenerate = false;
  bool success = false;
  std::uint64_t sample_errors = 0;
  std::uint64_t samples = 0;
  std::uint64_t edge_tp = 0;
  std::uint64_t edge_predicted = 0;
  std::uint64_t edge_actual = 0;
  std::uint64_t noise_mismatches = 0;
  std::uint64_t noise_cells = 0;
};

/// Retry bound for coupling-infeasible populations; past it the trial is
/// reported degenerate instead of resampling forever.
inline constexpr int kCouplingRetryLimit = 16;

inline population sample_point_population(const experiment_spec& spec,
                                          std::uint64_t trial_seed,
                                          bool& degenerate) {
  population pop;
  pop.density = spec.density();
  std::vector<int> sizes(spec.n / spec.s, spec.s);
  for (int attempt = 0; attempt <= kCouplingRetryLimit; ++attempt) {
    const std::uint64_t seed = derive_seed(trial_seed, seed_tag::retry, attempt);
    pop.profiles = sample_profiles(spec.n, pop.density, seed);
    pop.graph = build_group_graph(sizes, spec.topology, seed);
    pop.coupling.w = spec.w;
    pop.coupling.mu = spec.kind == model_kind::markov ? spec.coupling : 0.0;
    const double lambda =
        (spec.kind != model_kind::markov && spec.s > 1) ? spec.coupling : 0.0;
    pop.coupling.lambda.assign(spec.n, lambda);
    if (spec.kind == model_kind::markov) {
      degenerate = false;
      return pop;
    }
    try {
      check_coupling_feasibility(pop);
      degenerate = false;
      return pop;
    } catch (const coupling_error&) {
      continue;
    }
  }
  degenerate = true;
  return pop;
}

inline trial_stats run_trial(const experiment_spec& spec, std::uint32_t m,
                             double a_n, std::uint64_t trial_seed) {
  trial_stats stats;
  bool degenerate = false;
  population pop = sample_point_population(spec, trial_seed, degenerate);
  if (degenerate) {
    stats.degenerate = true;
    stats.samples = m;
    stats.sample_errors = m;  // a degenerate trial counts as full error
    return stats;
  }

  const trace_matrix x =
      spec.kind == model_kind::markov
          ? generate_markov_traces(pop, m, spec.burn_in,
                                   derive_seed(trial_seed, seed_tag::traces))
          : generate_iid_traces(pop, m,
                                derive_seed(trial_seed, seed_tag::traces));

  trace_matrix z = x;
  mechanism_record record;
  record.a_n = a_n;
  record.applied = spec.mechanism;
  if (spec.mechanism == scheme::independent) {
    auto [obf, noise] = obfuscate_independent(
        x, a_n, derive_seed(trial_seed, seed_tag::noise));
    z = std::move(obf);
    record.noise = std::move(noise);
  } else if (spec.mechanism == scheme::joint_decorrelating) {
    std::map<std::pair<int, int>, double> joints;
    std::vector<double> marginals;
    for (const auto& prof : pop.profiles) marginals.push_back(prof.p());
    for (const auto& [i, j] : pop.graph.edges) {
      const double cov = pair_covariance(pop.coupling, i, j, marginals[i],
                                         marginals[j]);
      joints[{i, j}] = marginals[i] * marginals[j] + cov;
    }
    auto [obf, rec] = obfuscate_joint(x, pop.graph, marginals, joints, a_n,
                                      derive_seed(trial_seed, seed_tag::noise));
    z = std::move(obf);
    record.noise = std::move(rec.noise);
  }
  if (spec.mechanism != scheme::none) {
    stats.noise_cells = static_cast<std::uint64_t>(m) * spec.n;
    for (std::uint32_t k = 0; k < m; ++k) {
      for (int u = 0; u < spec.n; ++u) {
        stats.noise_mismatches +=
            x.at(k, u) != z.at(k, static_cast<std::uint32_t>(u));
      }
    }
  }

  record.permutation = random_permutation(
      spec.n, derive_seed(trial_seed, seed_tag::permutation));
  const trace_matrix y = anonymize(z, record.permutation);

  auto knowledge =
      adversary_knowledge::from_population(pop, spec.mechanism, a_n);
  attack_config config;
  config.tau = spec.tau;
  config.strategy = spec.strategy;
  attack_outcome outcome = run_attack(y, knowledge, spec.target_user, config);
  const auto& group_users =
      pop.graph.groups[pop.graph.group_of(spec.target_user)];
  score_attack(outcome, record.permutation, x, spec.target_user, group_users);

  stats.success = outcome.success;
  stats.sample_errors = outcome.sample_errors;
  stats.samples = m;

  // Edge accuracy against the true association edges mapped through Pi.
  std::set<std::pair<int, int>> truth;
  for (const auto& [i, j] : pop.graph.edges) {
    const int a = record.permutation[i];
    const int b = record.permutation[j];
    truth.insert({std::min(a, b), std::max(a, b)});
  }
  stats.edge_actual = truth.size();
  stats.edge_predicted = outcome.edges.size();
  for (const auto& e : outcome.edges) stats.edge_tp += truth.count(e);
  return stats;
}

}  // namespace detail

/// Runs all trials of one grid point, in parallel workers with per-trial
/// derived seeds. Aggregation uses integer counts only, so the result is
/// independent of scheduling.
inline point_result run_point(const experiment_spec& spec,
                              std::size_t point_index) {
  spec.validate();
  const auto noise_levels = spec.noise_grid();
  const std::size_t m_index = point_index % spec.m_grid.size();
  const std::size_t a_index = point_index / spec.m_grid.size();
  if (a_index >= noise_levels.size())
    throw config_error("grid point index out of range");
  const std::uint32_t m = spec.m_grid[m_index];
  const double a_n = noise_levels[a_index];

  const auto start = std::chrono::steady_clock::now();
  std::vector<detail::trial_stats> per_trial(spec.trials);
  const int workers =
      std::min(detail::resolve_threads(spec.threads), spec.trials);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= spec.trials) return;
      const std::uint64_t trial_seed =
          derive_seed(spec.master_seed, point_index, t);
      per_trial[t] = detail::run_trial(spec, m, a_n, trial_seed);
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  point_result result;
  result.model = to_string(spec.kind);
  result.n = spec.n;
  result.m = m;
  result.s = spec.s;
  result.r = spec.r;
  result.a_n = a_n;
  result.coupling = spec.coupling;
  result.trials = spec.trials;
  for (const auto& t : per_trial) {
    result.degenerate_trials += t.degenerate;
    result.successes += t.success;
    result.sample_errors += t.sample_errors;
    result.samples += t.samples;
    result.edge_true_positive += t.edge_tp;
    result.edge_predicted += t.edge_predicted;
    result.edge_actual += t.edge_actual;
    result.noise_mismatches += t.noise_mismatches;
    result.noise_cells += t.noise_cells;
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

/// Evaluates every grid point, rows ordered by noise level then m (the m
/// grid varies fastest).
inline sweep_result sweep(const experiment_spec& spec) {
  spec.validate();
  sweep_result result;
  const std::size_t points = spec.m_grid.size() * spec.noise_grid().size();
  for (std::size_t p = 0; p < points; ++p)
    result.rows.push_back(run_point(spec, p));
  return result;
}

/// Interpolated observation count m* at which the success rate crosses the
/// level, linear on log m between the bracketing rows. Rows must be sorted
/// by m. Returns nullopt when the level is never crossed from below (e.g.
/// all rows already succeed).
inline std::optional<double> detect_threshold(
    const std::vector<std::pair<double, double>>& rows, double level = 0.5) {
  if (rows.size() < 2)
    throw config_error("threshold detection needs at least two rows");
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    if (rows[i].first >= rows[i + 1].first)
      throw config_error("rows must be sorted by m");
  }
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const auto [m0, s0] = rows[i];
    const auto [m1, s1] = rows[i + 1];
    if (s0 < level && s1 >= level) {
      const double t = (level - s0) / (s1 - s0);
      return std::exp(std::log(m0) + t * (std::log(m1) - std::log(m0)));
    }
  }
  return std::nullopt;
}

}  // namespace corrmatch

#endif  // CORRMATCH_EXPERIMENTS_HPP
