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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "corrmatch/adversary.hpp"
#include "corrmatch/experiments.hpp"
#include "corrmatch/mechanisms.hpp"
#include "corrmatch/oracle.hpp"
#include "corrmatch/population.hpp"
#include "corrmatch/tracegen.hpp"

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Signals a degenerate or failed experiment (CLI exit code 3).
struct experiment_failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw corrmatch::config_error("cannot open file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw corrmatch::config_error(path.string() + ":" + std::to_string(line) +
                                  ":" + std::to_string(col) +
                                  ": JSON parse error: " + e.what());
  }
}

/// Creates the output directory and refuses to clobber existing files
/// unless --force was given.
void prepare_output(const fs::path& dir, const std::vector<std::string>& files,
                    bool force) {
  fs::create_directories(dir);
  if (force) return;
  for (const auto& f : files) {
    if (fs::exists(dir / f))
      throw corrmatch::config_error(
          (dir / f).string() + " already exists (use --force to overwrite)");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw corrmatch::config_error("cannot write file: " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

corrmatch::population population_from_config(const json& cfg,
                                             std::uint64_t seed) {
  using namespace corrmatch;
  population pop;
  pop.density.kind = model_kind_from_string(cfg.at("model").get<std::string>());
  pop.density.r = cfg.value("r", 2);
  pop.density.epsilon = cfg.value("epsilon", 0.05);
  if (cfg.contains("structure")) {
    for (const auto& e : cfg.at("structure"))
      pop.density.structure.emplace_back(e.at(0).get<int>(),
                                         e.at(1).get<int>());
  }
  const int n = cfg.at("n").get<int>();
  std::vector<int> sizes;
  if (cfg.contains("group_sizes")) {
    sizes = cfg.at("group_sizes").get<std::vector<int>>();
  } else {
    const int s = cfg.value("group_size", 1);
    if (s < 1 || n % s != 0)
      throw config_error("group_size must divide n");
    sizes.assign(n / s, s);
  }
  pop.profiles = sample_profiles(n, pop.density, seed);
  pop.graph = build_group_graph(
      sizes, topology_from_string(cfg.value("topology", "chain")), seed);
  const auto& c = cfg.value("coupling", json::object());
  pop.coupling.w = c.value("w", 0.5);
  pop.coupling.mu = c.value("mu", 0.0);
  if (c.contains("lambda")) {
    pop.coupling.lambda = c.at("lambda").get<std::vector<double>>();
  } else {
    pop.coupling.lambda.assign(n, c.value("lambda_all", 0.0));
  }
  pop.coupling.validate(n);
  return pop;
}

corrmatch::trace_matrix read_traces(const fs::path& dir,
                                    const std::string& stem) {
  const fs::path bin = dir / (stem + ".bin");
  if (fs::exists(bin)) {
    std::ifstream in(bin, std::ios::binary);
    return corrmatch::trace_matrix::read_binary(in);
  }
  throw corrmatch::config_error("missing trace file: " + bin.string());
}

void write_traces(const fs::path& dir, const std::string& stem,
                  const corrmatch::trace_matrix& t) {
  {
    std::ofstream out(dir / (stem + ".csv"), std::ios::binary);
    t.write_csv(out);
  }
  {
    std::ofstream out(dir / (stem + ".bin"), std::ios::binary);
    t.write_binary(out);
  }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_gen(const fs::path& config_path, const fs::path& out,
            std::optional<std::uint64_t> seed_override, bool force) {
  using namespace corrmatch;
  const json cfg = load_json(config_path);
  const std::uint64_t seed = seed_override.value_or(cfg.value("seed", 1ULL));
  prepare_output(out, {"population.json", "traces.csv", "traces.bin"}, force);

  population pop = population_from_config(cfg, seed);
  const auto m = cfg.at("m").get<std::uint32_t>();
  trace_matrix traces =
      pop.density.kind == model_kind::markov
          ? generate_markov_traces(pop, m, cfg.value("burn_in", 0u),
                                   derive_seed(seed, seed_tag::traces))
          : generate_iid_traces(pop, m, derive_seed(seed, seed_tag::traces));

  write_json(out / "population.json", pop.to_json());
  write_traces(out, "traces", traces);
  std::cout << "wrote " << (out / "population.json").string() << ", "
            << (out / "traces.csv").string() << " (m=" << m
            << ", n=" << pop.n() << ")\n";
  return 0;
}

int cmd_mech(const fs::path& config_path, const fs::path& in,
             const fs::path& out, std::optional<std::uint64_t> seed_override,
             bool force) {
  using namespace corrmatch;
  const json cfg = load_json(config_path);
  const std::uint64_t seed = seed_override.value_or(cfg.value("seed", 1ULL));
  prepare_output(
      out, {"observed.csv", "observed.bin", "mechanism.json", "truth.json"},
      force);

  const population pop = population::from_json(load_json(in / "population.json"));
  const trace_matrix x = read_traces(in, "traces");
  const scheme mech = scheme_from_string(cfg.value("scheme", "none"));
  const double a_n = cfg.value("a_n", 0.0);

  trace_matrix z = x;
  mechanism_record record;
  record.a_n = a_n;
  record.applied = mech;
  if (mech == scheme::independent) {
    auto [obf, noise] =
        obfuscate_independent(x, a_n, derive_seed(seed, seed_tag::noise));
    z = std::move(obf);
    record.noise = std::move(noise);
  } else if (mech == scheme::joint_decorrelating) {
    std::map<std::pair<int, int>, double> joints;
    std::vector<double> marginals;
    for (const auto& prof : pop.profiles) marginals.push_back(prof.p());
    for (const auto& [i, j] : pop.graph.edges) {
      const double cov =
          pair_covariance(pop.coupling, i, j, marginals[i], marginals[j]);
      joints[{i, j}] = marginals[i] * marginals[j] + cov;
    }
    auto [obf, rec] = obfuscate_joint(x, pop.graph, marginals, joints, a_n,
                                      derive_seed(seed, seed_tag::noise));
    z = std::move(obf);
    record.noise = std::move(rec.noise);
  }
  record.permutation =
      random_permutation(x.n, derive_seed(seed, seed_tag::permutation));
  const trace_matrix y = anonymize(z, record.permutation);

  write_traces(out, "observed", y);
  // Adversary-visible descriptor: mechanism kind and noise level only.
  write_json(out / "mechanism.json",
             {{"schema_version", 1},
              {"scheme", to_string(mech)},
              {"a_n", a_n}});
  // Sealed ground truth, kept in a separate file the attack never opens
  // unless --truth is passed for scoring.
  json truth = record.to_json();
  truth["true_traces"] = fs::absolute(in / "traces.bin").string();
  write_json(out / "truth.json", truth);
  std::cout << "wrote " << (out / "observed.csv").string()
            << " and sealed truth record\n";
  return 0;
}

int cmd_attack(const fs::path& config_path, const fs::path& in,
               const fs::path& out, const fs::path& truth_path, bool force) {
  using namespace corrmatch;
  json cfg = json::object();
  if (!config_path.empty()) cfg = load_json(config_path);
  prepare_output(out, {"attack.json"}, force);

  const population pop = population::from_json(load_json(in / "population.json"));
  const trace_matrix y = read_traces(in, "observed");

  scheme mech = scheme::none;
  double a_n = 0.0;
  if (fs::exists(in / "mechanism.json")) {
    const json mj = load_json(in / "mechanism.json");
    mech = scheme_from_string(mj.value("scheme", "none"));
    a_n = mj.value("a_n", 0.0);
  }
  // Knowledge excludes the coupling parameters and all realizations.
  const auto knowledge = adversary_knowledge::from_population(pop, mech, a_n);

  attack_config config;
  config.tau = cfg.value("tau", 0.0);
  config.strategy = cfg.value("strategy", std::string("nearest")) == "assignment"
                        ? match_strategy::assignment
                        : match_strategy::nearest;
  const int target = cfg.value("target_user", 0);

  attack_outcome outcome = run_attack(y, knowledge, target, config);

  if (!truth_path.empty()) {
    const json tj = load_json(truth_path);
    const mechanism_record record = mechanism_record::from_json(tj);
    const fs::path x_path = tj.at("true_traces").get<std::string>();
    std::ifstream xin(x_path, std::ios::binary);
    if (!xin)
      throw config_error("cannot open true traces: " + x_path.string());
    const trace_matrix x = trace_matrix::read_binary(xin);
    const auto& group_users =
        knowledge.graph.groups[knowledge.graph.group_of(target)];
    score_attack(outcome, record.permutation, x, target, group_users);
  }

  write_json(out / "attack.json", outcome.to_json());
  std::cout << "attack " << (outcome.failed ? "failed" : "completed")
            << "; wrote " << (out / "attack.json").string() << "\n";
  if (outcome.failed) throw experiment_failed("attack produced no match");
  return 0;
}

int cmd_sweep(const fs::path& config_path, const fs::path& out,
              std::optional<std::uint64_t> seed_override, int threads,
              bool force) {
  using namespace corrmatch;
  json cfg = load_json(config_path);
  if (seed_override) cfg["seed"] = *seed_override;
  experiment_spec spec = experiment_spec::from_json(cfg);
  if (threads > 0) spec.threads = threads;
  prepare_output(out, {"sweep.csv", "sweep.json"}, force);

  const sweep_result result = sweep(spec);
  {
    std::ofstream os(out / "sweep.csv", std::ios::binary);
    result.write_csv(os);
  }
  json j = result.to_json();
  j["spec"] = spec.to_json();
  write_json(out / "sweep.json", j);

  for (const auto& row : result.rows) {
    std::cout << "m=" << row.m << " a_n=" << row.a_n
              << " success=" << row.success_rate()
              << " pe=" << row.pe_mean() << "\n";
  }
  std::cout << "wrote " << (out / "sweep.csv").string() << "\n";
  if (result.any_degenerate())
    throw experiment_failed("a grid point was fully degenerate");
  return 0;
}

corrmatch::tiny_instance instance_from_json(const json& j) {
  corrmatch::tiny_instance inst;
  inst.n = j.at("n").get<int>();
  inst.m = j.at("m").get<int>();
  for (const auto& g : j.at("groups")) {
    corrmatch::group_joint grp;
    grp.members = g.at("members").get<std::vector<int>>();
    grp.probs = g.at("probs").get<std::vector<double>>();
    inst.groups.push_back(std::move(grp));
  }
  if (j.contains("fixed_noise"))
    inst.fixed_noise = j.at("fixed_noise").get<std::vector<double>>();
  inst.validate();
  return inst;
}

int cmd_oracle(const std::string& preset, const fs::path& config_path,
               const fs::path& out, bool force) {
  using namespace corrmatch;
  json report;
  auto print_mi = [&](const std::string& name, double bits) {
    std::printf("%-28s I = %.9f bits\n", name.c_str(), bits);
    report[name] = bits;
  };

  if (!config_path.empty()) {
    const json cfg = load_json(config_path);
    const auto inst = instance_from_json(cfg);
    const double bits = exact_mi_anonymized(inst, cfg.value("target_user", 0),
                                            cfg.value("time_k", 0));
    print_mi("custom-instance", bits);
  } else if (preset == "single-fair-user") {
    print_mi(preset, exact_mi_anonymized(
                         tiny_instance::independent({0.5}, 1), 0, 0));
  } else if (preset == "pair-mi-n2m1") {
    print_mi(preset, exact_mi_anonymized(
                         tiny_instance::independent({0.5, 0.5}, 1), 0, 0));
  } else if (preset == "pair-mi-n2m1-correlated") {
    print_mi(preset, exact_mi_anonymized(
                         tiny_instance::pair({0.5, 0.0, 0.0, 0.5}, 1), 0, 0));
  } else if (preset == "decorrelate-pair") {
    const std::array<double, 4> joint{0.3, 0.2, 0.2, 0.3};
    const double before =
        exact_mi_anonymized(tiny_instance::pair(joint, 1), 0, 0);
    const auto ch = build_pair_channel(0.5, 0.5, joint[3]);
    const auto verified = verify_pair_channel(joint, ch);
    const double after = exact_mi_anonymized(
        tiny_instance::pair(verified.joint_out, 1), 0, 0);
    print_mi("correlated-pair", before);
    print_mi("decorrelated-pair", after);
    std::printf("%-28s cov_out = %.3g, flip rate = %.9f (bound %.9f)\n",
                "channel", verified.cov_out,
                std::max(verified.flip_rate_i, verified.flip_rate_j),
                verified.bound);
    report["pair_mi"] = {{"before", before}, {"after", after}};
  } else {
    throw config_error("unknown oracle preset: " + preset);
  }

  if (!out.empty()) {
    prepare_output(out, {"oracle.json"}, force);
    write_json(out / "oracle.json", report);
  }
  return 0;
}

int cmd_noise_audit(const fs::path& config_path, const fs::path& out,
                    std::optional<std::uint64_t> seed_override, bool force) {
  using namespace corrmatch;
  const json cfg = load_json(config_path);
  const std::uint64_t seed = seed_override.value_or(cfg.value("seed", 1ULL));
  const int n = cfg.at("n").get<int>();
  const auto m = cfg.at("m").get<std::uint32_t>();
  const double a_n = cfg.at("a_n").get<double>();

  density_spec density;
  density.kind = model_kind::two_state;
  density.epsilon = cfg.value("epsilon", 0.05);
  population pop;
  pop.density = density;
  pop.profiles = sample_profiles(n, density, seed);
  pop.graph = build_group_graph(std::vector<int>(n, 1), group_topology::chain,
                                seed);
  pop.coupling.lambda.assign(n, 0.0);

  const trace_matrix x =
      generate_iid_traces(pop, m, derive_seed(seed, seed_tag::traces));
  auto [z, noise] =
      obfuscate_independent(x, a_n, derive_seed(seed, seed_tag::noise));
  const noise_report report = measure_noise(x, z);

  std::printf("n=%d m=%u a_n=%.6g\n", n, m, a_n);
  std::printf("pooled A_m      = %.6f (expected a_n/2 = %.6f)\n",
              report.overall, a_n / 2.0);
  double max_dev = 0.0;
  for (int u = 0; u < n; ++u)
    max_dev = std::max(max_dev, std::abs(report.per_user[u] - noise[u]));
  std::printf("max |A_m(u)-R_u| = %.6f\n", max_dev);

  if (!out.empty()) {
    prepare_output(out, {"noise.json", "noise.csv"}, force);
    write_json(out / "noise.json", {{"schema_version", 1},
                                    {"n", n},
                                    {"m", m},
                                    {"a_n", a_n},
                                    {"overall", report.overall},
                                    {"per_user", report.per_user},
                                    {"realized_r", noise}});
    std::string csv = "u,a_m,r_u\n";
    char buf[96];
    for (int u = 0; u < n; ++u) {
      std::snprintf(buf, sizeof(buf), "%d,%.8f,%.8f\n", u, report.per_user[u],
                    noise[u]);
      csv += buf;
    }
    write_text(out / "noise.csv", csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"correlated-trace anonymization and statistical matching lab"};
  app.require_subcommand(1);

  std::string config, out, truth, preset;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool force = false;
  std::string in = ".";

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config, "JSON config file");
    if (needs_config) opt->required();
    sub->add_option("--out", out, "output directory")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_flag("--force", force, "overwrite existing outputs");
  };

  auto* gen = app.add_subcommand("gen", "sample a population and its traces");
  add_common(gen, true);

  auto* mech = app.add_subcommand(
      "mech", "apply obfuscation + anonymization; seal the truth record");
  add_common(mech, true);
  mech->add_option("--in", in, "directory with gen outputs")->required();

  auto* attack = app.add_subcommand("attack", "run the matching adversary");
  attack->add_option("--config", config, "JSON config file");
  attack->add_option("--out", out, "output directory")->required();
  attack->add_option("--in", in, "directory with mech outputs")->required();
  attack->add_option("--truth", truth,
                     "sealed truth record, used only for scoring");
  attack->add_flag("--force", force, "overwrite existing outputs");

  auto* sweep_cmd = app.add_subcommand("sweep", "run a Monte Carlo sweep");
  add_common(sweep_cmd, true);
  sweep_cmd->add_option("--threads", threads, "cap worker threads");

  auto* oracle_cmd =
      app.add_subcommand("oracle", "exact tiny-instance computations");
  oracle_cmd->add_option("--preset", preset, "named tiny instance");
  oracle_cmd->add_option("--config", config, "JSON tiny-instance file");
  oracle_cmd->add_option("--out", out, "optional output directory");
  oracle_cmd->add_flag("--force", force, "overwrite existing outputs");

  auto* audit = app.add_subcommand("noise-audit", "measure realized A_m");
  add_common(audit, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 2 : 0;
  }

  try {
    if (gen->parsed()) return cmd_gen(config, out, seed, force);
    if (mech->parsed()) return cmd_mech(config, in, out, seed, force);
    if (attack->parsed()) return cmd_attack(config, in, out, truth, force);
    if (sweep_cmd->parsed())
      return cmd_sweep(config, out, seed, threads, force);
    if (oracle_cmd->parsed()) return cmd_oracle(preset, config, out, force);
    if (audit->parsed()) return cmd_noise_audit(config, out, seed, force);
  } catch (const corrmatch::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const corrmatch::coupling_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const experiment_failed& e) {
    std::cerr << "experiment failed: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
