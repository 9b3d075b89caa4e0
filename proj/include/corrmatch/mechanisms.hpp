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

#ifndef CORRMATCH_MECHANISMS_HPP
#define CORRMATCH_MECHANISMS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "corrmatch/errors.hpp"
#include "corrmatch/population.hpp"
#include "corrmatch/rng.hpp"
#include "corrmatch/trace.hpp"

#include <json.hpp>

namespace corrmatch {

enum class scheme { none, independent, joint_decorrelating };

inline std::string to_string(scheme s) {
  switch (s) {
    case scheme::none: return "none";
    case scheme::independent: return "independent";
    case scheme::joint_decorrelating: return "joint-decorrelating";
  }
  return "?";
}

inline scheme scheme_from_string(const std::string& s) {
  if (s == "none") return scheme::none;
  if (s == "independent") return scheme::independent;
  if (s == "joint-decorrelating") return scheme::joint_decorrelating;
  throw config_error("unknown scheme: " + s);
}

/// Ground truth of one mechanism application: the realized permutation Pi,
/// the realized per-user noise probabilities R_u, and the configured noise
/// level. Hidden from the adversary.
struct mechanism_record {
  std::vector<int> permutation;  // Pi: user -> pseudonym
  std::vector<double> noise;     // realized R_u, in [0, a_n]
  double a_n = 0.0;
  scheme applied = scheme::none;

  nlohmann::json to_json() const {
    return {{"schema_version", 1},
            {"pi", permutation},
            {"r", noise},
            {"a_n", a_n},
            {"scheme", to_string(applied)}};
  }

  static mechanism_record from_json(const nlohmann::json& j) {
    mechanism_record rec;
    rec.permutation = j.at("pi").get<std::vector<int>>();
    rec.noise = j.at("r").get<std::vector<double>>();
    rec.a_n = j.at("a_n").get<double>();
    rec.applied = scheme_from_string(j.at("scheme").get<std::string>());
    return rec;
  }
};

inline void check_permutation(const std::vector<int>& pi, std::uint32_t n) {
  if (pi.size() != n) throw mechanism_error("permutation size mismatch");
  std::vector<char> seen(n, 0);
  for (int v : pi) {
    if (v < 0 || static_cast<std::uint32_t>(v) >= n || seen[v])
      throw mechanism_error("permutation is not a bijection");
    seen[v] = 1;
  }
}

inline std::vector<int> random_permutation(std::uint32_t n,
                                           std::uint64_t seed) {
  std::vector<int> pi(n);
  std::iota(pi.begin(), pi.end(), 0);
  rng gen(derive_seed(seed, seed_tag::permutation));
  gen.shuffle(pi);
  return pi;
}

/// Applies the permutation Pi: column Pi(u) of the output is column u of the
/// input, i.e. output column v = input column Pi^{-1}(v).
inline trace_matrix anonymize(const trace_matrix& traces,
                              const std::vector<int>& pi) {
  if (traces.tag == stage::anonymized)
    throw mechanism_error("input is already anonymized");
  check_permutation(pi, traces.n);
  trace_matrix out(traces.m, traces.n, traces.r, stage::anonymized);
  for (std::uint32_t k = 0; k < traces.m; ++k) {
    for (std::uint32_t u = 0; u < traces.n; ++u) {
      out.at(k, static_cast<std::uint32_t>(pi[u])) = traces.at(k, u);
    }
  }
  return out;
}

/// Applies per-user symbol corruption with fixed, caller-supplied flip
/// probabilities: each sample of user u is independently replaced with
/// probability noise[u] by a uniformly random different symbol.
inline trace_matrix obfuscate_with_noise(const trace_matrix& traces,
                                         const std::vector<double>& noise,
                                         std::uint64_t seed) {
  if (traces.tag != stage::true_data)
    throw mechanism_error("obfuscation requires a true-stage trace matrix");
  if (noise.size() != traces.n)
    throw mechanism_error("noise vector size mismatch");
  trace_matrix out = traces;
  out.tag = stage::obfuscated;
  for (std::uint32_t u = 0; u < traces.n; ++u) {
    const double r_u = noise[u];
    if (r_u < 0.0 || r_u > 1.0)
      throw mechanism_error("noise probability outside [0,1]");
    if (r_u == 0.0) continue;
    rng gen(derive_seed(seed, seed_tag::noise, u));
    for (std::uint32_t k = 0; k < traces.m; ++k) {
      if (!gen.bernoulli(r_u)) continue;
      const std::uint8_t old = out.at(k, u);
      // uniform over the other r-1 symbols
      std::uint8_t repl =
          static_cast<std::uint8_t>(gen.below(traces.r - 1));
      if (repl >= old) ++repl;
      out.at(k, u) = repl;
    }
  }
  return out;
}

/// Independent obfuscation: draws R_u ~ Uniform[0, a_n] once per user, held
/// fixed over all m samples, then corrupts each sample with probability R_u.
/// For two-state data the output column is i.i.d. Bernoulli(p + (1-2p) R_u).
inline std::pair<trace_matrix, std::vector<double>> obfuscate_independent(
    const trace_matrix& traces, double a_n, std::uint64_t seed) {
  if (a_n < 0.0 || a_n > 1.0)
    throw mechanism_error("noise level a_n must lie in [0,1]");
  std::vector<double> noise(traces.n);
  rng gen(derive_seed(seed, seed_tag::noise));
  for (double& r_u : noise) r_u = a_n * gen.uniform();
  return {obfuscate_with_noise(traces, noise, seed), std::move(noise)};
}

/// Direction of a conditional flip applied to the driven user.
enum class flip_direction { none, zero_to_one, one_to_zero };

/// Pairwise decorrelating channel. The driver user's data passes through
/// untouched; the driven user's symbols are flipped, only while the driver
/// sits in its minority state, so that the driven conditional distribution
/// on that side is remapped onto the majority-side conditional. Both
/// conditionals then coincide, which zeroes the covariance exactly, at the
/// minimal expected flip rate |Cov| / max{p_i, 1-p_i, p_j, 1-p_j}.
struct pair_channel {
  int driver = 0;           // 0 = first user of the pair, 1 = second
  int driven = 1;
  int trigger_state = 0;    // driver symbol on which flips happen
  flip_direction direction = flip_direction::none;
  double flip_prob = 0.0;   // P(flip | driver in trigger state, eligible symbol)
  double driven_marginal_out = 0.0;
  double expected_flip_rate = 0.0;  // for the driven user; driver rate is 0

  bool is_identity() const { return direction == flip_direction::none; }
};

/// Validates a binary pair joint given marginals: max(0, p_i + p_j - 1)
/// <= p11 <= min(p_i, p_j), with all quantities in (0, 1).
inline void check_pair_joint(double p_i, double p_j, double p11) {
  constexpr double kTol = 1e-12;
  if (!(p_i > 0.0 && p_i < 1.0 && p_j > 0.0 && p_j < 1.0))
    throw domain_error("pair marginals must lie in (0,1)");
  const double lo = std::max(0.0, p_i + p_j - 1.0);
  const double hi = std::min(p_i, p_j);
  if (p11 < lo - kTol || p11 > hi + kTol)
    throw domain_error("joint p11 violates the Frechet bounds");
}

/// Builds the decorrelating channel for a pair with marginals (p_i, p_j) and
/// joint P(X_i = 1, X_j = 1) = p11.
inline pair_channel build_pair_channel(double p_i, double p_j, double p11) {
  check_pair_joint(p_i, p_j, p11);
  pair_channel ch;
  const double cov = p11 - p_i * p_j;

  // Driver: the user attaining max{p_i, 1-p_i, p_j, 1-p_j}; ties go to the
  // first user.
  const double max_i = std::max(p_i, 1.0 - p_i);
  const double max_j = std::max(p_j, 1.0 - p_j);
  const double p_d = max_j > max_i ? p_j : p_i;
  ch.driver = max_j > max_i ? 1 : 0;
  ch.driven = 1 - ch.driver;
  const double p_v = ch.driver == 0 ? p_j : p_i;  // driven marginal in

  // Majority state of the driver (state 1 on a tie), and the driven user's
  // conditionals on each driver side.
  const int majority = p_d >= 0.5 ? 1 : 0;
  ch.trigger_state = 1 - majority;
  const double minority_mass = std::min(p_d, 1.0 - p_d);
  // q_side = P(driven = 1 | driver = side)
  const double q1 = p11 / p_d;
  const double q0 = (p_v - p11) / (1.0 - p_d);
  const double q_major = majority == 1 ? q1 : q0;
  const double q_minor = majority == 1 ? q0 : q1;

  ch.driven_marginal_out = q_major;
  ch.expected_flip_rate = minority_mass * std::abs(q_major - q_minor);
  if (std::abs(cov) < 1e-15 || std::abs(q_major - q_minor) < 1e-15) {
    ch.direction = flip_direction::none;
    ch.flip_prob = 0.0;
    ch.driven_marginal_out = p_v;
    ch.expected_flip_rate = 0.0;
    return ch;
  }
  if (q_minor < q_major) {
    ch.direction = flip_direction::zero_to_one;
    ch.flip_prob = (q_major - q_minor) / (1.0 - q_minor);
  } else {
    ch.direction = flip_direction::one_to_zero;
    ch.flip_prob = (q_minor - q_major) / q_minor;
  }
  return ch;
}

/// Applies the channel to synchronized sample columns (i = first user of the
/// pair, j = second). Only the driven column is modified.
inline void apply_pair_channel(trace_matrix& traces, std::uint32_t user_i,
                               std::uint32_t user_j, const pair_channel& ch,
                               rng& gen) {
  if (ch.is_identity()) return;
  const std::uint32_t driver = ch.driver == 0 ? user_i : user_j;
  const std::uint32_t driven = ch.driver == 0 ? user_j : user_i;
  const std::uint8_t eligible =
      ch.direction == flip_direction::zero_to_one ? 0 : 1;
  const std::uint8_t target = 1 - eligible;
  for (std::uint32_t k = 0; k < traces.m; ++k) {
    if (traces.at(k, driver) != ch.trigger_state) continue;
    if (traces.at(k, driven) != eligible) continue;
    if (gen.bernoulli(ch.flip_prob)) traces.at(k, driven) = target;
  }
}

/// Joint decorrelating obfuscation (two-state, groups of size <= 2): applies
/// the pair channel on every edge, then independent obfuscation at level
/// a_n. Pair joints are keyed by the normalized edge (i < j) and give
/// P(X_i = 1, X_j = 1).
inline std::pair<trace_matrix, mechanism_record> obfuscate_joint(
    const trace_matrix& traces, const association_graph& graph,
    const std::vector<double>& marginals,
    const std::map<std::pair<int, int>, double>& pair_joints, double a_n,
    std::uint64_t seed) {
  if (traces.tag != stage::true_data)
    throw mechanism_error("joint obfuscation requires a true-stage matrix");
  if (traces.r != 2)
    throw mechanism_error("joint decorrelation is defined for two-state data");
  for (const auto& grp : graph.groups) {
    if (grp.size() > 2)
      throw mechanism_error(
          "joint decorrelation supports groups of size at most 2");
  }
  trace_matrix out = traces;
  for (const auto& [i, j] : graph.edges) {
    const auto it = pair_joints.find({i, j});
    if (it == pair_joints.end())
      throw mechanism_error("missing pair joint for an edge");
    const auto ch = build_pair_channel(marginals[i], marginals[j], it->second);
    rng gen(derive_seed(seed, seed_tag::channel, i, j));
    apply_pair_channel(out, static_cast<std::uint32_t>(i),
                       static_cast<std::uint32_t>(j), ch, gen);
  }
  auto [obfuscated, noise] = obfuscate_independent(out, a_n, seed);
  mechanism_record rec;
  rec.noise = std::move(noise);
  rec.a_n = a_n;
  rec.applied = scheme::joint_decorrelating;
  return {std::move(obfuscated), std::move(rec)};
}

/// Realized noise level: per-user and pooled mismatch fractions between the
/// true and obfuscated matrices.
struct noise_report {
  std::vector<double> per_user;  // A_m(u)
  double overall = 0.0;          // A_m
};

inline noise_report measure_noise(const trace_matrix& x,
                                  const trace_matrix& z) {
  if (x.m != z.m || x.n != z.n)
    throw mechanism_error("trace dimensions do not match");
  if (x.tag != stage::true_data || z.tag != stage::obfuscated)
    throw mechanism_error("measure_noise expects stages true and obfuscated");
  noise_report report;
  report.per_user.resize(x.n, 0.0);
  std::uint64_t total = 0;
  for (std::uint32_t u = 0; u < x.n; ++u) {
    std::uint32_t mismatches = 0;
    for (std::uint32_t k = 0; k < x.m; ++k)
      mismatches += x.at(k, u) != z.at(k, u);
    report.per_user[u] = static_cast<double>(mismatches) / x.m;
    total += mismatches;
  }
  report.overall = static_cast<double>(total) /
                   (static_cast<double>(x.m) * static_cast<double>(x.n));
  return report;
}

}  // namespace corrmatch

#endif  // CORRMATCH_MECHANISMS_HPP
