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

#ifndef CORRMATCH_ADVERSARY_HPP
#define CORRMATCH_ADVERSARY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "corrmatch/errors.hpp"
#include "corrmatch/mechanisms.hpp"
#include "corrmatch/population.hpp"
#include "corrmatch/trace.hpp"

#include <json.hpp>

namespace corrmatch {

/// Everything the adversary is allowed to see: all users' true statistical
/// parameters, the association graph (edges and group partition, nothing
/// about the strength of dependence), and the mechanism descriptors without
/// their realizations (no permutation, no R_u, no coupling parameters).
struct adversary_knowledge {
  model_kind kind = model_kind::two_state;
  int r = 2;
  double a_n = 0.0;
  scheme mechanism = scheme::none;
  std::vector<state_edge> structure;  // markov transition structure
  std::vector<std::vector<double>> profile_stats;  // per-user statistic vector
  association_graph graph;

  static adversary_knowledge from_population(const population& pop,
                                             scheme mechanism, double a_n) {
    adversary_knowledge k;
    k.kind = pop.density.kind;
    k.r = pop.density.r;
    k.a_n = a_n;
    k.mechanism = mechanism;
    k.structure = pop.density.structure;
    for (const auto& prof : pop.profiles) k.profile_stats.push_back(prof.params);
    k.graph = pop.graph;
    return k;
  }

  int n() const { return static_cast<int>(profile_stats.size()); }

  /// Statistic vectors the adversary expects to observe after independent
  /// obfuscation at level a_n (E[R_u] = a_n / 2). For two-state this is
  /// p + (1-2p) a_n/2; for r-state each probability shrinks toward the
  /// uniform distribution. Markov transition statistics are left uncorrected
  /// (the converse regime has a_n -> 0, where the correction vanishes).
  std::vector<std::vector<double>> expected_stats() const {
    std::vector<std::vector<double>> stats = profile_stats;
    if (a_n <= 0.0 || mechanism == scheme::none ||
        kind == model_kind::markov) {
      return stats;
    }
    const double mean_noise = a_n / 2.0;
    for (auto& vec : stats) {
      if (kind == model_kind::two_state) {
        vec[0] = vec[0] + (1.0 - 2.0 * vec[0]) * mean_noise;
      } else {
        const double keep = 1.0 - mean_noise * r / (r - 1.0);
        for (double& v : vec) v = v * keep + mean_noise / (r - 1.0);
      }
    }
    return stats;
  }
};

/// Empirical statistic vector of one pseudonym column. valid marks the
/// coordinates that could be estimated (a Markov coordinate needs its source
/// state visited at least once); complete means every coordinate is valid.
struct fingerprint_vec {
  std::vector<double> stats;
  std::vector<bool> valid;
  bool complete = true;
};

namespace detail {

/// One bit plane per symbol per column; popcounts of ANDed planes give all
/// pairwise joint counts in O(m / 64) per pair.
struct bit_planes {
  std::uint32_t m = 0;
  std::size_t words = 0;
  int r = 2;
  std::vector<std::vector<std::uint64_t>> plane;  // [user * r + symbol]

  static bit_planes build(const trace_matrix& t) {
    bit_planes pl;
    pl.m = t.m;
    pl.r = t.r;
    pl.words = (t.m + 63) / 64;
    pl.plane.assign(static_cast<std::size_t>(t.n) * t.r,
                    std::vector<std::uint64_t>(pl.words, 0));
    for (std::uint32_t k = 0; k < t.m; ++k) {
      const std::size_t word = k >> 6;
      const std::uint64_t bit = 1ULL << (k & 63);
      for (std::uint32_t u = 0; u < t.n; ++u) {
        pl.plane[static_cast<std::size_t>(u) * t.r + t.at(k, u)][word] |= bit;
      }
    }
    return pl;
  }

  std::uint32_t count(std::uint32_t user, int symbol) const {
    const auto& p = plane[static_cast<std::size_t>(user) * r + symbol];
    std::uint32_t c = 0;
    for (std::uint64_t w : p) c += static_cast<std::uint32_t>(__builtin_popcountll(w));
    return c;
  }

  std::uint32_t joint_count(std::uint32_t a, int sa, std::uint32_t b,
                            int sb) const {
    const auto& pa = plane[static_cast<std::size_t>(a) * r + sa];
    const auto& pb = plane[static_cast<std::size_t>(b) * r + sb];
    std::uint32_t c = 0;
    for (std::size_t w = 0; w < words; ++w)
      c += static_cast<std::uint32_t>(__builtin_popcountll(pa[w] & pb[w]));
    return c;
  }
};

inline double plugin_mi_bits(const std::vector<double>& joint, int r) {
  std::vector<double> px(r, 0.0), py(r, 0.0);
  for (int x = 0; x < r; ++x) {
    for (int y = 0; y < r; ++y) {
      px[x] += joint[static_cast<std::size_t>(x) * r + y];
      py[y] += joint[static_cast<std::size_t>(x) * r + y];
    }
  }
  double mi = 0.0;
  for (int x = 0; x < r; ++x) {
    for (int y = 0; y < r; ++y) {
      const double pxy = joint[static_cast<std::size_t>(x) * r + y];
      if (pxy <= 0.0) continue;
      mi += pxy * std::log2(pxy / (px[x] * py[y]));
    }
  }
  return std::max(mi, 0.0);
}

}  // namespace detail

/// Per-pseudonym empirical statistics: mean for two-state, symbol
/// frequencies for r-state, free-edge transition frequencies for markov.
inline std::vector<fingerprint_vec> fingerprint(
    const trace_matrix& y, model_kind kind, int r,
    const std::vector<state_edge>& structure = {}) {
  if (y.m == 0) throw config_error("fingerprint requires m >= 1");
  std::vector<fingerprint_vec> fps(y.n);
  if (kind != model_kind::markov) {
    for (std::uint32_t u = 0; u < y.n; ++u) {
      std::vector<std::uint32_t> counts(r, 0);
      for (std::uint32_t k = 0; k < y.m; ++k) ++counts[y.at(k, u)];
      fingerprint_vec& fp = fps[u];
      if (kind == model_kind::two_state) {
        fp.stats = {static_cast<double>(counts[1]) / y.m};
      } else {
        for (int x = 1; x < r; ++x)
          fp.stats.push_back(static_cast<double>(counts[x]) / y.m);
      }
      fp.valid.assign(fp.stats.size(), true);
    }
    return fps;
  }

  density_spec spec;
  spec.kind = model_kind::markov;
  spec.r = r;
  spec.structure = structure;
  const auto out = spec.out_edges();
  for (std::uint32_t u = 0; u < y.n; ++u) {
    std::vector<std::uint32_t> trans(static_cast<std::size_t>(r) * r, 0);
    std::vector<std::uint32_t> exits(r, 0);
    for (std::uint32_t k = 0; k + 1 < y.m; ++k) {
      const int a = y.at(k, u), b = y.at(k + 1, u);
      ++trans[static_cast<std::size_t>(a) * r + b];
      ++exits[a];
    }
    fingerprint_vec& fp = fps[u];
    for (int i = 0; i < r; ++i) {
      if (out[i].size() < 2) continue;  // no free parameter for this state
      const bool visited = exits[i] > 0;
      for (std::size_t t = 0; t + 1 < out[i].size(); ++t) {
        fp.stats.push_back(
            visited ? static_cast<double>(
                          trans[static_cast<std::size_t>(i) * r + out[i][t]]) /
                          exits[i]
                    : 0.0);
        fp.valid.push_back(visited);
        fp.complete = fp.complete && visited;
      }
    }
  }
  return fps;
}

/// Default edge-test threshold: m^{-1/3} vanishes slower than the m^{-1/2}
/// sampling noise but faster than any constant dependence signal.
inline double default_tau(std::uint32_t m) {
  return std::pow(static_cast<double>(m), -1.0 / 3.0);
}

/// Reconstructs the association graph over pseudonyms: for two-state an edge
/// is declared when |empirical covariance| > tau, otherwise when the plug-in
/// mutual information (bits) of synchronized samples exceeds tau.
inline std::vector<std::pair<int, int>> reconstruct_graph(
    const trace_matrix& y, double tau) {
  if (y.m < 2) throw config_error("reconstruct_graph requires m >= 2");
  const auto planes = detail::bit_planes::build(y);
  std::vector<std::pair<int, int>> edges;
  const double m = static_cast<double>(y.m);
  if (y.r == 2) {
    std::vector<double> mean(y.n);
    for (std::uint32_t u = 0; u < y.n; ++u) mean[u] = planes.count(u, 1) / m;
    for (std::uint32_t i = 0; i < y.n; ++i) {
      for (std::uint32_t j = i + 1; j < y.n; ++j) {
        const double e11 = planes.joint_count(i, 1, j, 1) / m;
        if (std::abs(e11 - mean[i] * mean[j]) > tau) edges.emplace_back(i, j);
      }
    }
    return edges;
  }
  const int r = y.r;
  std::vector<double> joint(static_cast<std::size_t>(r) * r);
  for (std::uint32_t i = 0; i < y.n; ++i) {
    for (std::uint32_t j = i + 1; j < y.n; ++j) {
      for (int a = 0; a < r; ++a) {
        for (int b = 0; b < r; ++b) {
          joint[static_cast<std::size_t>(a) * r + b] =
              planes.joint_count(i, a, j, b) / m;
        }
      }
      if (detail::plugin_mi_bits(joint, r) > tau) edges.emplace_back(i, j);
    }
  }
  return edges;
}

/// Connected components of an edge set over n vertices, each sorted, ordered
/// by smallest member.
inline std::vector<std::vector<int>> connected_components(
    int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [i, j] : edges) parent[find(i)] = find(j);
  std::map<int, std::vector<int>> buckets;
  for (int v = 0; v < n; ++v) buckets[find(v)].push_back(v);
  std::vector<std::vector<int>> comps;
  for (auto& [root, members] : buckets) {
    std::sort(members.begin(), members.end());
    comps.push_back(std::move(members));
  }
  std::sort(comps.begin(), comps.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return comps;
}

namespace detail {

/// Distance between two statistic vectors over coordinates valid in both.
inline double stat_distance(const std::vector<double>& a,
                            const std::vector<double>& b,
                            const std::vector<bool>* valid_b = nullptr) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (valid_b && !(*valid_b)[i]) continue;
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// Stacks a set of statistic vectors after sorting them lexicographically;
/// used so that group-level comparisons are invariant to member order.
inline std::vector<std::vector<double>> sorted_vectors(
    std::vector<std::vector<double>> vecs) {
  std::sort(vecs.begin(), vecs.end());
  return vecs;
}

inline double group_distance(std::vector<std::vector<double>> profile_vecs,
                             std::vector<std::vector<double>> fp_vecs) {
  profile_vecs = sorted_vectors(std::move(profile_vecs));
  fp_vecs = sorted_vectors(std::move(fp_vecs));
  double acc = 0.0;
  for (std::size_t t = 0; t < profile_vecs.size(); ++t) {
    for (std::size_t i = 0; i < profile_vecs[t].size(); ++i) {
      const double d = profile_vecs[t][i] - fp_vecs[t][i];
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

/// Hungarian algorithm (potentials formulation), rows <= cols. Returns the
/// column assigned to each row of a min-cost perfect matching on the rows.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int rows = static_cast<int>(cost.size());
  if (rows == 0) return {};
  const int cols = static_cast<int>(cost[0].size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<int> match(cols + 1, 0);  // 1-based row matched to column
  std::vector<int> way(cols + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(rows, -1);
  for (int j = 1; j <= cols; ++j) {
    if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace detail

/// Picks, among components whose size equals the target group's, the one
/// whose sorted fingerprint stack is nearest (Euclidean) to the sorted
/// target profile stack. Returns nullopt when no component has the right
/// size (the attack-failed signal).
inline std::optional<std::size_t> match_group(
    const std::vector<std::vector<double>>& target_profiles,
    const std::vector<std::vector<int>>& components,
    const std::vector<fingerprint_vec>& fps) {
  const std::size_t s = target_profiles.size();
  std::optional<std::size_t> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < components.size(); ++c) {
    if (components[c].size() != s) continue;
    std::vector<std::vector<double>> fp_vecs;
    for (int pseud : components[c]) fp_vecs.push_back(fps[pseud].stats);
    const double d = detail::group_distance(target_profiles, fp_vecs);
    if (d < best_dist) {
      best_dist = d;
      best = c;
    }
  }
  return best;
}

/// Result of within-group member matching: assignment[t] is the index (into
/// the fingerprint list) matched to profile t. ambiguous flags exact cost
/// ties, resolved toward the lexicographically smallest assignment.
struct member_match {
  std::vector<int> assignment;
  bool ambiguous = false;
};

/// Minimum-total-distance bijection between s profiles and s fingerprints:
/// exact enumeration for s <= 8, Hungarian algorithm beyond.
inline member_match match_members(
    const std::vector<std::vector<double>>& profiles,
    const std::vector<fingerprint_vec>& fps) {
  const std::size_t s = profiles.size();
  if (fps.size() != s) throw config_error("member match size mismatch");
  member_match result;
  if (s == 0) return result;

  std::vector<std::vector<double>> cost(s, std::vector<double>(s, 0.0));
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      cost[i][j] =
          detail::stat_distance(profiles[i], fps[j].stats, &fps[j].valid);
    }
  }

  if (s <= 8) {
    std::vector<int> perm(s);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    bool tie = false;
    do {
      double total = 0.0;
      for (std::size_t i = 0; i < s; ++i) total += cost[i][perm[i]];
      if (total < best_cost - 1e-15) {
        best_cost = total;
        best = perm;
        tie = false;
      } else if (std::abs(total - best_cost) <= 1e-15 && perm != best) {
        tie = true;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    result.assignment = best;
    result.ambiguous = tie;
    return result;
  }
  result.assignment = detail::hungarian(cost);
  return result;
}

enum class match_strategy { nearest, assignment };

/// Attack configuration. tau <= 0 selects the default m^{-1/3} rule.
struct attack_config {
  double tau = 0.0;
  match_strategy strategy = match_strategy::nearest;
};

/// Outcome of one attack run. success and sample_errors are only meaningful
/// after scoring against the hidden ground truth.
struct attack_outcome {
  std::vector<std::pair<int, int>> edges;  // reconstructed, over pseudonyms
  std::vector<int> matched_component;      // pseudonyms claimed as the group
  std::map<int, int> ident;                // pseudonym -> claimed user
  std::vector<std::uint8_t> estimated;     // estimated samples of the target
  bool failed = false;
  bool ambiguous = false;
  bool success = false;
  std::uint64_t sample_errors = 0;
  std::uint32_t m = 0;

  nlohmann::json to_json() const {
    nlohmann::json edges_json = nlohmann::json::array();
    for (const auto& [a, b] : edges)
      edges_json.push_back(std::vector<int>{a, b});
    nlohmann::json ident_json = nlohmann::json::object();
    for (const auto& [pseud, user] : ident)
      ident_json[std::to_string(pseud)] = user;
    return {{"edges", std::move(edges_json)},
            {"group", matched_component},
            {"ident", std::move(ident_json)},
            {"success", success},
            {"sample_errors", sample_errors},
            {"m", m}};
  }
};

namespace detail {

/// Globally consistent group matching: assigns every group of the target's
/// size to a distinct same-size component by minimum total distance, then
/// returns the component assigned to the target group. Falls back to the
/// attack-failed signal when there are fewer components than groups and the
/// target ends up unassigned.
inline std::optional<std::size_t> assign_groups(
    const std::vector<std::vector<double>>& stats,
    const association_graph& graph, int target_group,
    const std::vector<std::vector<int>>& components,
    const std::vector<fingerprint_vec>& fps) {
  const std::size_t s = graph.groups[target_group].size();
  std::vector<int> group_ids, comp_ids;
  for (std::size_t g = 0; g < graph.groups.size(); ++g)
    if (graph.groups[g].size() == s) group_ids.push_back(static_cast<int>(g));
  for (std::size_t c = 0; c < components.size(); ++c)
    if (components[c].size() == s) comp_ids.push_back(static_cast<int>(c));
  if (comp_ids.empty()) return std::nullopt;

  // Rectangular padding: dummy columns absorb unmatched groups at a cost
  // larger than any real distance.
  const std::size_t rows = group_ids.size();
  const std::size_t cols = std::max(comp_ids.size(), rows);
  const double pad = 1e6;
  std::vector<std::vector<double>> cost(rows, std::vector<double>(cols, pad));
  for (std::size_t a = 0; a < rows; ++a) {
    std::vector<std::vector<double>> profile_vecs;
    for (int u : graph.groups[group_ids[a]]) profile_vecs.push_back(stats[u]);
    for (std::size_t b = 0; b < comp_ids.size(); ++b) {
      std::vector<std::vector<double>> fp_vecs;
      for (int pseud : components[comp_ids[b]])
        fp_vecs.push_back(fps[pseud].stats);
      cost[a][b] = group_distance(profile_vecs, fp_vecs);
    }
  }
  const auto row_to_col = hungarian(cost);
  for (std::size_t a = 0; a < rows; ++a) {
    if (group_ids[a] != target_group) continue;
    const int col = row_to_col[a];
    if (col < 0 || col >= static_cast<int>(comp_ids.size())) return std::nullopt;
    return static_cast<std::size_t>(comp_ids[col]);
  }
  return std::nullopt;
}

}  // namespace detail

/// The three-step statistical matching attack: reconstruct the association
/// graph, locate the target user's group among the connected components,
/// identify the members within it, and read the target's samples off the
/// matched pseudonym column.
inline attack_outcome run_attack(const trace_matrix& y,
                                 const adversary_knowledge& knowledge,
                                 int target_user,
                                 const attack_config& config = {}) {
  if (knowledge.n() != static_cast<int>(y.n))
    throw config_error("knowledge does not match trace dimensions");
  if (y.tag != stage::anonymized)
    throw config_error("attack input must be anonymized");
  attack_outcome outcome;
  outcome.m = y.m;

  const auto fps = fingerprint(y, knowledge.kind, knowledge.r,
                               knowledge.structure);
  const double tau = config.tau > 0.0 ? config.tau : default_tau(y.m);
  outcome.edges = reconstruct_graph(y, tau);
  const auto components = connected_components(y.n, outcome.edges);

  const int target_group = knowledge.graph.group_of(target_user);
  const auto& group_users = knowledge.graph.groups[target_group];
  const auto stats = knowledge.expected_stats();

  std::optional<std::size_t> comp;
  if (config.strategy == match_strategy::nearest) {
    std::vector<std::vector<double>> target_profiles;
    for (int u : group_users) target_profiles.push_back(stats[u]);
    comp = match_group(target_profiles, components, fps);
  } else {
    comp = detail::assign_groups(stats, knowledge.graph, target_group,
                                 components, fps);
  }
  if (!comp) {
    outcome.failed = true;
    return outcome;
  }
  outcome.matched_component = components[*comp];

  std::vector<std::vector<double>> profile_vecs;
  std::vector<fingerprint_vec> member_fps;
  for (int u : group_users) profile_vecs.push_back(stats[u]);
  for (int pseud : outcome.matched_component) member_fps.push_back(fps[pseud]);
  const auto match = match_members(profile_vecs, member_fps);
  outcome.ambiguous = match.ambiguous;
  for (std::size_t t = 0; t < group_users.size(); ++t) {
    outcome.ident[outcome.matched_component[match.assignment[t]]] =
        group_users[t];
  }

  // Estimate the target's samples as the matched pseudonym's reported
  // symbols (optimal as the obfuscation noise vanishes).
  for (const auto& [pseud, user] : outcome.ident) {
    if (user == target_user) {
      outcome.estimated = y.column(static_cast<std::uint32_t>(pseud));
      break;
    }
  }
  return outcome;
}

/// Scores an attack against the hidden ground truth: success means every
/// member of the target group was identified correctly under the realized
/// permutation; sample_errors counts estimated-sample mismatches for the
/// target user.
inline void score_attack(attack_outcome& outcome,
                         const std::vector<int>& permutation,
                         const trace_matrix& x_true, int target_user,
                         const std::vector<int>& group_users) {
  outcome.success = !outcome.failed;
  if (!outcome.failed) {
    for (int u : group_users) {
      const int pseud = permutation[u];
      const auto it = outcome.ident.find(pseud);
      if (it == outcome.ident.end() || it->second != u) {
        outcome.success = false;
        break;
      }
    }
  }
  outcome.sample_errors = 0;
  if (outcome.estimated.size() == x_true.m) {
    for (std::uint32_t k = 0; k < x_true.m; ++k) {
      outcome.sample_errors +=
          outcome.estimated[k] != x_true.at(k, target_user);
    }
  } else {
    // No estimate produced: every sample counts as an error.
    outcome.sample_errors = x_true.m;
  }
}

}  // namespace corrmatch

#endif  // CORRMATCH_ADVERSARY_HPP
