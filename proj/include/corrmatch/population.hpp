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

#ifndef CORRMATCH_POPULATION_HPP
#define CORRMATCH_POPULATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "corrmatch/errors.hpp"
#include "corrmatch/rng.hpp"

#include <json.hpp>

namespace corrmatch {

enum class model_kind { two_state, r_state, markov };

inline std::string to_string(model_kind k) {
  switch (k) {
    case model_kind::two_state: return "two-state";
    case model_kind::r_state: return "r-state";
    case model_kind::markov: return "markov";
  }
  return "?";
}

inline model_kind model_kind_from_string(const std::string& s) {
  if (s == "two-state") return model_kind::two_state;
  if (s == "r-state") return model_kind::r_state;
  if (s == "markov") return model_kind::markov;
  throw config_error("unknown model kind: " + s);
}

/// Directed edge in a Markov transition structure.
using state_edge = std::pair<int, int>;

namespace detail {

inline bool strongly_connected(int r, const std::vector<state_edge>& edges) {
  std::vector<std::vector<int>> fwd(r), rev(r);
  for (const auto& [i, j] : edges) {
    fwd[i].push_back(j);
    rev[j].push_back(i);
  }
  auto reach_all = [&](const std::vector<std::vector<int>>& adj) {
    std::vector<char> seen(r, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int w : adj[v]) {
        if (!seen[w]) {
          seen[w] = 1;
          stack.push_back(w);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c; });
  };
  return reach_all(fwd) && reach_all(rev);
}

/// Period of a strongly connected digraph: gcd of depth(u)+1-depth(v) over
/// all edges, with depths from a BFS rooted at state 0. Aperiodic iff 1.
inline int graph_period(int r, const std::vector<state_edge>& edges) {
  std::vector<std::vector<int>> fwd(r);
  for (const auto& [i, j] : edges) fwd[i].push_back(j);
  std::vector<int> depth(r, -1);
  std::vector<int> queue{0};
  depth[0] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    int v = queue[head];
    for (int w : fwd[v]) {
      if (depth[w] < 0) {
        depth[w] = depth[v] + 1;
        queue.push_back(w);
      }
    }
  }
  int g = 0;
  for (const auto& [i, j] : edges) {
    g = std::gcd(g, std::abs(depth[i] + 1 - depth[j]));
  }
  return g == 0 ? 1 : g;
}

}  // namespace detail

/// Shape of the per-user statistical model and of the density the profiles
/// are drawn from. epsilon shrinks the support away from the boundary of the
/// probability region; the density is uniform on what remains.
struct density_spec {
  model_kind kind = model_kind::two_state;
  int r = 2;
  double epsilon = 0.05;
  /// Markov only: transition structure F shared by all users.
  std::vector<state_edge> structure;

  /// Number of free parameters in one profile's statistic vector.
  int dimension() const {
    switch (kind) {
      case model_kind::two_state: return 1;
      case model_kind::r_state: return r - 1;
      case model_kind::markov:
        return static_cast<int>(structure.size()) - r;
    }
    return 0;
  }

  void validate() const {
    if (r < 2) throw config_error("symbol count r must be >= 2");
    if (kind == model_kind::two_state && r != 2)
      throw config_error("two-state model requires r = 2");
    if (!(epsilon > 0.0 && epsilon < 0.5))
      throw config_error("epsilon must lie in (0, 0.5)");
    if (kind == model_kind::r_state && epsilon >= 1.0 / r)
      throw config_error("epsilon must be < 1/r for the r-state simplex");
    if (kind != model_kind::markov) return;

    if (structure.empty())
      throw config_error("markov model requires a transition edge set");
    std::vector<int> out_degree(r, 0);
    for (const auto& [i, j] : structure) {
      if (i < 0 || i >= r || j < 0 || j >= r)
        throw config_error("transition edge state out of range");
      ++out_degree[i];
    }
    int max_out = 0;
    for (int i = 0; i < r; ++i) {
      if (out_degree[i] == 0)
        throw config_error("state " + std::to_string(i) +
                           " has no outgoing transition edge");
      max_out = std::max(max_out, out_degree[i]);
    }
    if (epsilon >= 1.0 / max_out)
      throw config_error("epsilon too large for the transition row simplex");
    if (!detail::strongly_connected(r, structure))
      throw config_error("transition structure is not irreducible");
    if (detail::graph_period(r, structure) != 1)
      throw config_error("transition structure is periodic");
  }

  /// Out-edges of each state, sorted by target. The last out-edge of every
  /// state is the dependent one; the rest, row-major over states, are the
  /// free parameters (d = |F| - r).
  std::vector<std::vector<int>> out_edges() const {
    std::vector<std::vector<int>> out(r);
    for (const auto& [i, j] : structure) out[i].push_back(j);
    for (auto& row : out) std::sort(row.begin(), row.end());
    return out;
  }
};

/// One user's statistical profile.
///
/// params is the canonical statistic vector the adversary matches on:
/// {p_u} for two-state, the (r-1)-vector of symbol probabilities for
/// r-state, and the d free transition probabilities for markov.
struct user_profile {
  int user_id = 0;
  std::vector<double> params;
  /// Markov only: full r x r transition matrix, row-major.
  std::vector<double> transition;

  double p() const { return params.at(0); }

  /// Full symbol distribution (length r) for i.i.d. models.
  std::vector<double> symbol_distribution(int r) const {
    std::vector<double> dist;
    if (params.size() + 1 != static_cast<std::size_t>(r))
      throw config_error("profile dimension does not match r");
    double rest = 1.0;
    if (r == 2) {
      // two-state params hold P(X=1)
      dist = {1.0 - params[0], params[0]};
    } else {
      dist.push_back(0.0);  // placeholder for symbol 0
      for (double v : params) {
        dist.push_back(v);
        rest -= v;
      }
      dist[0] = rest;
    }
    return dist;
  }
};

/// Extracts the free-parameter vector from a full transition matrix.
inline std::vector<double> markov_free_params(
    const std::vector<double>& transition, const density_spec& density) {
  const int r = density.r;
  std::vector<double> params;
  const auto out = density.out_edges();
  for (int i = 0; i < r; ++i) {
    for (std::size_t t = 0; t + 1 < out[i].size(); ++t) {
      params.push_back(transition[static_cast<std::size_t>(i) * r + out[i][t]]);
    }
  }
  return params;
}

enum class group_topology { chain, complete };

inline std::string to_string(group_topology t) {
  return t == group_topology::chain ? "chain" : "complete";
}

inline group_topology topology_from_string(const std::string& s) {
  if (s == "chain") return group_topology::chain;
  if (s == "complete") return group_topology::complete;
  throw config_error("unknown topology: " + s);
}

/// Undirected association graph partitioned into disjoint connected groups.
struct association_graph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;  // normalized i < j
  std::vector<std::vector<int>> groups;    // partition of {0..n-1}

  int group_of(int user) const {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (int v : groups[g]) {
        if (v == user) return static_cast<int>(g);
      }
    }
    throw config_error("user " + std::to_string(user) + " not in any group");
  }

  void validate() const {
    std::vector<int> owner(n, -1);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (int v : groups[g]) {
        if (v < 0 || v >= n || owner[v] != -1)
          throw config_error("groups are not a partition of the users");
        owner[v] = static_cast<int>(g);
      }
    }
    for (int v = 0; v < n; ++v) {
      if (owner[v] < 0) throw config_error("groups do not cover all users");
    }
    for (const auto& [i, j] : edges) {
      if (i < 0 || j < 0 || i >= n || j >= n || i == j)
        throw config_error("invalid edge");
      if (owner[i] != owner[j])
        throw config_error("edge crosses group boundaries");
    }
    // Every block of size >= 2 must be connected by its induced edges.
    for (const auto& grp : groups) {
      if (grp.size() < 2) continue;
      std::vector<int> comp(n, -1);
      for (int v : grp) comp[v] = 0;
      // union-find over the induced edges
      std::vector<int> parent(n);
      std::iota(parent.begin(), parent.end(), 0);
      std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
      };
      for (const auto& [i, j] : edges) {
        if (comp[i] == 0 && comp[j] == 0) parent[find(i)] = find(j);
      }
      const int root = find(grp.front());
      for (int v : grp) {
        if (find(v) != root)
          throw config_error("group is not connected by its edges");
      }
    }
  }
};

/// Latent-mixture coupling parameters. w is the latent Bernoulli weight
/// shared by all groups, lambda[u] the probability that user u copies the
/// group latent symbol, mu the shared-variate probability for Markov
/// coupling.
struct coupling_spec {
  double w = 0.5;
  std::vector<double> lambda;
  double mu = 0.0;

  double lambda_of(int user) const {
    return lambda.empty() ? 0.0 : lambda.at(user);
  }

  void validate(int n) const {
    if (!(w > 0.0 && w < 1.0)) throw config_error("coupling w must be in (0,1)");
    if (!(mu >= 0.0 && mu <= 1.0))
      throw config_error("coupling mu must be in [0,1]");
    if (!lambda.empty() && static_cast<int>(lambda.size()) != n)
      throw config_error("lambda must have one entry per user");
    for (double l : lambda) {
      if (!(l >= 0.0 && l <= 1.0))
        throw config_error("lambda entries must be in [0,1]");
    }
  }
};

/// A sampled population: profiles + association graph + hidden coupling.
struct population {
  density_spec density;
  std::vector<user_profile> profiles;
  association_graph graph;
  coupling_spec coupling;

  int n() const { return static_cast<int>(profiles.size()); }

  nlohmann::json to_json() const;
  static population from_json(const nlohmann::json& j);
};

namespace detail {

/// Uniform point on the standard simplex {y_i >= 0, sum <= 1} of the given
/// dimension (Dirichlet(1..1) via normalized exponentials, dropping the
/// last coordinate).
inline std::vector<double> uniform_simplex(int dimension, rng& gen) {
  std::vector<double> e(dimension + 1);
  double total = 0.0;
  for (double& v : e) {
    v = gen.exponential();
    total += v;
  }
  std::vector<double> y(dimension);
  for (int i = 0; i < dimension; ++i) y[i] = e[i] / total;
  return y;
}

/// Uniform probability row of the given length with every entry (including
/// the implicit remainder) at least epsilon.
inline std::vector<double> truncated_row(int length, double epsilon, rng& gen) {
  if (length == 1) return {1.0};
  const double scale = 1.0 - length * epsilon;
  auto y = uniform_simplex(length - 1, gen);
  std::vector<double> row(length);
  double rest = 1.0;
  for (int i = 0; i + 1 < length; ++i) {
    row[i] = epsilon + scale * y[i];
    rest -= row[i];
  }
  row[length - 1] = rest;
  return row;
}

}  // namespace detail

/// Samples n i.i.d. profiles from the uniform density on the epsilon-
/// truncated support. Deterministic given the seed.
inline std::vector<user_profile> sample_profiles(int n,
                                                 const density_spec& density,
                                                 std::uint64_t seed) {
  if (n < 1) throw config_error("population size must be >= 1");
  density.validate();
  std::vector<user_profile> profiles(n);
  for (int u = 0; u < n; ++u) {
    rng gen(derive_seed(seed, seed_tag::population, u));
    user_profile& prof = profiles[u];
    prof.user_id = u;
    switch (density.kind) {
      case model_kind::two_state: {
        prof.params = {density.epsilon +
                       (1.0 - 2.0 * density.epsilon) * gen.uniform()};
        break;
      }
      case model_kind::r_state: {
        auto full = detail::truncated_row(density.r, density.epsilon, gen);
        prof.params.assign(full.begin() + 1, full.end());
        break;
      }
      case model_kind::markov: {
        const auto out = density.out_edges();
        prof.transition.assign(static_cast<std::size_t>(density.r) * density.r,
                               0.0);
        for (int i = 0; i < density.r; ++i) {
          auto row = detail::truncated_row(static_cast<int>(out[i].size()),
                                           density.epsilon, gen);
          for (std::size_t t = 0; t < out[i].size(); ++t) {
            prof.transition[static_cast<std::size_t>(i) * density.r +
                            out[i][t]] = row[t];
          }
        }
        prof.params = markov_free_params(prof.transition, density);
        break;
      }
    }
  }
  return profiles;
}

/// Builds the group-structured association graph: consecutive index blocks
/// wired per the topology, then relabeled by a seeded shuffle.
inline association_graph build_group_graph(const std::vector<int>& group_sizes,
                                           group_topology topology,
                                           std::uint64_t seed) {
  if (group_sizes.empty()) throw config_error("group size list is empty");
  int n = 0;
  for (int s : group_sizes) {
    if (s < 1) throw config_error("group sizes must be >= 1");
    n += s;
  }
  std::vector<int> relabel(n);
  std::iota(relabel.begin(), relabel.end(), 0);
  rng gen(derive_seed(seed, seed_tag::graph));
  gen.shuffle(relabel);

  association_graph graph;
  graph.n = n;
  int offset = 0;
  for (int s : group_sizes) {
    std::vector<int> members(s);
    for (int t = 0; t < s; ++t) members[t] = relabel[offset + t];
    auto add_edge = [&](int a, int b) {
      graph.edges.emplace_back(std::min(a, b), std::max(a, b));
    };
    if (topology == group_topology::chain) {
      for (int t = 0; t + 1 < s; ++t) add_edge(members[t], members[t + 1]);
    } else {
      for (int a = 0; a < s; ++a) {
        for (int b = a + 1; b < s; ++b) add_edge(members[a], members[b]);
      }
    }
    std::sort(members.begin(), members.end());
    graph.groups.push_back(std::move(members));
    offset += s;
  }
  std::sort(graph.edges.begin(), graph.edges.end());
  return graph;
}

/// Residual symbol distribution for the latent-mixture coupling: the
/// distribution user u draws from when it does not copy the group latent.
/// Throws coupling_error when the profile marginal cannot be reproduced.
inline std::vector<double> residual_distribution(
    const std::vector<double>& marginal, const std::vector<double>& latent,
    double lambda, int user_id) {
  constexpr double kTol = 1e-12;
  std::vector<double> residual(marginal.size());
  if (lambda >= 1.0) {
    for (std::size_t x = 0; x < marginal.size(); ++x) {
      if (std::abs(marginal[x] - latent[x]) > 1e-9)
        throw coupling_error(user_id,
                             "lambda = 1 requires the profile to equal the "
                             "group latent distribution");
      residual[x] = marginal[x];
    }
    return residual;
  }
  for (std::size_t x = 0; x < marginal.size(); ++x) {
    residual[x] = (marginal[x] - lambda * latent[x]) / (1.0 - lambda);
    if (residual[x] < -kTol || residual[x] > 1.0 + kTol)
      throw coupling_error(user_id, "residual distribution leaves [0,1]");
    residual[x] = std::clamp(residual[x], 0.0, 1.0);
  }
  return residual;
}

inline nlohmann::json population::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["n"] = n();
  j["model"] = to_string(density.kind);
  j["r"] = density.r;
  j["epsilon"] = density.epsilon;
  nlohmann::json profs = nlohmann::json::array();
  for (const auto& prof : profiles) {
    if (density.kind == model_kind::two_state) {
      profs.push_back(prof.params[0]);
    } else if (density.kind == model_kind::r_state) {
      profs.push_back(prof.params);
    } else {
      nlohmann::json matrix = nlohmann::json::array();
      for (int i = 0; i < density.r; ++i) {
        matrix.push_back(std::vector<double>(
            prof.transition.begin() + static_cast<std::size_t>(i) * density.r,
            prof.transition.begin() +
                static_cast<std::size_t>(i + 1) * density.r));
      }
      profs.push_back(std::move(matrix));
    }
  }
  j["profiles"] = std::move(profs);
  if (density.kind == model_kind::markov) {
    nlohmann::json structure = nlohmann::json::array();
    for (const auto& [a, b] : density.structure)
      structure.push_back(std::vector<int>{a, b});
    j["structure"] = std::move(structure);
  }
  j["groups"] = graph.groups;
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : graph.edges)
    edges.push_back(std::vector<int>{a, b});
  j["edges"] = std::move(edges);
  j["coupling"] = {{"w", coupling.w},
                   {"lambda", coupling.lambda},
                   {"mu", coupling.mu}};
  return j;
}

inline population population::from_json(const nlohmann::json& j) {
  population pop;
  pop.density.kind = model_kind_from_string(j.at("model").get<std::string>());
  pop.density.r = j.at("r").get<int>();
  pop.density.epsilon = j.value("epsilon", 0.05);
  if (j.contains("structure")) {
    for (const auto& e : j.at("structure"))
      pop.density.structure.emplace_back(e.at(0).get<int>(),
                                         e.at(1).get<int>());
  }
  pop.density.validate();
  const int n = j.at("n").get<int>();
  const auto& profs = j.at("profiles");
  if (static_cast<int>(profs.size()) != n)
    throw config_error("profile count does not match n");
  for (int u = 0; u < n; ++u) {
    user_profile prof;
    prof.user_id = u;
    if (pop.density.kind == model_kind::two_state) {
      prof.params = {profs[u].get<double>()};
    } else if (pop.density.kind == model_kind::r_state) {
      prof.params = profs[u].get<std::vector<double>>();
    } else {
      for (const auto& row : profs[u]) {
        for (const auto& v : row) prof.transition.push_back(v.get<double>());
      }
      prof.params = markov_free_params(prof.transition, pop.density);
    }
    pop.profiles.push_back(std::move(prof));
  }
  pop.graph.n = n;
  pop.graph.groups = j.at("groups").get<std::vector<std::vector<int>>>();
  for (const auto& e : j.at("edges"))
    pop.graph.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  pop.graph.validate();
  const auto& c = j.at("coupling");
  pop.coupling.w = c.at("w").get<double>();
  pop.coupling.lambda = c.at("lambda").get<std::vector<double>>();
  pop.coupling.mu = c.at("mu").get<double>();
  pop.coupling.validate(n);
  return pop;
}

}  // namespace corrmatch

#endif  // CORRMATCH_POPULATION_HPP
