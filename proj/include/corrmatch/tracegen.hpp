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

#ifndef CORRMATCH_TRACEGEN_HPP
#define CORRMATCH_TRACEGEN_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "corrmatch/errors.hpp"
#include "corrmatch/population.hpp"
#include "corrmatch/rng.hpp"
#include "corrmatch/trace.hpp"

namespace corrmatch {

/// Exact single-time covariance of the latent-mixture generator for a
/// two-state pair: Cov(X_i, X_j) = lambda_i * lambda_j * w * (1 - w).
inline double pair_covariance(double lambda_i, double lambda_j, double w) {
  return lambda_i * lambda_j * w * (1.0 - w);
}

/// Convenience overload checking coupling feasibility for the two profiles.
inline double pair_covariance(const coupling_spec& coupling, int i, int j,
                              double p_i, double p_j) {
  const std::vector<double> latent{1.0 - coupling.w, coupling.w};
  residual_distribution({1.0 - p_i, p_i}, latent, coupling.lambda_of(i), i);
  residual_distribution({1.0 - p_j, p_j}, latent, coupling.lambda_of(j), j);
  return pair_covariance(coupling.lambda_of(i), coupling.lambda_of(j),
                         coupling.w);
}

/// Stationary distribution of an r-state transition matrix, computed by
/// iterated averaging (power iteration on the lazy chain (P + I) / 2, which
/// converges geometrically for any irreducible structure).
inline std::vector<double> stationary_distribution(
    const std::vector<double>& transition, int r, double tol = 1e-14) {
  std::vector<double> pi(r, 1.0 / r), next(r);
  for (int iter = 0; iter < 1000000; ++iter) {
    double delta = 0.0;
    for (int j = 0; j < r; ++j) {
      double acc = 0.0;
      for (int i = 0; i < r; ++i)
        acc += pi[i] * transition[static_cast<std::size_t>(i) * r + j];
      next[j] = 0.5 * (acc + pi[j]);
    }
    for (int j = 0; j < r; ++j) {
      delta = std::max(delta, std::abs(next[j] - pi[j]));
      pi[j] = next[j];
    }
    if (delta < tol) break;
  }
  return pi;
}

namespace detail {

/// Per-group latent distribution for i.i.d. coupling: the first member's
/// full symbol distribution (so the first member's residual always exists).
inline std::vector<double> group_latent(const population& pop,
                                        const std::vector<int>& members) {
  if (pop.density.kind == model_kind::two_state) {
    return {1.0 - pop.coupling.w, pop.coupling.w};
  }
  return pop.profiles[members.front()].symbol_distribution(pop.density.r);
}

}  // namespace detail

/// Checks that every grouped user's residual distribution exists for the
/// population's coupling; throws coupling_error naming the first offender.
inline void check_coupling_feasibility(const population& pop) {
  if (pop.density.kind == model_kind::markov) return;
  for (const auto& grp : pop.graph.groups) {
    if (grp.size() < 2) continue;
    const auto latent = detail::group_latent(pop, grp);
    for (int u : grp) {
      residual_distribution(pop.profiles[u].symbol_distribution(pop.density.r),
                            latent, pop.coupling.lambda_of(u), u);
    }
  }
}

/// Generates the true data matrix X for an i.i.d. (two-state or r-state)
/// population. Within each group, at each time a latent symbol W(k) is drawn
/// from the group latent distribution; user u copies it with probability
/// lambda_u and otherwise draws from its residual distribution, so every
/// column keeps exactly the declared marginal while edges gain positive
/// dependence. Groups use independent derived seeds, so per-group generation
/// is order-independent.
inline trace_matrix generate_iid_traces(const population& pop, std::uint32_t m,
                                        std::uint64_t seed) {
  if (pop.density.kind == model_kind::markov)
    throw config_error("generate_iid_traces requires an i.i.d. model");
  pop.coupling.validate(pop.n());
  trace_matrix traces(m, pop.n(), static_cast<std::uint8_t>(pop.density.r),
                      stage::true_data);

  for (std::size_t g = 0; g < pop.graph.groups.size(); ++g) {
    const auto& members = pop.graph.groups[g];
    const auto latent = detail::group_latent(pop, members);
    // Pre-compute residuals; throws coupling_error naming the first
    // infeasible user.
    std::vector<std::vector<double>> residuals;
    std::vector<double> lambdas;
    for (int u : members) {
      const double lambda = members.size() > 1 ? pop.coupling.lambda_of(u) : 0.0;
      lambdas.push_back(lambda);
      residuals.push_back(residual_distribution(
          pop.profiles[u].symbol_distribution(pop.density.r), latent, lambda,
          u));
    }
    rng gen(derive_seed(seed, seed_tag::group, g));
    for (std::uint32_t k = 0; k < m; ++k) {
      const int shared = gen.discrete(latent);
      for (std::size_t t = 0; t < members.size(); ++t) {
        int symbol;
        if (lambdas[t] > 0.0 && gen.bernoulli(lambdas[t])) {
          symbol = shared;
        } else {
          symbol = gen.discrete(residuals[t]);
        }
        traces.at(k, members[t]) = static_cast<std::uint8_t>(symbol);
      }
    }
  }
  return traces;
}

/// Generates Markov traces. Each user's column is a realization of its own
/// chain started from its stationary distribution (optionally advanced by
/// burn_in discarded steps). Group coupling: at every step, with probability
/// mu the whole group consumes one shared uniform variate for its
/// inverse-CDF transition draws, otherwise each member uses a private
/// variate. Marginals and transition laws are unchanged by the coupling.
inline trace_matrix generate_markov_traces(const population& pop,
                                           std::uint32_t m,
                                           std::uint32_t burn_in,
                                           std::uint64_t seed) {
  if (pop.density.kind != model_kind::markov)
    throw config_error("generate_markov_traces requires a markov model");
  pop.density.validate();
  pop.coupling.validate(pop.n());
  const int r = pop.density.r;
  const double mu = pop.coupling.mu;
  trace_matrix traces(m, pop.n(), static_cast<std::uint8_t>(r),
                      stage::true_data);

  std::vector<std::vector<double>> stationary(pop.n());
  std::vector<std::vector<std::vector<double>>> rows(pop.n());
  for (int u = 0; u < pop.n(); ++u) {
    const auto& tm = pop.profiles[u].transition;
    stationary[u] = stationary_distribution(tm, r);
    rows[u].resize(r);
    for (int i = 0; i < r; ++i)
      rows[u][i].assign(tm.begin() + static_cast<std::size_t>(i) * r,
                        tm.begin() + static_cast<std::size_t>(i + 1) * r);
  }

  for (std::size_t g = 0; g < pop.graph.groups.size(); ++g) {
    const auto& members = pop.graph.groups[g];
    rng group_gen(derive_seed(seed, seed_tag::group, g));
    std::vector<rng> user_gen;
    for (int u : members) user_gen.emplace_back(derive_seed(seed, seed_tag::user, u));
    std::vector<int> state(members.size(), 0);
    const bool couple = members.size() > 1 && mu > 0.0;

    // Step 0 draws the stationary start; later steps are transitions. Rows
    // 0..m-1 are the states at steps burn_in .. burn_in + m - 1.
    for (std::uint32_t step = 0; step < burn_in + m; ++step) {
      bool shared = false;
      double shared_u = 0.0;
      if (couple) {
        shared = group_gen.bernoulli(mu);
        if (shared) shared_u = group_gen.uniform();
      }
      for (std::size_t t = 0; t < members.size(); ++t) {
        const double u01 = shared ? shared_u : user_gen[t].uniform();
        const int user = members[t];
        state[t] = step == 0 ? rng::inverse_cdf(stationary[user], u01)
                             : rng::inverse_cdf(rows[user][state[t]], u01);
      }
      if (step >= burn_in) {
        const std::uint32_t k = step - burn_in;
        for (std::size_t t = 0; t < members.size(); ++t)
          traces.at(k, members[t]) = static_cast<std::uint8_t>(state[t]);
      }
    }
  }
  return traces;
}

}  // namespace corrmatch

#endif  // CORRMATCH_TRACEGEN_HPP
