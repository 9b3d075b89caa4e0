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

#include "corrmatch/population.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

using namespace corrmatch;

namespace {

density_spec two_state(double eps = 0.05) {
  density_spec d;
  d.kind = model_kind::two_state;
  d.epsilon = eps;
  return d;
}

}  // namespace

TEST_CASE("two-state sampling respects a tight truncation") {
  const auto profiles = sample_profiles(1, two_state(0.49), 7);
  REQUIRE(profiles.size() == 1);
  CHECK(profiles[0].p() > 0.49);
  CHECK(profiles[0].p() < 0.51);
}

TEST_CASE("r-state profiles stay inside the open simplex") {
  density_spec d;
  d.kind = model_kind::r_state;
  d.r = 3;
  d.epsilon = 0.05;
  const auto profiles = sample_profiles(3, d, 11);
  for (const auto& prof : profiles) {
    REQUIRE(prof.params.size() == 2);
    double total = 0.0;
    for (double v : prof.params) {
      CHECK(v > 0.0);
      total += v;
    }
    CHECK(total < 1.0);
  }
}

TEST_CASE("markov full structure on two states has two free parameters") {
  density_spec d;
  d.kind = model_kind::markov;
  d.r = 2;
  d.epsilon = 0.05;
  d.structure = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  CHECK(d.dimension() == 2);
  const auto profiles = sample_profiles(2, d, 13);
  for (const auto& prof : profiles) {
    REQUIRE(prof.params.size() == 2);
    // rows sum to 1
    for (int i = 0; i < 2; ++i) {
      const double row = prof.transition[2 * i] + prof.transition[2 * i + 1];
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
    // free params are p(0,0) and p(1,0) under the last-out-edge convention
    CHECK(prof.params[0] == prof.transition[0]);
    CHECK(prof.params[1] == prof.transition[2]);
  }
}

TEST_CASE("profile sampling is reproducible") {
  const auto a = sample_profiles(50, two_state(), 99);
  const auto b = sample_profiles(50, two_state(), 99);
  for (int u = 0; u < 50; ++u) CHECK(a[u].p() == b[u].p());
}

TEST_CASE("two-state sample distribution is uniform on the truncated support") {
  const int count = 100000;
  const double eps = 0.05;
  auto profiles = sample_profiles(count, two_state(eps), 2024);
  std::vector<double> values;
  values.reserve(count);
  for (const auto& prof : profiles) values.push_back(prof.p());
  std::sort(values.begin(), values.end());
  double ks = 0.0;
  for (int i = 0; i < count; ++i) {
    const double cdf = (values[i] - eps) / (1.0 - 2.0 * eps);
    ks = std::max(ks, std::abs(cdf - (i + 1.0) / count));
    ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / count));
  }
  CHECK(ks < 0.01);
}

TEST_CASE("singleton groups produce an edgeless graph") {
  const auto g = build_group_graph({1, 1, 1}, group_topology::chain, 5);
  CHECK(g.n == 3);
  CHECK(g.edges.empty());
  CHECK(g.groups.size() == 3);
}

TEST_CASE("a complete pair is a single edge") {
  const auto g = build_group_graph({2}, group_topology::complete, 5);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0] == std::pair<int, int>{0, 1});
}

TEST_CASE("a chained triple is a connected path") {
  const auto g = build_group_graph({3}, group_topology::chain, 5);
  CHECK(g.edges.size() == 2);
  CHECK_NOTHROW(g.validate());
}

TEST_CASE("graph components equal the declared partition") {
  const auto g = build_group_graph({3, 2, 1, 4}, group_topology::chain, 31);
  CHECK_NOTHROW(g.validate());
  // reconstruct components from edges alone
  std::vector<int> parent(g.n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (auto [i, j] : g.edges) parent[find(i)] = find(j);
  for (const auto& grp : g.groups) {
    for (int v : grp) CHECK(find(v) == find(grp.front()));
  }
  // distinct groups are in distinct components
  for (std::size_t a = 0; a < g.groups.size(); ++a) {
    for (std::size_t b = a + 1; b < g.groups.size(); ++b) {
      CHECK(find(g.groups[a].front()) != find(g.groups[b].front()));
    }
  }
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(sample_profiles(0, two_state(), 1), config_error);
  CHECK_THROWS_AS(sample_profiles(1, two_state(0.6), 1), config_error);
  CHECK_THROWS_AS(sample_profiles(1, two_state(0.0), 1), config_error);
  CHECK_THROWS_AS(build_group_graph({}, group_topology::chain, 1),
                  config_error);
  CHECK_THROWS_AS(build_group_graph({0, 2}, group_topology::chain, 1),
                  config_error);

  density_spec bad;
  bad.kind = model_kind::markov;
  bad.r = 3;
  // states 0 and 1 form a closed pair; state 2 unreachable backwards
  bad.structure = {{0, 1}, {1, 0}, {2, 0}};
  CHECK_THROWS_AS(bad.validate(), config_error);

  density_spec periodic;
  periodic.kind = model_kind::markov;
  periodic.r = 2;
  periodic.structure = {{0, 1}, {1, 0}};
  CHECK_THROWS_AS(periodic.validate(), config_error);
}

TEST_CASE("coupling feasibility bounds") {
  // p inside [lambda*w, lambda*w + 1 - lambda] has a residual, outside not
  CHECK_NOTHROW(residual_distribution({0.6, 0.4}, {0.5, 0.5}, 0.6, 0));
  CHECK_THROWS_AS(residual_distribution({0.9, 0.1}, {0.5, 0.5}, 0.6, 3),
                  coupling_error);
  try {
    residual_distribution({0.9, 0.1}, {0.5, 0.5}, 0.6, 3);
  } catch (const coupling_error& e) {
    CHECK(e.user == 3);
    CHECK(std::string(e.what()).find("user 3") != std::string::npos);
  }
}

TEST_CASE("population JSON round-trips and keeps the contract fields") {
  population pop;
  pop.density = two_state(0.3);
  pop.profiles = sample_profiles(6, pop.density, 17);
  pop.graph = build_group_graph({2, 2, 2}, group_topology::chain, 17);
  pop.coupling.w = 0.5;
  pop.coupling.lambda.assign(6, 0.6);
  pop.coupling.mu = 0.0;

  const auto j = pop.to_json();
  for (const char* key :
       {"n", "model", "r", "profiles", "groups", "edges", "coupling"}) {
    CHECK(j.contains(key));
  }
  CHECK(j.at("coupling").contains("w"));
  CHECK(j.at("coupling").contains("lambda"));
  CHECK(j.at("coupling").contains("mu"));

  const auto back = population::from_json(j);
  CHECK(back.n() == 6);
  for (int u = 0; u < 6; ++u)
    CHECK(back.profiles[u].p() == doctest::Approx(pop.profiles[u].p()));
  CHECK(back.graph.edges == pop.graph.edges);
  CHECK(back.graph.groups == pop.graph.groups);
}
