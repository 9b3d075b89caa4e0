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

#include "corrmatch/oracle.hpp"

#include <cmath>

#include <doctest.h>

#include "corrmatch/rng.hpp"

using namespace corrmatch;

TEST_CASE("product joints carry zero mutual information") {
  CHECK(exact_pair_mi({0.35, 0.35, 0.15, 0.15}) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("identical fair bits carry one bit") {
  CHECK(exact_pair_mi({0.5, 0.0, 0.0, 0.5}) == doctest::Approx(1.0));
}

TEST_CASE("fair pair with p11 = 0.3 matches the plug-in formula") {
  // direct evaluation over the joint (0.3, 0.2, 0.2, 0.3)
  const double expected = 2 * 0.3 * std::log2(0.3 / 0.25) +
                          2 * 0.2 * std::log2(0.2 / 0.25);
  CHECK(expected == doctest::Approx(0.0290494).epsilon(1e-4));
  CHECK(exact_pair_mi({0.3, 0.2, 0.2, 0.3}) == doctest::Approx(expected));
}

TEST_CASE("invalid joints are rejected") {
  CHECK_THROWS_AS(exact_pair_mi({0.5, 0.5, 0.5, 0.5}), domain_error);
  CHECK_THROWS_AS(exact_pair_mi({-0.1, 0.6, 0.3, 0.2}), domain_error);
}

TEST_CASE("a single fair user is fully revealed") {
  const auto inst = tiny_instance::independent({0.5}, 1);
  CHECK(exact_mi_anonymized(inst, 0, 0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("two independent fair users leak half a bit") {
  const auto inst = tiny_instance::independent({0.5, 0.5}, 1);
  CHECK(exact_mi_anonymized(inst, 0, 0) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("a perfectly correlated fair pair leaks a full bit") {
  const auto inst = tiny_instance::pair({0.5, 0.0, 0.0, 0.5}, 1);
  CHECK(exact_mi_anonymized(inst, 0, 0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("oracle MI is invariant under relabeling identical users") {
  const auto a = tiny_instance::independent({0.3, 0.3, 0.7}, 2);
  const auto b = tiny_instance::independent({0.7, 0.3, 0.3}, 2);
  CHECK(exact_mi_anonymized(a, 0, 0) ==
        doctest::Approx(exact_mi_anonymized(b, 1, 0)).epsilon(1e-12));
}

TEST_CASE("correlation weakly increases the anonymized leakage") {
  const double indep =
      exact_mi_anonymized(tiny_instance::independent({0.5, 0.5}, 1), 0, 0);
  const double corr =
      exact_mi_anonymized(tiny_instance::pair({0.5, 0, 0, 0.5}, 1), 0, 0);
  CHECK(corr >= indep);
  CHECK(corr == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(indep == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("decorrelating weakly decreases oracle MI over a joint grid") {
  // Grid over positively correlated joints, the association-graph model
  // class (edges are defined by rho > 0). For negative covariance the
  // claim is false: the channel can push the driven marginal toward an
  // extreme and make the pair easier to tell apart.
  rng gen(404);
  int checked = 0;
  while (checked < 100) {
    const double p_i = 0.1 + 0.8 * gen.uniform();
    const double p_j = 0.1 + 0.8 * gen.uniform();
    const double lo = p_i * p_j;
    const double hi = std::min(p_i, p_j);
    if (hi <= lo) continue;
    const double p11 = lo + (hi - lo) * gen.uniform();
    const std::array<double, 4> joint{1 - p_i - p_j + p11, p_j - p11,
                                      p_i - p11, p11};
    const auto ch = build_pair_channel(p_i, p_j, p11);
    const auto rep = verify_pair_channel(joint, ch);
    for (int target = 0; target < 2; ++target) {
      const double before =
          exact_mi_anonymized(tiny_instance::pair(joint, 1), target, 0);
      const double after =
          exact_mi_anonymized(tiny_instance::pair(rep.joint_out, 1), target, 0);
      CHECK(after <= before + 1e-9);
    }
    ++checked;
  }
}

TEST_CASE("decorrelating the generic correlated pair strictly reduces MI") {
  const std::array<double, 4> joint{0.3, 0.2, 0.2, 0.3};
  const auto ch = build_pair_channel(0.5, 0.5, 0.3);
  const auto rep = verify_pair_channel(joint, ch);
  const double before = exact_mi_anonymized(tiny_instance::pair(joint, 1), 0, 0);
  const double after =
      exact_mi_anonymized(tiny_instance::pair(rep.joint_out, 1), 0, 0);
  CHECK(before == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(after < before - 0.05);
}

TEST_CASE("fixed obfuscation noise reduces the anonymized leakage") {
  auto clean = tiny_instance::pair({0.5, 0, 0, 0.5}, 1);
  auto noisy = clean;
  noisy.fixed_noise = {0.1, 0.1};
  const double i_clean = exact_mi_anonymized(clean, 0, 0);
  const double i_noisy = exact_mi_anonymized(noisy, 0, 0);
  CHECK(i_noisy < i_clean);
  CHECK(i_noisy > 0.0);
}

TEST_CASE("oracle enforces its enumeration budget") {
  auto inst = tiny_instance::independent({0.5, 0.5, 0.5, 0.5}, 3);
  inst.fixed_noise = {0.1, 0.1, 0.1, 0.1};
  // with noise the cost is 4^(nm) * n! = 4^12 * 24 >> 1e7
  CHECK_THROWS_AS(exact_mi_anonymized(inst, 0, 0), budget_error);
  CHECK_THROWS_AS(
      exact_mi_anonymized(tiny_instance::independent({0.5}, 5), 0, 0),
      config_error);
}

TEST_CASE("tiny instance validation catches malformed groups") {
  tiny_instance inst;
  inst.n = 2;
  inst.m = 1;
  inst.groups.push_back({{0, 1}, {0.5, 0.4, 0.05, 0.05}});
  CHECK_NOTHROW(inst.validate());
  inst.groups[0].probs = {0.5, 0.5, 0.5, 0.5};
  CHECK_THROWS_AS(inst.validate(), config_error);
  inst.groups[0] = {{0}, {0.5, 0.5}};
  CHECK_THROWS_AS(inst.validate(), config_error);  // user 1 uncovered
}
