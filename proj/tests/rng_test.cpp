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

#include "corrmatch/rng.hpp"

#include <set>
#include <vector>

#include <doctest.h>

using namespace corrmatch;

TEST_CASE("same seed yields the same stream") {
  rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("derived seeds differ across coordinates") {
  std::set<std::uint64_t> seen;
  for (int point = 0; point < 8; ++point) {
    for (int trial = 0; trial < 8; ++trial) {
      seen.insert(derive_seed(7, point, trial));
      seen.insert(derive_seed(7, seed_tag::traces, point, trial));
    }
  }
  CHECK(seen.size() == 128);
}

TEST_CASE("uniform lies in [0,1) and bernoulli respects edge probabilities") {
  rng gen(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = gen.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 100; ++i) {
    CHECK_FALSE(gen.bernoulli(0.0));
    CHECK(gen.bernoulli(1.0));
  }
}

TEST_CASE("below never reaches the bound") {
  rng gen(3);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) ++counts[gen.below(5)];
  for (int c : counts) CHECK(c > 800);  // roughly uniform
}

TEST_CASE("inverse_cdf maps the unit interval onto the support") {
  const std::vector<double> probs{0.2, 0.5, 0.3};
  CHECK(rng::inverse_cdf(probs, 0.0) == 0);
  CHECK(rng::inverse_cdf(probs, 0.19) == 0);
  CHECK(rng::inverse_cdf(probs, 0.21) == 1);
  CHECK(rng::inverse_cdf(probs, 0.69) == 1);
  CHECK(rng::inverse_cdf(probs, 0.71) == 2);
  CHECK(rng::inverse_cdf(probs, 0.999999) == 2);
}
