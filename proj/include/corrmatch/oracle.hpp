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

#ifndef CORRMATCH_ORACLE_HPP
#define CORRMATCH_ORACLE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "corrmatch/errors.hpp"
#include "corrmatch/mechanisms.hpp"

namespace corrmatch {

/// Compensated (Kahan) accumulator. Enumeration sums use it with a fixed
/// iteration order so results are bit-reproducible.
class kahan_sum {
 public:
  void add(double v) {
    const double y = v - carry_;
    const double t = total_ + y;
    carry_ = (t - total_) - y;
    total_ = t;
  }
  double value() const { return total_; }

 private:
  double total_ = 0.0;
  double carry_ = 0.0;
};

/// Joint distribution of one group's single-time symbols. Outcome index bit
/// t carries member t's symbol (members listed in ascending user order).
struct group_joint {
  std::vector<int> members;
  std::vector<double> probs;  // length 2^|members|
};

/// A brute-force-enumerable binary instance: per-group joint distributions,
/// i.i.d. over time, anonymized by a uniformly random permutation, with
/// optional fixed per-user noise probabilities (degenerate obfuscation, so
/// no integration over the noise prior is needed).
struct tiny_instance {
  int n = 1;
  int m = 1;
  std::vector<group_joint> groups;
  std::vector<double> fixed_noise;  // empty = no obfuscation

  static tiny_instance independent(const std::vector<double>& p, int m) {
    tiny_instance inst;
    inst.n = static_cast<int>(p.size());
    inst.m = m;
    for (int u = 0; u < inst.n; ++u)
      inst.groups.push_back({{u}, {1.0 - p[u], p[u]}});
    return inst;
  }

  /// Two users with the given joint (order p00, p01, p10, p11; bit 0 is
  /// user 0's symbol).
  static tiny_instance pair(const std::array<double, 4>& joint, int m) {
    tiny_instance inst;
    inst.n = 2;
    inst.m = m;
    inst.groups.push_back({{0, 1}, {joint[0], joint[2], joint[1], joint[3]}});
    return inst;
  }

  void validate() const {
    if (n < 1 || n > 4 || m < 1 || m > 3)
      throw config_error("tiny instance limited to n <= 4, m <= 3");
    std::vector<char> seen(n, 0);
    for (const auto& g : groups) {
      if (g.probs.size() != (std::size_t{1} << g.members.size()))
        throw config_error("group joint has wrong arity");
      double total = 0.0;
      for (double p : g.probs) {
        if (p < 0.0) throw config_error("negative probability");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-9)
        throw config_error("group joint does not sum to 1");
      for (int u : g.members) {
        if (u < 0 || u >= n || seen[u])
          throw config_error("groups are not a partition");
        seen[u] = 1;
      }
    }
    for (int u = 0; u < n; ++u) {
      if (!seen[u]) throw config_error("user missing from groups");
    }
    if (!fixed_noise.empty() &&
        fixed_noise.size() != static_cast<std::size_t>(n))
      throw config_error("fixed noise size mismatch");
  }

  /// Marginal P(X_u(k) = 1).
  double marginal_one(int user) const {
    for (const auto& g : groups) {
      for (std::size_t t = 0; t < g.members.size(); ++t) {
        if (g.members[t] != user) continue;
        double p1 = 0.0;
        for (std::size_t o = 0; o < g.probs.size(); ++o) {
          if (o >> t & 1) p1 += g.probs[o];
        }
        return p1;
      }
    }
    throw config_error("user not found");
  }
};

/// Plug-in mutual information (bits) of a binary pair joint given in the
/// order p00, p01, p10, p11. Zero exactly when the joint is product-form.
inline double exact_pair_mi(const std::array<double, 4>& joint) {
  double total = 0.0;
  for (double p : joint) {
    if (p < -1e-12) throw domain_error("negative joint probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw domain_error("pair joint does not sum to 1");
  const double pi1 = joint[2] + joint[3];
  const double pj1 = joint[1] + joint[3];
  const std::array<double, 4> prod{(1 - pi1) * (1 - pj1), (1 - pi1) * pj1,
                                   pi1 * (1 - pj1), pi1 * pj1};
  kahan_sum mi;
  for (int o = 0; o < 4; ++o) {
    if (joint[o] <= 0.0) continue;
    mi.add(joint[o] * std::log2(joint[o] / prod[o]));
  }
  return std::max(mi.value(), 0.0);
}

namespace detail {

/// P(X = x) for one full data matrix encoded as bits (bit u*m+k is user u's
/// symbol at time k), under the instance's per-group time-i.i.d. joints.
inline double matrix_probability(const tiny_instance& inst,
                                 std::uint32_t bits) {
  double p = 1.0;
  for (int k = 0; k < inst.m; ++k) {
    for (const auto& g : inst.groups) {
      std::size_t outcome = 0;
      for (std::size_t t = 0; t < g.members.size(); ++t) {
        outcome |= static_cast<std::size_t>(
                       bits >> (g.members[t] * inst.m + k) & 1u)
                   << t;
      }
      p *= g.probs[outcome];
    }
  }
  return p;
}

inline std::vector<std::vector<int>> all_permutations(int n) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<int>> all;
  do {
    all.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return all;
}

}  // namespace detail

/// Exact I(X_u(k); Y) in bits, where Y is the anonymized (and optionally
/// obfuscated with fixed R_u) observation matrix, by enumerating all data
/// realizations and all n! permutations under a uniform permutation prior.
inline double exact_mi_anonymized(const tiny_instance& inst, int target_user,
                                  int time_k) {
  inst.validate();
  if (target_user < 0 || target_user >= inst.n)
    throw config_error("target user out of range");
  if (time_k < 0 || time_k >= inst.m)
    throw config_error("time index out of range");

  const int cells = inst.n * inst.m;
  const std::uint64_t states = 1ULL << cells;
  double factorial = 1.0;
  for (int i = 2; i <= inst.n; ++i) factorial *= i;
  const bool noisy = !inst.fixed_noise.empty();
  const double budget = noisy ? static_cast<double>(states) * states * factorial
                              : static_cast<double>(states) * factorial;
  if (budget > 1e7) throw budget_error("enumeration exceeds the oracle budget");

  const auto perms = detail::all_permutations(inst.n);
  const double p_target_one = inst.marginal_one(target_user);
  const std::array<double, 2> p_x{1.0 - p_target_one, p_target_one};

  kahan_sum mi;
  // For every observable matrix y, accumulate P(y, X_u(k)=x) over the
  // uniform permutation prior, then add the per-y information terms.
  for (std::uint64_t y = 0; y < states; ++y) {
    kahan_sum joint0, joint1;
    for (const auto& pi : perms) {
      // Column u of the pre-anonymization matrix equals column pi[u] of y.
      if (!noisy) {
        std::uint32_t x_bits = 0;
        for (int u = 0; u < inst.n; ++u) {
          const std::uint32_t col =
              static_cast<std::uint32_t>(y >> (pi[u] * inst.m)) &
              ((1u << inst.m) - 1u);
          x_bits |= col << (u * inst.m);
        }
        const double p = detail::matrix_probability(inst, x_bits) / factorial;
        if (x_bits >> (target_user * inst.m + time_k) & 1u) {
          joint1.add(p);
        } else {
          joint0.add(p);
        }
      } else {
        for (std::uint64_t x = 0; x < states; ++x) {
          double p = detail::matrix_probability(
              inst, static_cast<std::uint32_t>(x));
          if (p == 0.0) continue;
          for (int u = 0; u < inst.n; ++u) {
            const double r_u = inst.fixed_noise[u];
            for (int k = 0; k < inst.m; ++k) {
              const bool match = ((x >> (u * inst.m + k)) & 1u) ==
                                 ((y >> (pi[u] * inst.m + k)) & 1u);
              p *= match ? 1.0 - r_u : r_u;
            }
          }
          p /= factorial;
          if (x >> (target_user * inst.m + time_k) & 1u) {
            joint1.add(p);
          } else {
            joint0.add(p);
          }
        }
      }
    }
    const double p_y = joint0.value() + joint1.value();
    if (p_y <= 0.0) continue;
    const std::array<double, 2> j{joint0.value(), joint1.value()};
    for (int x = 0; x < 2; ++x) {
      if (j[x] <= 0.0) continue;
      mi.add(j[x] * std::log2(j[x] / (p_y * p_x[x])));
    }
  }
  return std::max(mi.value(), 0.0);
}

/// Exhaustive verification of a decorrelating channel against the exact
/// four-outcome input joint: output joint, covariance, marginals, and
/// per-user flip rates, with the zero-covariance and flip-rate-bound
/// assertions reported as flags.
struct channel_report {
  std::array<double, 4> joint_out{};  // p00, p01, p10, p11 (bit order i, j)
  double cov_out = 0.0;
  double marginal_i = 0.0;
  double marginal_j = 0.0;
  double flip_rate_i = 0.0;
  double flip_rate_j = 0.0;
  double bound = 0.0;  // |Cov_in| / max{p_i, p_j, 1-p_i, 1-p_j}
  bool cov_zero = false;
  bool rate_within_bound = false;
};

inline channel_report verify_pair_channel(const std::array<double, 4>& joint,
                                          const pair_channel& ch) {
  channel_report report;
  const double p_i = joint[2] + joint[3];
  const double p_j = joint[1] + joint[3];
  const double cov_in = joint[3] - p_i * p_j;
  report.bound = std::abs(cov_in) /
                 std::max({p_i, p_j, 1.0 - p_i, 1.0 - p_j});

  kahan_sum flip_driven;
  for (int xi = 0; xi < 2; ++xi) {
    for (int xj = 0; xj < 2; ++xj) {
      const double mass = joint[xi * 2 + xj];
      const int driver_sym = ch.driver == 0 ? xi : xj;
      const int driven_sym = ch.driver == 0 ? xj : xi;
      double p_flip = 0.0;
      if (!ch.is_identity() && driver_sym == ch.trigger_state) {
        const int eligible =
            ch.direction == flip_direction::zero_to_one ? 0 : 1;
        if (driven_sym == eligible) p_flip = ch.flip_prob;
      }
      const int flipped_driven = 1 - driven_sym;
      int flip_i = xi, flip_j = xj;
      if (ch.driver == 0) {
        flip_j = flipped_driven;
      } else {
        flip_i = flipped_driven;
      }
      report.joint_out[xi * 2 + xj] += mass * (1.0 - p_flip);
      report.joint_out[flip_i * 2 + flip_j] += mass * p_flip;
      flip_driven.add(mass * p_flip);
    }
  }
  const double q_i = report.joint_out[2] + report.joint_out[3];
  const double q_j = report.joint_out[1] + report.joint_out[3];
  report.marginal_i = q_i;
  report.marginal_j = q_j;
  report.cov_out = report.joint_out[3] - q_i * q_j;
  if (ch.driver == 0) {
    report.flip_rate_i = 0.0;
    report.flip_rate_j = flip_driven.value();
  } else {
    report.flip_rate_i = flip_driven.value();
    report.flip_rate_j = 0.0;
  }
  report.cov_zero = std::abs(report.cov_out) < 1e-12;
  report.rate_within_bound =
      std::max(report.flip_rate_i, report.flip_rate_j) <= report.bound + 1e-12;
  return report;
}

}  // namespace corrmatch

#endif  // CORRMATCH_ORACLE_HPP
