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

#ifndef CORRMATCH_ERRORS_HPP
#define CORRMATCH_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace corrmatch {

/// Invalid configuration: bad density spec, malformed group sizes, bad file
/// schema. Maps to CLI exit code 2.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid mechanism input: non-bijective permutation, noise level outside
/// [0,1], stage mismatch, unsupported group topology.
struct mechanism_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A coupling spec that cannot reproduce the requested marginal for some
/// user. Carries the offending user id.
struct coupling_error : std::runtime_error {
  coupling_error(int user_id, const std::string& what)
      : std::runtime_error("user " + std::to_string(user_id) + ": " + what),
        user(user_id) {}
  int user;
};

/// Invalid probability arguments (e.g. a pair joint outside the Frechet
/// bounds).
struct domain_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Exact-enumeration request larger than the oracle budget.
struct budget_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace corrmatch

#endif  // CORRMATCH_ERRORS_HPP
