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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct cli_result {
  int exit_code;
  std::string out;
  std::string err;
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "corrmatch_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

cli_result run_cli(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = std::string(CORRMATCH_CLI_PATH) + " " + args + " >" +
                          out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  cli_result result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  result.out = slurp(out);
  result.err = slurp(err);
  return result;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream o(p);
  o << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Strips the trailing (wall-clock) column from every CSV line.
std::string without_seconds(const std::string& csv) {
  std::istringstream lines(csv);
  std::string line, out;
  while (std::getline(lines, line)) {
    out += line.substr(0, line.rfind(','));
    out += '\n';
  }
  return out;
}

}  // namespace

TEST_CASE("gen -> mech -> attack pipeline with sealed truth") {
  const fs::path dir = work_dir() / "pipeline";
  fs::create_directories(dir);
  write_file(dir / "gen.json", R"({
    "schema_version": 1,
    "model": "two-state", "n": 8, "epsilon": 0.35,
    "group_size": 2, "topology": "chain",
    "coupling": {"w": 0.5, "lambda_all": 0.7},
    "m": 8000, "seed": 11
  })");
  auto gen = run_cli("gen --config " + (dir / "gen.json").string() + " --out " +
                     (dir / "run").string());
  CHECK(gen.exit_code == 0);
  CHECK(fs::exists(dir / "run" / "population.json"));
  CHECK(fs::exists(dir / "run" / "traces.csv"));
  CHECK(fs::exists(dir / "run" / "traces.bin"));

  // rerunning without --force refuses to overwrite
  auto again = run_cli("gen --config " + (dir / "gen.json").string() +
                       " --out " + (dir / "run").string());
  CHECK(again.exit_code == 2);
  auto forced = run_cli("gen --config " + (dir / "gen.json").string() +
                        " --out " + (dir / "run").string() + " --force");
  CHECK(forced.exit_code == 0);

  write_file(dir / "mech.json", R"({
    "schema_version": 1, "scheme": "independent", "a_n": 0.01, "seed": 13
  })");
  auto mech = run_cli("mech --config " + (dir / "mech.json").string() +
                      " --in " + (dir / "run").string() + " --out " +
                      (dir / "run").string());
  CHECK(mech.exit_code == 0);
  CHECK(fs::exists(dir / "run" / "observed.csv"));
  CHECK(fs::exists(dir / "run" / "truth.json"));
  const auto truth = json::parse(read_file(dir / "run" / "truth.json"));
  for (const char* key : {"pi", "r", "a_n", "scheme"}) CHECK(truth.contains(key));

  write_file(dir / "attack.json", R"({"strategy": "nearest", "target_user": 0})");
  auto attack = run_cli("attack --config " + (dir / "attack.json").string() +
                        " --in " + (dir / "run").string() + " --out " +
                        (dir / "out").string() + " --truth " +
                        (dir / "run" / "truth.json").string());
  CHECK(attack.exit_code == 0);
  const auto outcome = json::parse(read_file(dir / "out" / "attack.json"));
  for (const char* key :
       {"edges", "group", "ident", "success", "sample_errors", "m"}) {
    CHECK(outcome.contains(key));
  }
  CHECK(outcome.at("m").get<int>() == 8000);
}

TEST_CASE("sweep writes the CSV contract and is seed-deterministic") {
  const fs::path dir = work_dir() / "sweep";
  fs::create_directories(dir);
  write_file(dir / "spec.json", R"({
    "schema_version": 1,
    "model": "two-state", "n": 16, "s": 2, "epsilon": 0.3,
    "coupling": 0.6, "mechanism": "none",
    "m_grid": [500, 2000], "trials": 10, "seed": 5
  })");
  auto first = run_cli("sweep --config " + (dir / "spec.json").string() +
                       " --out " + (dir / "a").string());
  CHECK(first.exit_code == 0);
  const auto csv = read_file(dir / "a" / "sweep.csv");
  CHECK(csv.rfind("model,n,m,s,r,a_n,coupling,trials,success_rate,pe_mean,"
                  "pe_lo,pe_hi,edge_precision,edge_recall,mean_noise,seconds",
                  0) == 0);
  auto second = run_cli("sweep --config " + (dir / "spec.json").string() +
                        " --out " + (dir / "b").string());
  CHECK(second.exit_code == 0);
  CHECK(without_seconds(csv) ==
        without_seconds(read_file(dir / "b" / "sweep.csv")));
  CHECK(fs::exists(dir / "a" / "sweep.json"));
}

TEST_CASE("oracle preset prints the half-bit pair value") {
  auto result = run_cli("oracle --preset pair-mi-n2m1");
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("0.500000000") != std::string::npos);
}

TEST_CASE("noise-audit reports the pooled noise level") {
  const fs::path dir = work_dir() / "audit";
  fs::create_directories(dir);
  write_file(dir / "na.json",
             R"({"n": 50, "m": 20000, "a_n": 0.1, "seed": 9})");
  auto result = run_cli("noise-audit --config " + (dir / "na.json").string() +
                        " --out " + (dir / "out").string());
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("pooled A_m") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "noise.csv"));
}

TEST_CASE("missing and malformed configs exit with code 2") {
  auto missing = run_cli("sweep --config /nonexistent.json --out " +
                         (work_dir() / "x").string());
  CHECK(missing.exit_code == 2);

  const fs::path bad = work_dir() / "bad.json";
  write_file(bad, "{\n  \"model\": \"two-state\",\n  oops\n}");
  auto malformed = run_cli("sweep --config " + bad.string() + " --out " +
                           (work_dir() / "y").string());
  CHECK(malformed.exit_code == 2);
  // diagnostics carry line/column
  CHECK(malformed.err.find(":3:") != std::string::npos);
}
