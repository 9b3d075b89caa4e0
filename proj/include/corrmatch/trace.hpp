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

#ifndef CORRMATCH_TRACE_HPP
#define CORRMATCH_TRACE_HPP

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "corrmatch/errors.hpp"

namespace corrmatch {

/// Pipeline stage of a trace matrix. Legal transitions are
/// true_data -> obfuscated -> anonymized and true_data -> anonymized.
enum class stage : std::uint8_t {
  true_data = 0,
  obfuscated = 1,
  anonymized = 2,
};

inline std::string to_string(stage s) {
  switch (s) {
    case stage::true_data: return "true";
    case stage::obfuscated: return "obfuscated";
    case stage::anonymized: return "anonymized";
  }
  return "?";
}

/// m x n matrix of data symbols: row k is one time index, column u one user
/// (or pseudonym once anonymized). Symbols lie in {0 .. r-1}.
struct trace_matrix {
  std::uint32_t m = 0;
  std::uint32_t n = 0;
  std::uint8_t r = 2;
  stage tag = stage::true_data;
  std::vector<std::uint8_t> data;  // row-major, size m * n

  trace_matrix() = default;
  trace_matrix(std::uint32_t m_, std::uint32_t n_, std::uint8_t r_, stage s)
      : m(m_), n(n_), r(r_), tag(s),
        data(static_cast<std::size_t>(m_) * n_, 0) {}

  std::uint8_t& at(std::uint32_t k, std::uint32_t u) {
    return data[static_cast<std::size_t>(k) * n + u];
  }
  std::uint8_t at(std::uint32_t k, std::uint32_t u) const {
    return data[static_cast<std::size_t>(k) * n + u];
  }

  /// One user's column as a contiguous vector.
  std::vector<std::uint8_t> column(std::uint32_t u) const {
    std::vector<std::uint8_t> col(m);
    for (std::uint32_t k = 0; k < m; ++k) col[k] = at(k, u);
    return col;
  }

  void write_csv(std::ostream& os) const {
    os << "k";
    for (std::uint32_t u = 0; u < n; ++u) os << ",u" << u;
    os << "\n";
    for (std::uint32_t k = 0; k < m; ++k) {
      os << k;
      for (std::uint32_t u = 0; u < n; ++u)
        os << ',' << static_cast<int>(at(k, u));
      os << "\n";
    }
  }

  static trace_matrix read_csv(std::istream& is, std::uint8_t r,
                               stage tag_hint) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("k,", 0) != 0)
      throw config_error("trace CSV: missing header row");
    std::uint32_t n = 0;
    for (char c : line) n += (c == ',');
    std::vector<std::uint8_t> cells;
    std::uint32_t rows = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string cell;
      std::getline(ls, cell, ',');  // time index, ignored
      std::uint32_t got = 0;
      while (std::getline(ls, cell, ',')) {
        const int v = std::stoi(cell);
        if (v < 0 || v >= r) throw config_error("trace CSV: symbol out of range");
        cells.push_back(static_cast<std::uint8_t>(v));
        ++got;
      }
      if (got != n) throw config_error("trace CSV: ragged row");
      ++rows;
    }
    trace_matrix t(rows, n, r, tag_hint);
    t.data = std::move(cells);
    return t;
  }

  /// Compact binary layout: magic "CMTR", u32 m, u32 n, u8 r, u8 stage,
  /// row-major symbol bytes. Integers little-endian.
  void write_binary(std::ostream& os) const {
    os.write("CMTR", 4);
    auto put_u32 = [&](std::uint32_t v) {
      char b[4] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8 & 0xff),
                   static_cast<char>(v >> 16 & 0xff),
                   static_cast<char>(v >> 24 & 0xff)};
      os.write(b, 4);
    };
    put_u32(m);
    put_u32(n);
    os.put(static_cast<char>(r));
    os.put(static_cast<char>(tag));
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size()));
  }

  static trace_matrix read_binary(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "CMTR")
      throw config_error("trace binary: bad magic");
    auto get_u32 = [&]() {
      unsigned char b[4];
      is.read(reinterpret_cast<char*>(b), 4);
      return static_cast<std::uint32_t>(b[0]) |
             static_cast<std::uint32_t>(b[1]) << 8 |
             static_cast<std::uint32_t>(b[2]) << 16 |
             static_cast<std::uint32_t>(b[3]) << 24;
    };
    const std::uint32_t m = get_u32();
    const std::uint32_t n = get_u32();
    const int r = is.get();
    const int s = is.get();
    if (!is || r < 2 || s < 0 || s > 2)
      throw config_error("trace binary: bad header");
    trace_matrix t(m, n, static_cast<std::uint8_t>(r), static_cast<stage>(s));
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size()));
    if (!is) throw config_error("trace binary: truncated payload");
    return t;
  }
};

}  // namespace corrmatch

#endif  // CORRMATCH_TRACE_HPP
