#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "sctsim/persona.hpp"
#include "sctsim/text.hpp"

namespace sctsim {

/// One (agent, iteration, round) observation. `x` follows kDesignOrder.
struct ObservationRow {
  std::string agent;
  int iteration = 0;
  int round = 0;
  double C = 0.0;
  double reliability = 0.0;
  std::array<double, kConstructCount> x{};
  double y = 0.0;

  double construct(Construct c) const {
    for (std::size_t k = 0; k < kConstructCount; ++k)
      if (kDesignOrder[k] == c) return x[k];
    return 0.0;
  }

  bool operator==(const ObservationRow&) const = default;
};

using ObservationTable = std::vector<ObservationRow>;

inline constexpr std::string_view kVanillaAgent = "vanilla";

inline void canonical_sort(ObservationTable& t) {
  std::sort(t.begin(), t.end(), [](const ObservationRow& a, const ObservationRow& b) {
    return std::tie(a.agent, a.iteration, a.round) < std::tie(b.agent, b.iteration, b.round);
  });
}

inline std::vector<std::string> observation_columns() {
  std::vector<std::string> cols = {"agent", "iteration", "round", "C", "reliability"};
  for (Construct c : kDesignOrder) cols.emplace_back(to_string(c));
  cols.emplace_back("y");
  return cols;
}

class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string column, const std::string& msg)
      : std::runtime_error(msg), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

inline void write_observations(std::ostream& out, const ObservationTable& t) {
  const auto cols = observation_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : t) {
    out << r.agent << ',' << r.iteration << ',' << r.round << ',' << text::format_double(r.C) << ','
        << text::format_double(r.reliability);
    for (double v : r.x) out << ',' << text::format_double(v);
    out << ',' << text::format_double(r.y) << '\n';
  }
}

inline void write_observations(const std::filesystem::path& path, const ObservationTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_observations(out, t);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

template <typename T>
T parse_field(const std::string& s, const std::string& column, std::size_t line) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw SchemaError(column, "line " + std::to_string(line) + ": column '" + column +
                                  "' has non-numeric value '" + s + "'");
  return v;
}

}  // namespace detail

inline ObservationTable read_observations(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("", "observation file is empty");
  const auto header = detail::split_csv_line(line);
  const auto cols = observation_columns();
  std::vector<std::size_t> pos(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    auto it = std::find(header.begin(), header.end(), cols[i]);
    if (it == header.end()) throw SchemaError(cols[i], "observation file lacks column '" + cols[i] + "'");
    pos[i] = static_cast<std::size_t>(it - header.begin());
  }
  ObservationTable t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size())
      throw SchemaError("", "line " + std::to_string(lineno) + ": expected " +
                                std::to_string(header.size()) + " fields, got " +
                                std::to_string(f.size()));
    ObservationRow r;
    r.agent = f[pos[0]];
    r.iteration = detail::parse_field<int>(f[pos[1]], cols[1], lineno);
    r.round = detail::parse_field<int>(f[pos[2]], cols[2], lineno);
    r.C = detail::parse_field<double>(f[pos[3]], cols[3], lineno);
    r.reliability = detail::parse_field<double>(f[pos[4]], cols[4], lineno);
    for (std::size_t k = 0; k < kConstructCount; ++k)
      r.x[k] = detail::parse_field<double>(f[pos[5 + k]], cols[5 + k], lineno);
    r.y = detail::parse_field<double>(f[pos[11]], cols[11], lineno);
    t.push_back(std::move(r));
  }
  return t;
}

inline ObservationTable read_observations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_observations(in);
}

}  // namespace sctsim
