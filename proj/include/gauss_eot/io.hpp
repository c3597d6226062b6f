#ifndef GAUSS_EOT_IO_HPP
#define GAUSS_EOT_IO_HPP

// JSON input files and the versioned CSV layout.
//
//   Gaussian:    {"mean": [..], "cov": [[..], ..]}
//   Population:  {"members": [Gaussian, ..], "weights": [..]}   (weights optional)

#include <array>
#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <type_traits>
#include <variant>
#include <vector>

#include "json.hpp"

#include "gauss_eot/barycenter.hpp"

namespace gauss_eot {

using Json = nlohmann::json;

inline constexpr const char* kCsvVersionLine = "# gauss-eot v1";

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double x) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc()) throw InvalidArgument("format_double: conversion failed");
  return std::string(buf.data(), end);
}

inline double parse_double(const std::string& s, const std::string& where) {
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [end, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || end != last) {
    throw ParseError(where + ": not a number: '" + s + "'");
  }
  return value;
}

namespace detail {

inline double json_number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(where + ": non-finite value");
  return v;
}

inline const Json& json_field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + ": missing field '" + key + "'");
  return *it;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  try {
    return Json::parse(in);
  } catch (const Json::exception& ex) {
    throw ParseError(path + ": " + ex.what());
  }
}

}  // namespace detail

/// Parses a Gaussian object; `where` prefixes error messages (file and field path).
inline Gaussian gaussian_from_json(const Json& j, const std::string& where) {
  const Json& jm = detail::json_field(j, "mean", where);
  const Json& jc = detail::json_field(j, "cov", where);
  if (!jm.is_array() || jm.empty()) throw ParseError(where + ".mean: expected a non-empty array");
  const Index n = static_cast<Index>(jm.size());
  Vector mean(n);
  for (Index i = 0; i < n; ++i) {
    mean(i) = detail::json_number(jm[static_cast<std::size_t>(i)],
                                  where + ".mean[" + std::to_string(i) + "]");
  }
  if (!jc.is_array() || static_cast<Index>(jc.size()) != n) {
    throw ParseError(where + ".cov: expected " + std::to_string(n) + " rows");
  }
  Matrix cov(n, n);
  for (Index r = 0; r < n; ++r) {
    const Json& row = jc[static_cast<std::size_t>(r)];
    const std::string rw = where + ".cov[" + std::to_string(r) + "]";
    if (!row.is_array() || static_cast<Index>(row.size()) != n) {
      throw ParseError(rw + ": expected " + std::to_string(n) + " entries");
    }
    for (Index c = 0; c < n; ++c) {
      cov(r, c) = detail::json_number(row[static_cast<std::size_t>(c)],
                                      rw + "[" + std::to_string(c) + "]");
    }
  }
  if (!cov.isApprox(cov.transpose(), 1e-12)) throw ParseError(where + ".cov: not symmetric");
  try {
    return Gaussian(mean, cov);
  } catch (const DegenerateMatrix& ex) {
    throw ParseError(where + ".cov: " + ex.what());
  }
}

inline Json gaussian_to_json(const Gaussian& g) {
  Json mean = Json::array();
  for (Index i = 0; i < g.dim(); ++i) mean.push_back(g.mean()(i));
  Json cov = Json::array();
  for (Index r = 0; r < g.dim(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < g.dim(); ++c) row.push_back(g.cov().matrix()(r, c));
    cov.push_back(row);
  }
  return Json{{"mean", mean}, {"cov", cov}};
}

inline Gaussian load_gaussian(const std::string& path) {
  return gaussian_from_json(detail::read_json_file(path), path);
}

inline void save_gaussian(const std::string& path, const Gaussian& g) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot write file");
  out << gaussian_to_json(g).dump(2) << '\n';
}

inline WeightedPopulation population_from_json(const Json& j, const std::string& where) {
  const Json& jm = detail::json_field(j, "members", where);
  if (!jm.is_array() || jm.empty()) throw ParseError(where + ".members: expected a non-empty array");
  std::vector<Gaussian> members;
  for (std::size_t i = 0; i < jm.size(); ++i) {
    members.push_back(gaussian_from_json(jm[i], where + ".members[" + std::to_string(i) + "]"));
    if (members.back().dim() != members.front().dim()) {
      throw ParseError(where + ".members[" + std::to_string(i) + "]: dimension differs");
    }
  }
  std::vector<double> weights(members.size(), 1.0);
  if (j.contains("weights")) {
    const Json& jw = j["weights"];
    if (!jw.is_array() || jw.size() != members.size()) {
      throw ParseError(where + ".weights: expected one weight per member");
    }
    for (std::size_t i = 0; i < jw.size(); ++i) {
      weights[i] = detail::json_number(jw[i], where + ".weights[" + std::to_string(i) + "]");
    }
  }
  try {
    return WeightedPopulation(std::move(members), std::move(weights));
  } catch (const Error& ex) {
    throw ParseError(where + ".weights: " + ex.what());
  }
}

inline WeightedPopulation load_population(const std::string& path) {
  return population_from_json(detail::read_json_file(path), path);
}

/// Column names mean_i, cov_r_c (row-major) for dimension n.
inline std::vector<std::string> gaussian_columns(Index n) {
  std::vector<std::string> cols;
  for (Index i = 0; i < n; ++i) cols.push_back("mean_" + std::to_string(i));
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) cols.push_back("cov_" + std::to_string(r) + "_" + std::to_string(c));
  }
  return cols;
}

/// Parses mean and row-major covariance from fields[offset, offset + n + n^2).
inline Gaussian gaussian_from_fields(const std::vector<std::string>& fields, std::size_t offset,
                                     Index n) {
  const std::size_t need = offset + static_cast<std::size_t>(n + n * n);
  if (fields.size() < need) throw ParseError("csv row: too few Gaussian fields");
  Vector mean(n);
  Matrix cov(n, n);
  std::size_t k = offset;
  for (Index i = 0; i < n; ++i) mean(i) = parse_double(fields[k++], "csv mean");
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) cov(r, c) = parse_double(fields[k++], "csv cov");
  }
  return Gaussian(mean, cov);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Output table shared by the CSV and JSON emitters. Cells hold numbers,
/// integers or text; NaN marks a missing number.
class Table {
 public:
  using Cell = std::variant<double, long long, std::string>;

  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_comment(std::string text) { comments_.push_back(std::move(text)); }

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns_.size()) {
      throw InvalidArgument("Table: row has " + std::to_string(row.size()) + " cells, expected " +
                            std::to_string(columns_.size()));
    }
    rows_.push_back(std::move(row));
  }

  const std::vector<std::string>& columns() const noexcept { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const noexcept { return rows_; }

  void write_csv(std::ostream& out) const {
    out << kCsvVersionLine << '\n';
    for (const std::string& c : comments_) out << "# " << c << '\n';
    write_line(out, columns_);
    for (const auto& row : rows_) {
      std::vector<std::string> fields;
      for (const Cell& cell : row) fields.push_back(to_text(cell));
      write_line(out, fields);
    }
  }

  Json to_json() const {
    Json rows = Json::array();
    for (const auto& row : rows_) {
      Json obj = Json::object();
      for (std::size_t i = 0; i < row.size(); ++i) {
        std::visit(
            [&](const auto& v) {
              using T = std::decay_t<decltype(v)>;
              if constexpr (std::is_same_v<T, double>) {
                obj[columns_[i]] = std::isfinite(v) ? Json(v) : Json(nullptr);
              } else {
                obj[columns_[i]] = v;
              }
            },
            row[i]);
      }
      rows.push_back(std::move(obj));
    }
    return Json{{"format", "gauss-eot v1"},
                {"comments", comments_},
                {"columns", columns_},
                {"rows", std::move(rows)}};
  }

  void write_json(std::ostream& out) const { out << to_json().dump(2) << '\n'; }

 private:
  static std::string to_text(const Cell& cell) {
    if (const double* d = std::get_if<double>(&cell)) {
      return std::isnan(*d) ? std::string() : format_double(*d);
    }
    if (const long long* i = std::get_if<long long>(&cell)) return std::to_string(*i);
    return std::get<std::string>(cell);
  }

  static void write_line(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out << ',';
      out << fields[i];
    }
    out << '\n';
  }

  std::vector<std::string> columns_;
  std::vector<std::string> comments_;
  std::vector<std::vector<Cell>> rows_;
};

/// mean_i then row-major cov_rc cells of g.
inline void append_gaussian(std::vector<Table::Cell>& row, const Gaussian& g) {
  for (Index i = 0; i < g.dim(); ++i) row.emplace_back(g.mean()(i));
  for (Index r = 0; r < g.dim(); ++r) {
    for (Index c = 0; c < g.dim(); ++c) row.emplace_back(g.cov().matrix()(r, c));
  }
}

/// Placeholder cells where a Gaussian could not be computed.
inline void append_missing_gaussian(std::vector<Table::Cell>& row, Index n) {
  for (Index k = 0; k < n + n * n; ++k) row.emplace_back(std::nan(""));
}

}  // namespace gauss_eot

#endif  // GAUSS_EOT_IO_HPP
