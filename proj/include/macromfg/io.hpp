#pragma once

#include "macromfg/linalg.hpp"
#include "macromfg/noise.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace mfg {

/// Malformed or mismatched file. `row` is the 1-based line number when known.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg, std::size_t row = 0)
      : std::runtime_error(msg), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Column layout of a CSV file. The version is bumped whenever the
/// columns or their meaning change.
struct CsvSchema {
  std::string name;
  int version = 1;
  std::vector<std::string> columns;
  std::vector<std::string> units;  // one per column

  std::size_t arity() const { return columns.size(); }

  /// `# schema=NAME;version=V;units=u1,u2,...`
  std::string header() const {
    std::string s = "# schema=" + name + ";version=" + std::to_string(version) + ";units=";
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (i) s += ',';
      s += units[i];
    }
    return s;
  }

  std::string label_line() const {
    std::string s;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) s += ',';
      s += columns[i];
    }
    return s;
  }
};

/// Shortest representation that parses back to the same double. Independent
/// of the global locale.
inline std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::size_t row) {
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError("row " + std::to_string(row) + ": malformed number '" + std::string(s) + "'", row);
  }
  return x;
}

/// Writes the rows of `table` to a stream under `schema`.
inline void write_csv(std::ostream& out, const Matrix& table, const CsvSchema& schema) {
  if (static_cast<std::size_t>(table.cols()) != schema.arity()) {
    throw IoError("schema '" + schema.name + "' has " + std::to_string(schema.arity()) +
                  " columns but the series has " + std::to_string(table.cols()));
  }
  std::string line;
  out << schema.header() << '\n' << schema.label_line() << '\n';
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
      if (j) line += ',';
      line += format_double(table(i, j));
    }
    out << line << '\n';
  }
}

inline void write_csv(const std::string& path, const Matrix& table, const CsvSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(out, table, schema);
  if (!out) throw IoError("write to '" + path + "' failed");
}

/// Reads a table written under `schema`; rejects a different schema name or
/// version, a different label line, and rows of the wrong arity.
inline Matrix read_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t row = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line.rfind("# schema=", 0) != 0) {
    throw IoError("row 1: missing '# schema=' header line", 1);
  }
  const std::string expect_prefix =
      "# schema=" + schema.name + ";version=" + std::to_string(schema.version) + ";";
  if (line.rfind(expect_prefix, 0) != 0) {
    throw IoError("row 1: expected schema '" + schema.name + "' version " +
                      std::to_string(schema.version) + ", found '" + line + "'",
                  1);
  }
  if (!next() || line != schema.label_line()) {
    throw IoError("row 2: column labels do not match schema '" + schema.name + "'", 2);
  }
  std::vector<double> values;
  std::size_t rows = 0;
  while (next()) {
    if (line.empty()) continue;
    std::size_t fields = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view field(line.data() + start,
                                   (comma == std::string::npos ? line.size() : comma) - start);
      values.push_back(parse_double(field, row));
      ++fields;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields != schema.arity()) {
      throw IoError("row " + std::to_string(row) + ": expected " + std::to_string(schema.arity()) +
                        " fields, found " + std::to_string(fields),
                    row);
    }
    ++rows;
  }
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(schema.arity()));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < schema.arity(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * schema.arity() + j];
    }
  }
  return out;
}

inline Matrix read_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_csv(in, schema);
}

/// max |a - b| over equally shaped tables; +inf when shapes differ.
inline double max_table_difference(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Binary noise dump: "MFGNOISE", u32 version, u64 steps, u64 n_series, then
// n_series * steps little-endian doubles, series-major with dW first.

inline constexpr char kNoiseMagic[8] = {'M', 'F', 'G', 'N', 'O', 'I', 'S', 'E'};
inline constexpr std::uint32_t kNoiseVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw IoError("noise dump truncated");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

/// Series of a noise dump: series[0] is dW, the rest are the dB series.
struct NoiseDump {
  std::uint32_t version = kNoiseVersion;
  std::vector<std::vector<double>> series;
  std::size_t steps() const { return series.empty() ? 0 : series.front().size(); }
};

inline void write_noise(std::ostream& out, const NoiseBundle& bundle) {
  out.write(kNoiseMagic, sizeof kNoiseMagic);
  detail::put_le<std::uint32_t>(out, kNoiseVersion);
  detail::put_le<std::uint64_t>(out, bundle.steps());
  detail::put_le<std::uint64_t>(out, 1 + bundle.series());
  for (double x : bundle.dW) detail::put_le(out, x);
  for (const auto& s : bundle.dB) {
    for (double x : s) detail::put_le(out, x);
  }
}

inline void write_noise(const std::string& path, const NoiseBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_noise(out, bundle);
}

inline NoiseDump read_noise(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kNoiseMagic, sizeof magic) != 0) {
    throw IoError("not a noise dump (bad magic)");
  }
  NoiseDump dump;
  dump.version = detail::get_le<std::uint32_t>(in);
  if (dump.version != kNoiseVersion) {
    throw IoError("unsupported noise dump version " + std::to_string(dump.version));
  }
  const auto steps = detail::get_le<std::uint64_t>(in);
  const auto n = detail::get_le<std::uint64_t>(in);
  dump.series.assign(n, std::vector<double>(steps));
  for (auto& s : dump.series) {
    for (auto& x : s) x = detail::get_le<double>(in);
  }
  return dump;
}

inline NoiseDump read_noise(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_noise(in);
}

}  // namespace mfg
