#include "hetstream_cli/csv_batch.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <vector>

#include "hetstream/error.hpp"

namespace hetstream::cli {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  cells.push_back(cell);
  for (auto& s : cells) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return cells;
}

std::string where(const std::string& source, long line) {
  return source + ":" + std::to_string(line) + ": ";
}

}  // namespace

RawBatch read_batch_csv(std::istream& in, const StreamSchema& schema, const std::string& source) {
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw FormatError(source + ": empty file, expected a header row");
  ++line_no;
  const auto header = split(line);
  if (header.size() < 2 || header.back() != "y") {
    throw FormatError(where(source, line_no) + "header must end with column 'y'");
  }
  const int cols = static_cast<int>(header.size()) - 1;
  int groups = 0;
  if (cols == schema.p) {
    groups = 1;
  } else if (schema.q > 0 && cols == schema.p + schema.q) {
    groups = 2;
  } else if (schema.r > 0 && cols == schema.p + schema.q + schema.r) {
    groups = 3;
  } else {
    throw FormatError(where(source, line_no) + "header has " + std::to_string(cols) +
                      " covariate columns; the stream expects " + std::to_string(schema.p) +
                      ", " + std::to_string(schema.p + schema.q) + " or " +
                      std::to_string(schema.p + schema.q + schema.r));
  }
  const StreamSchema named = schema.names.empty()
                                 ? StreamSchema::with_default_names(schema.p, schema.q, schema.r)
                                 : schema;
  for (int i = 0; i < cols; ++i) {
    if (header[i] != named.names[i]) {
      throw FormatError(where(source, line_no) + "column " + std::to_string(i + 1) + " is '" +
                        header[i] + "', expected '" + named.names[i] + "'");
    }
  }

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw FormatError(where(source, line_no) + "expected " + std::to_string(header.size()) +
                        " cells, got " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& s = cells[c];
      char* end = nullptr;
      errno = 0;
      const double v = s.empty() ? NAN : std::strtod(s.c_str(), &end);
      if (s.empty() || errno == ERANGE || *end != '\0' || !std::isfinite(v)) {
        throw FormatError(where(source, line_no) + "bad value '" + s + "' in column '" +
                          header[c] + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(source + ": no observations after the header");

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Mat u(n, cols);
  Vec y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < cols; ++c) u(i, c) = rows[i][c];
    y(i) = rows[i][cols];
  }
  RawBatch b;
  b.x = u.leftCols(schema.p);
  if (groups >= 2) b.z = u.middleCols(schema.p, schema.q);
  if (groups == 3) b.w = u.rightCols(schema.r);
  b.y = std::move(y);
  return b;
}

RawBatch read_batch_file(const std::string& path, const StreamSchema& schema) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open batch file '" + path + "'");
  return read_batch_csv(in, schema, path);
}

int count_x_columns(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) throw FormatError("cannot read header of '" + path + "'");
  int p = 0;
  for (const auto& name : split(line)) {
    if (name.size() > 1 && name[0] == 'x') ++p;
  }
  if (p == 0) throw FormatError(path + ":1: header names no x columns");
  return p;
}

void write_batch_csv(std::ostream& out, const RawBatch& batch, const StreamSchema& schema) {
  const StreamSchema named = schema.names.empty()
                                 ? StreamSchema::with_default_names(schema.p, schema.q, schema.r)
                                 : schema;
  const int cols = static_cast<int>(batch.x.cols() + batch.z.cols() + batch.w.cols());
  for (int c = 0; c < cols; ++c) out << named.names[c] << ',';
  out << "y\n";
  char buf[32];
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    auto cell = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    };
    for (Eigen::Index c = 0; c < batch.x.cols(); ++c) cell(batch.x(i, c));
    for (Eigen::Index c = 0; c < batch.z.cols(); ++c) cell(batch.z(i, c));
    for (Eigen::Index c = 0; c < batch.w.cols(); ++c) cell(batch.w(i, c));
    std::snprintf(buf, sizeof buf, "%.17g", batch.y(i));
    out << buf << '\n';
  }
}

}  // namespace hetstream::cli
