#include "certibias/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace certibias {

namespace {

double parse_double(const std::string& token, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    std::ostringstream msg;
    msg << path.string() << ":" << line << ": not a decimal number: '" << token << "'";
    throw std::runtime_error(msg.str());
  }
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return in;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("float formatting failed");
  return std::string(buf, ptr);
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  auto out = open_out(path);
  std::string line;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) line += ',';
      line += format_double(m(r, c));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  Eigen::Index cols = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string token = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      row.push_back(parse_double(token, path, lineno));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cols < 0) {
      cols = static_cast<Eigen::Index>(row.size());
    } else if (static_cast<Eigen::Index>(row.size()) != cols) {
      std::ostringstream msg;
      msg << path.string() << ":" << lineno << ": expected " << cols << " columns, got " << row.size();
      throw std::runtime_error(msg.str());
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols < 0 ? 0 : cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

void write_int_csv(const std::filesystem::path& path, const std::vector<int>& values) {
  auto out = open_out(path);
  for (const int v : values) out << v << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<int> read_int_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<int> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int v = 0;
    const char* first = line.data();
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
      std::ostringstream msg;
      msg << path.string() << ":" << lineno << ": not an integer: '" << line << "'";
      throw std::runtime_error(msg.str());
    }
    values.push_back(v);
  }
  return values;
}

}  // namespace certibias
