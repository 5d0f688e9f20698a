#include "matrix_io.hpp"

#include "errors.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

namespace covdl {

namespace {

static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(T); ++b)
    out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b)
    bits |= static_cast<U>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  return std::bit_cast<T>(bits);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io, "write failed for " + path);
}

}  // namespace

std::string encode_cvdl(const Eigen::MatrixXd& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max())
    fail(ErrorCode::dimension, "matrix too large for the CVDL container");
  std::string out;
  out.reserve(kMatrixHeaderBytes + 8 * static_cast<std::size_t>(m.size()));
  out.append(kMatrixMagic, 4);
  put_le<std::uint16_t>(out, kMatrixVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_le<double>(out, m(i, j));
  return out;
}

Eigen::MatrixXd decode_cvdl(const std::string& bytes) {
  if (bytes.size() < kMatrixHeaderBytes || std::memcmp(bytes.data(), kMatrixMagic, 4) != 0)
    fail(ErrorCode::io, "not a CVDL matrix file (bad magic)");
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kMatrixVersion)
    fail(ErrorCode::io, "unsupported CVDL version " + std::to_string(version));
  const auto rows = get_le<std::uint32_t>(bytes, 6);
  const auto cols = get_le<std::uint32_t>(bytes, 10);
  const std::size_t want = kMatrixHeaderBytes + 8ull * rows * cols;
  if (bytes.size() != want) fail(ErrorCode::io, "CVDL payload size does not match header");
  Eigen::MatrixXd m(rows, cols);
  std::size_t off = kMatrixHeaderBytes;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j, off += 8) m(i, j) = get_le<double>(bytes, off);
  return m;
}

void save_cvdl(const std::string& path, const Eigen::MatrixXd& m) {
  write_file(path, encode_cvdl(m));
}

Eigen::MatrixXd load_cvdl(const std::string& path) { return decode_cvdl(read_file(path)); }

void save_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::string out;
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out.push_back(',');
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      out += buf;
    }
    out.push_back('\n');
  }
  write_file(path, out);
}

Eigen::MatrixXd load_csv(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<double> values;
  Eigen::Index rows = 0, cols = -1;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Eigen::Index count = 0;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t end = line.find(',', pos);
      if (end == std::string::npos) end = line.size();
      std::string field = line.substr(pos, end - pos);
      const auto first = field.find_first_not_of(" \t");
      const auto last = field.find_last_not_of(" \t");
      if (first == std::string::npos) fail(ErrorCode::io, path + ": empty CSV field");
      field = field.substr(first, last - first + 1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size())
        fail(ErrorCode::io, path + ": cannot parse '" + field + "' as a number");
      values.push_back(v);
      ++count;
      pos = end + 1;
    }
    if (cols < 0) cols = count;
    if (count != cols) fail(ErrorCode::io, path + ": ragged CSV rows");
    ++rows;
  }
  if (cols < 0) cols = 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  return m;
}

void save_matrix(const std::string& path, const Eigen::MatrixXd& m) {
  if (ends_with(path, ".csv")) {
    save_csv(path, m);
  } else {
    save_cvdl(path, m);
  }
}

Eigen::MatrixXd load_matrix(const std::string& path) {
  return ends_with(path, ".csv") ? load_csv(path) : load_cvdl(path);
}

}  // namespace covdl
