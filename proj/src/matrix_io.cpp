#include "ss3/matrix_io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ss3/errors.hpp"
#include "ss3/text.hpp"

namespace ss3 {

namespace {

constexpr char kMagic[5] = {'S', 'S', 'S', 'M', '1'};

static_assert(std::endian::native == std::endian::little, "binary matrix format assumes a little-endian host");

}  // namespace

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open matrix file: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    std::vector<double> row;
    for (std::string_view field : split(body, ',')) row.push_back(parse_double(field, path.string(), lineno));
    if (!rows.empty() && row.size() != rows.front().size())
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInput("empty matrix file: " + path.string());
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write matrix file: " + path.string());
  std::string line;
  for (Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) line += ',';
      line += format_double(m(i, j));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw InvalidInput("failed writing matrix file: " + path.string());
}

Matrix read_matrix_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open matrix file: " + path.string());
  char magic[5];
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  in.read(magic, 5);
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || std::memcmp(magic, kMagic, 5) != 0) throw InvalidInput("bad binary matrix header: " + path.string());
  if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20))
    throw InvalidInput("implausible binary matrix shape: " + path.string());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> data(rows, cols);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(rows * cols * sizeof(double)));
  if (!in) throw InvalidInput("truncated binary matrix: " + path.string());
  return data;
}

void write_matrix_binary(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write matrix file: " + path.string());
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write(kMagic, 5);
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> data = m;
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(rows * cols * sizeof(double)));
  if (!out) throw InvalidInput("failed writing matrix file: " + path.string());
}

Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open matrix file: " + path.string());
  char magic[5] = {};
  in.read(magic, 5);
  if (in.gcount() == 5 && std::memcmp(magic, kMagic, 5) == 0) return read_matrix_binary(path);
  return read_matrix_csv(path);
}

}  // namespace ss3
