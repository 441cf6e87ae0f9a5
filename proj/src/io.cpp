#include "bregopt/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace bregopt {

ParseError::ParseError(const std::string& what, std::size_t line)
    : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

MatrixFormat parse_matrix_format(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "csv") return MatrixFormat::Csv;
  if (s == "mm" || s == "mtx" || s == "matrixmarket" || s == "matrix_market") return MatrixFormat::MatrixMarketArray;
  throw std::invalid_argument("unknown matrix format: " + std::string(name));
}

MatrixFormat format_from_extension(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  return (ext == ".mtx" || ext == ".mm") ? MatrixFormat::MatrixMarketArray : MatrixFormat::Csv;
}

std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view token, std::size_t line) {
  token = trim(token);
  if (token.empty()) throw ParseError("empty numeric field", line);
  // strtod accepts forms from_chars may not (e.g. leading '+')
  std::string buf(token);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size()) throw ParseError("cannot parse number '" + buf + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite entry '" + buf + "'", line);
  return v;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      if (pos < text.size()) lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

DenseMatrix parse_csv(std::string_view text) {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  const auto lines = split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string_view line = trim(lines[li]);
    if (line.empty()) continue;
    std::size_t count = 0;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      values.push_back(parse_number(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start), li + 1));
      ++count;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (rows == 0) cols = count;
    else if (count != cols)
      throw ParseError("expected " + std::to_string(cols) + " fields, found " + std::to_string(count), li + 1);
    ++rows;
  }
  if (rows == 0) throw ParseError("no data rows", 0);
  return DenseMatrix(rows, cols, std::move(values));
}

DenseMatrix parse_matrix_market(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError("empty file", 0);
  std::string header(trim(lines[0]));
  std::transform(header.begin(), header.end(), header.begin(), [](unsigned char c) { return std::tolower(c); });
  std::istringstream hs(header);
  std::string banner, object, layout, field, symmetry;
  hs >> banner >> object >> layout >> field >> symmetry;
  if (banner != "%%matrixmarket") throw ParseError("missing %%MatrixMarket banner", 1);
  if (object != "matrix" || layout != "array") throw ParseError("only 'matrix array' layout is supported", 1);
  if (field != "real" && field != "double" && field != "integer") throw ParseError("unsupported field '" + field + "'", 1);
  if (!symmetry.empty() && symmetry != "general") throw ParseError("only 'general' symmetry is supported", 1);

  std::size_t li = 1;
  while (li < lines.size() && (trim(lines[li]).empty() || trim(lines[li]).front() == '%')) ++li;
  if (li >= lines.size()) throw ParseError("missing size line", li);
  std::size_t rows = 0, cols = 0;
  {
    std::istringstream ss{std::string(trim(lines[li]))};
    std::string extra;
    if (!(ss >> rows >> cols) || (ss >> extra)) throw ParseError("size line must be 'rows cols'", li + 1);
  }
  const std::size_t expected = rows * cols;
  std::vector<double> col_major;
  col_major.reserve(expected);
  for (++li; li < lines.size(); ++li) {
    const std::string_view line = trim(lines[li]);
    if (line.empty() || line.front() == '%') continue;
    std::istringstream ss{std::string(line)};
    std::string token;
    while (ss >> token) {
      if (col_major.size() == expected)
        throw ParseError("more entries than the declared " + std::to_string(expected), li + 1);
      col_major.push_back(parse_number(token, li + 1));
    }
  }
  if (col_major.size() != expected)
    throw ParseError("declared " + std::to_string(expected) + " entries, found " + std::to_string(col_major.size()),
                     lines.size());
  std::vector<double> row_major(expected);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) row_major[i * cols + j] = col_major[j * rows + i];
  return DenseMatrix(rows, cols, std::move(row_major));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

DenseMatrix parse_matrix(std::string_view text, MatrixFormat format) {
  return format == MatrixFormat::Csv ? parse_csv(text) : parse_matrix_market(text);
}

DenseMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
  return parse_matrix(read_file(path), format);
}

std::string format_matrix(const DenseMatrix& m, MatrixFormat format) {
  std::string out;
  if (format == MatrixFormat::Csv) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) {
        if (j) out += ',';
        out += format_real(m(i, j));
      }
      out += '\n';
    }
    return out;
  }
  out = "%%MatrixMarket matrix array real general\n";
  out += std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < m.rows(); ++i) out += format_real(m(i, j)) + "\n";
  return out;
}

void save_matrix(const std::filesystem::path& path, const DenseMatrix& m, MatrixFormat format) {
  write_file(path, format_matrix(m, format));
}

std::vector<std::size_t> load_labels(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<std::size_t> labels;
  const auto lines = split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string_view line = trim(lines[li]);
    if (line.empty()) continue;
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), value);
    if (ec != std::errc{} || ptr != line.data() + line.size()) throw ParseError("bad label", li + 1);
    labels.push_back(value);
  }
  return labels;
}

void save_labels(const std::filesystem::path& path, const std::vector<std::size_t>& labels) {
  std::string out;
  for (std::size_t l : labels) out += std::to_string(l) + "\n";
  write_file(path, out);
}

std::string encode_pgm(std::span<const double> pixels, std::size_t height, std::size_t width) {
  if (pixels.size() != height * width) throw std::invalid_argument("encode_pgm: pixel count != height*width");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  if (pixels.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(pixels.begin(), pixels.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  for (double v : pixels) {
    const double scaled = range > 0.0 ? (v - lo) / range * 255.0 : 0.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(scaled, 0.0, 255.0)))));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t height,
               std::size_t width) {
  write_file(path, encode_pgm(pixels, height, width));
}

}  // namespace bregopt
