#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bregopt/dense_matrix.hpp"

namespace bregopt {

enum class MatrixFormat { MatrixMarketArray, Csv };

MatrixFormat parse_matrix_format(std::string_view name);
/// Guesses from the extension: .mtx / .mm are MatrixMarket, anything else CSV.
MatrixFormat format_from_extension(const std::filesystem::path& path);

/// Parse failure with the offending 1-based line number (0 when not line-specific).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// MatrixMarket "array real general" (column-major values) or plain CSV
/// (one row per line, comma separated; blank lines ignored).
DenseMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format);
DenseMatrix parse_matrix(std::string_view text, MatrixFormat format);

/// Writes with 17 significant digits so load(save(M)) == M exactly.
void save_matrix(const std::filesystem::path& path, const DenseMatrix& m, MatrixFormat format);
std::string format_matrix(const DenseMatrix& m, MatrixFormat format);

/// One integer label per line.
std::vector<std::size_t> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const std::vector<std::size_t>& labels);

/// Binary PGM (P5), 8-bit, of a height x width image stored row-major in
/// `pixels`, min-max normalized to [0, 255]. A constant image maps to 0.
std::string encode_pgm(std::span<const double> pixels, std::size_t height, std::size_t width);
void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t height,
               std::size_t width);

/// Shortest round-trip decimal form with 17 significant digits.
std::string format_real(double x);

}  // namespace bregopt
