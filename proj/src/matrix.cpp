#include "avsf/matrix.hpp"

#include <cmath>
#include <string>

#include "avsf/error.hpp"

namespace avsf {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return "io error";
    case ErrorKind::bad_magic: return "bad magic";
    case ErrorKind::unsupported_version: return "unsupported version";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::format: return "format error";
    case ErrorKind::unsupported_format: return "unsupported format";
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::dimension_mismatch: return "dimension mismatch";
    case ErrorKind::divergence: return "divergence";
  }
  return "error";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorKind::dimension_mismatch,
                "matrix data length " + std::to_string(data_.size()) + " != " +
                    std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::head_rows(std::size_t n) const {
  if (n > rows_) throw Error(ErrorKind::invalid_argument, "head_rows beyond matrix");
  return Matrix(n, cols_, std::vector<double>(data_.begin(), data_.begin() + n * cols_));
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace avsf
