#include "fedmpa/dense.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedmpa/error.hpp"

namespace fedmpa {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Structural: return "structural";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::Loader: return "loader";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("DenseMatrix: data length " + std::to_string(data_.size()) +
                     " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void DenseMatrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool DenseMatrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void DenseMatrix::check_finite(std::string_view where) const {
  for (std::size_t k = 0; k < data_.size(); ++k) {
    if (!std::isfinite(data_[k])) {
      throw NumericError(std::string(where) + ": non-finite entry at (" +
                         std::to_string(k / std::max<std::size_t>(cols_, 1)) + "," +
                         std::to_string(k % std::max<std::size_t>(cols_, 1)) + ")");
    }
  }
}

DenseMatrix DenseMatrix::gather_rows(std::span<const std::size_t> ids) const {
  DenseMatrix out(ids.size(), cols_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows_) throw DomainError("gather_rows: row id out of range");
    std::copy_n(data_.data() + ids[i] * cols_, cols_, out.data() + i * cols_);
  }
  return out;
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b,
                        std::string_view where) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(where) + ": shape " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                     "x" + std::to_string(b.cols()));
  }
}

}  // namespace fedmpa
