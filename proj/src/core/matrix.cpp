#include "aspers/core/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aspers/error.hpp"

namespace aspers {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                         " != " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Matrix::append_row(std::span<const double> r) {
  if (rows_ == 0 && cols_ == 0) cols_ = r.size();
  if (r.size() != cols_)
    throw DimensionError("append_row: width " + std::to_string(r.size()) +
                         " != " + std::to_string(cols_));
  data_.insert(data_.end(), r.begin(), r.end());
  ++rows_;
}

void Matrix::check_finite(const char* what) const {
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (!std::isfinite(data_[i]))
      throw NumericError(std::string(what) + ": non-finite value at flat index " +
                         std::to_string(i));
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = m.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace aspers
