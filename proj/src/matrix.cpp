// SPDX-License-Identifier: Apache-2.0

#include "gatllm/matrix.hpp"

#include <algorithm>

#include "gatllm/error.hpp"

namespace gatllm {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::Shape, "matrix: " + std::to_string(data_.size()) + " values for " +
                                      std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::rows_slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows_) {
    throw Error(ErrorCode::Range, "matrix: row range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                      ") outside " + std::to_string(rows_) + " rows");
  }
  Matrix out(end - begin, cols_);
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
            data_.begin() + static_cast<std::ptrdiff_t>(end * cols_), out.data_.begin());
  return out;
}

Matrix Matrix::select_columns(std::span<const std::size_t> columns) const {
  Matrix out(rows_, columns.size());
  for (std::size_t c : columns) {
    if (c >= cols_) throw Error(ErrorCode::Range, "matrix: column " + std::to_string(c) + " out of range");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t j = 0; j < columns.size(); ++j) out(r, j) = (*this)(r, columns[j]);
  }
  return out;
}

}  // namespace gatllm
