#include "gild/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace gild {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Tensor: data length " + std::to_string(data_.size()) + " does not match shape (" +
                     std::to_string(rows) + ", " + std::to_string(cols) + ")");
  }
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor(1, values.size(), std::vector<double>(values));
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("Tensor::from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor(rows.size(), cols, std::move(data));
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1) throw ShapeError("Tensor::item: expected (1, 1), got " + shape_string());
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  return "(" + std::to_string(rows_) + ", " + std::to_string(cols_) + ")";
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t k = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != kb) {
    throw ShapeError("matmul: inner extents differ, " + a.shape_string() + (transpose_a ? "^T" : "") + " x " +
                     b.shape_string() + (transpose_b ? "^T" : ""));
  }
  Tensor out(m, n);
  Eigen::Map<const RowMat> ma(a.data().data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
  Eigen::Map<const RowMat> mb(b.data().data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
  Eigen::Map<RowMat> mo(out.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (m == 0 || n == 0) return out;
  if (transpose_a && transpose_b) {
    mo.noalias() = ma.transpose() * mb.transpose();
  } else if (transpose_a) {
    mo.noalias() = ma.transpose() * mb;
  } else if (transpose_b) {
    mo.noalias() = ma * mb.transpose();
  } else {
    mo.noalias() = ma * mb;
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch, " + parts.front().shape_string() + " vs " + p.shape_string());
    }
    cols += p.cols();
  }
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      std::copy_n(p.row_span(r).begin(), p.cols(), out.row_span(r).begin() + static_cast<std::ptrdiff_t>(c0));
      c0 += p.cols();
    }
  }
  return out;
}

}  // namespace gild
