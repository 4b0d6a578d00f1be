#include "gsm/tensor.hpp"

#include <cmath>
#include <numeric>

namespace gsm {

namespace {

Index shape_product(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

void check_shape(const std::vector<Index>& shape) {
  if (shape.empty()) throw ShapeError("DenseArray: shape must have at least one extent");
  for (Index e : shape) {
    if (e <= 0) throw ShapeError("DenseArray: extents must be positive, got " + std::to_string(e));
  }
}

}  // namespace

DenseArray::DenseArray(std::vector<Index> shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_ = Array1D::Zero(shape_product(shape_));
}

DenseArray::DenseArray(std::vector<Index> shape, Array1D data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_product(shape_)) {
    throw ShapeError("DenseArray: data length " + std::to_string(data_.size()) +
                     " does not match shape product " + std::to_string(shape_product(shape_)));
  }
}

DenseArray DenseArray::zeros(std::vector<Index> shape) { return DenseArray(std::move(shape)); }

DenseArray DenseArray::from_matrix(const Matrix& m) {
  DenseArray out({m.rows(), m.cols()});
  out.matrix() = m;
  return out;
}

Index DenseArray::extent(Index axis) const {
  if (axis < 0 || axis >= rank()) {
    throw IndexError("DenseArray: axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank()));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

void DenseArray::check_rank(Index rank_needed, const char* what) const {
  if (rank() != rank_needed) {
    throw ShapeError(std::string(what) + ": requires rank " + std::to_string(rank_needed) +
                     ", array has rank " + std::to_string(rank()));
  }
}

double DenseArray::operator()(Index i, Index j) const {
  check_rank(2, "DenseArray::operator()(i,j)");
  if (i < 0 || i >= shape_[0] || j < 0 || j >= shape_[1]) {
    throw IndexError("DenseArray: index (" + std::to_string(i) + "," + std::to_string(j) +
                     ") out of bounds for " + shape_str(shape_[0], shape_[1]));
  }
  return data_(i * shape_[1] + j);
}

double& DenseArray::operator()(Index i, Index j) {
  check_rank(2, "DenseArray::operator()(i,j)");
  if (i < 0 || i >= shape_[0] || j < 0 || j >= shape_[1]) {
    throw IndexError("DenseArray: index (" + std::to_string(i) + "," + std::to_string(j) +
                     ") out of bounds for " + shape_str(shape_[0], shape_[1]));
  }
  return data_(i * shape_[1] + j);
}

double DenseArray::operator()(Index i, Index j, Index k) const {
  check_rank(3, "DenseArray::operator()(i,j,k)");
  if (i < 0 || i >= shape_[0] || j < 0 || j >= shape_[1] || k < 0 || k >= shape_[2]) {
    throw IndexError("DenseArray: rank-3 index out of bounds");
  }
  return data_((i * shape_[1] + j) * shape_[2] + k);
}

double& DenseArray::operator()(Index i, Index j, Index k) {
  check_rank(3, "DenseArray::operator()(i,j,k)");
  if (i < 0 || i >= shape_[0] || j < 0 || j >= shape_[1] || k < 0 || k >= shape_[2]) {
    throw IndexError("DenseArray: rank-3 index out of bounds");
  }
  return data_((i * shape_[1] + j) * shape_[2] + k);
}

Eigen::Map<const Matrix> DenseArray::matrix() const {
  check_rank(2, "DenseArray::matrix");
  return {data_.data(), shape_[0], shape_[1]};
}

Eigen::Map<Matrix> DenseArray::matrix() {
  check_rank(2, "DenseArray::matrix");
  return {data_.data(), shape_[0], shape_[1]};
}

Eigen::Map<const Array2D> DenseArray::array() const {
  check_rank(2, "DenseArray::array");
  return {data_.data(), shape_[0], shape_[1]};
}

Eigen::Map<Array2D> DenseArray::array() {
  check_rank(2, "DenseArray::array");
  return {data_.data(), shape_[0], shape_[1]};
}

Eigen::Map<const Array2D> DenseArray::plane(Index i) const {
  check_rank(3, "DenseArray::plane");
  if (i < 0 || i >= shape_[0]) {
    throw IndexError("DenseArray::plane: slice " + std::to_string(i) + " out of range");
  }
  return {data_.data() + i * shape_[1] * shape_[2], shape_[1], shape_[2]};
}

Eigen::Map<Array2D> DenseArray::plane(Index i) {
  check_rank(3, "DenseArray::plane");
  if (i < 0 || i >= shape_[0]) {
    throw IndexError("DenseArray::plane: slice " + std::to_string(i) + " out of range");
  }
  return {data_.data() + i * shape_[1] * shape_[2], shape_[1], shape_[2]};
}

DenseArray matmul(const DenseArray& a, const DenseArray& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: both operands must have rank 2");
  }
  if (a.extent(1) != b.extent(0)) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.extent(0), a.extent(1)) +
                     " vs " + shape_str(b.extent(0), b.extent(1)));
  }
  DenseArray out({a.extent(0), b.extent(1)});
  out.matrix() = a.matrix() * b.matrix();
  return out;
}

namespace {

void softmax_span(const double* in, double* out, Index n) {
  double m = in[0];
  for (Index i = 1; i < n; ++i) m = std::max(m, in[i]);
  if (!std::isfinite(m)) throw NumericError("softmax_last: non-finite input entry");
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(in[i])) throw NumericError("softmax_last: non-finite input entry");
    out[i] = std::exp(in[i] - m);
    sum += out[i];
  }
  for (Index i = 0; i < n; ++i) out[i] /= sum;
}

}  // namespace

DenseArray softmax_last(const DenseArray& a) {
  const Index s = a.shape().back();
  DenseArray out(a.shape());
  for (Index g = 0; g < a.size(); g += s) {
    softmax_span(a.data().data() + g, out.data().data() + g, s);
  }
  return out;
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    softmax_span(scores.row(i).data(), out.row(i).data(), scores.cols());
  }
  return out;
}

DenseArray uniform_init(SeededRng& rng, std::vector<Index> shape, double scale) {
  if (scale <= 0.0) {
    throw ParameterError("uniform_init: scale must be positive, got " + std::to_string(scale));
  }
  DenseArray out(std::move(shape));
  for (Index i = 0; i < out.size(); ++i) out.flat(i) = rng.symmetric(scale);
  return out;
}

Matrix uniform_matrix(SeededRng& rng, Index rows, Index cols, double scale) {
  if (scale <= 0.0) {
    throw ParameterError("uniform_matrix: scale must be positive, got " + std::to_string(scale));
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.symmetric(scale);
  return m;
}

Vector uniform_vector(SeededRng& rng, Index n, double scale) {
  if (scale <= 0.0) {
    throw ParameterError("uniform_vector: scale must be positive, got " + std::to_string(scale));
  }
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.symmetric(scale);
  return v;
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace gsm
