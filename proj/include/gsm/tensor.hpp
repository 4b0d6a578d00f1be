#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "gsm/types.hpp"

namespace gsm {

// Dense row-major array of doubles with explicit shape. Rank-2 arrays map
// onto Eigen without copying via matrix()/array(); rank-3 arrays expose
// their leading-axis slices via plane(i).
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(std::vector<Index> shape);
  DenseArray(std::vector<Index> shape, Array1D data);

  static DenseArray zeros(std::vector<Index> shape);
  static DenseArray from_matrix(const Matrix& m);

  Index rank() const { return static_cast<Index>(shape_.size()); }
  const std::vector<Index>& shape() const { return shape_; }
  Index extent(Index axis) const;
  Index size() const { return data_.size(); }

  double flat(Index i) const { return data_(i); }
  double& flat(Index i) { return data_(i); }
  const Array1D& data() const { return data_; }
  Array1D& data() { return data_; }

  double operator()(Index i, Index j) const;
  double& operator()(Index i, Index j);
  double operator()(Index i, Index j, Index k) const;
  double& operator()(Index i, Index j, Index k);

  Eigen::Map<const Matrix> matrix() const;
  Eigen::Map<Matrix> matrix();
  Eigen::Map<const Array2D> array() const;
  Eigen::Map<Array2D> array();
  Eigen::Map<const Array2D> plane(Index i) const;
  Eigen::Map<Array2D> plane(Index i);

 private:
  void check_rank(Index rank, const char* what) const;

  std::vector<Index> shape_;
  Array1D data_;
};

// Deterministic generator with a 64-bit seed. The mt19937_64 bit stream is
// pinned by the C++ standard; uniforms take its top 53 bits directly because
// std:: distributions are implementation-defined and would break
// cross-platform reproducibility.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t raw() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in [-scale, scale].
  double symmetric(double scale) { return scale * (2.0 * uniform() - 1.0); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

DenseArray matmul(const DenseArray& a, const DenseArray& b);
DenseArray softmax_last(const DenseArray& a);
DenseArray uniform_init(SeededRng& rng, std::vector<Index> shape, double scale);

// Eigen-typed companions used by the higher modules; same contracts.
Matrix softmax_rows(const Matrix& scores);
Matrix uniform_matrix(SeededRng& rng, Index rows, Index cols, double scale);
Vector uniform_vector(SeededRng& rng, Index n, double scale);

double softplus(double x);

}  // namespace gsm
