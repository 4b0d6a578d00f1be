#pragma once

#include <Eigen/Sparse>
#include <utility>
#include <vector>

#include "gsm/tensor.hpp"
#include "gsm/types.hpp"

namespace gsm {

// H x W lattice of D-channel tokens in raster order. Lattice coordinates are
// 1-based; normalized coordinates map axis index k in {1..n} to
// -1 + 2(k-1)/(n-1), with a 1-wide axis mapping to 0.
struct TokenGrid {
  Index H = 0;
  Index W = 0;
  Matrix features;  // (H*W) x D

  TokenGrid(Index height, Index width, Matrix feats);
  TokenGrid(Index height, Index width, Index channels);
  static TokenGrid seeded(Index height, Index width, Index channels, SeededRng& rng,
                          double scale = 1.0);

  Index tokens() const { return H * W; }
  Index channels() const { return features.cols(); }

  Index flat(Index row, Index col) const;
  std::pair<Index, Index> coord(Index i) const;
  double norm_row(Index row) const;
  double norm_col(Index col) const;
  Eigen::Vector2d position(Index i) const;  // (x, y) = (col, row) normalized
};

// Affinity/value/output projections plus the relative-bias table. The table
// has one entry per window slot in row-major offset order, so its length
// fixes the radius; ops that also take a radius argument must agree with it.
struct ProjectionSet {
  Index radius = 0;
  Index heads = 1;
  Matrix W_q;    // D x d
  Matrix W_k;    // D x d
  Matrix W_v;    // D x d_v
  Matrix W_o;    // d_v x D
  Vector b_rel;  // (2r+1)^2 entries

  Index window() const { return (2 * radius + 1) * (2 * radius + 1); }
  void validate(Index channels) const;

  // W_o defaults to zero so a fresh operator starts as the identity map.
  static ProjectionSet seeded(Index channels, Index d, Index d_v, Index radius, Index heads,
                              SeededRng& rng, double out_scale = 0.0, double bias_scale = 0.02);
};

struct RoutingField {
  Index radius = 0;
  IndexMatrix neighbors;  // L x S flat token indices, clamped
  Matrix scores;          // L x S
  Matrix affinities;      // L x S, each row nonnegative and summing to 1
};

// Sparse routing-matrix form: X' = X + P X M, with duplicate clamped window
// columns merged by summing their affinity mass.
struct SparseRouting {
  Eigen::SparseMatrix<double, Eigen::RowMajor> P;  // L x L, row-stochastic
  Matrix M;                                        // D x D, W_v W_o
};

// 1-based lattice coordinates, row-major offset order, clamped into bounds.
std::vector<std::pair<Index, Index>> candidate_set(std::pair<Index, Index> g, Index r, Index H,
                                                   Index W);

RoutingField compute_affinities(const TokenGrid& grid, const ProjectionSet& proj, Index r);
Matrix route_messages(const TokenGrid& grid, const RoutingField& field,
                      const ProjectionSet& proj);
TokenGrid route_tokens(const TokenGrid& grid, const RoutingField& field,
                       const ProjectionSet& proj);
SparseRouting routing_matrix(const RoutingField& field, const ProjectionSet& proj);
TokenGrid route_via_matrix(const TokenGrid& grid, const SparseRouting& routing);

Matrix expected_positions(const RoutingField& field, const TokenGrid& grid);   // L x 2
Matrix displacement_field(const RoutingField& field, const TokenGrid& grid);  // L x 2

TokenGrid multi_head_route(const TokenGrid& grid, const ProjectionSet& proj);
TokenGrid bilinear_offset_scan(const TokenGrid& grid, const Matrix& offsets);
TokenGrid route_jvp(const TokenGrid& grid, const ProjectionSet& proj, const Matrix& direction);

}  // namespace gsm
