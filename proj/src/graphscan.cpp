#include "gsm/graphscan.hpp"

#include <algorithm>
#include <cmath>

namespace gsm {

TokenGrid::TokenGrid(Index height, Index width, Matrix feats)
    : H(height), W(width), features(std::move(feats)) {
  if (H <= 0 || W <= 0) throw ShapeError("TokenGrid: extents must be positive");
  if (features.rows() != H * W) {
    throw ShapeError("TokenGrid: feature rows " + std::to_string(features.rows()) +
                     " do not match H*W = " + std::to_string(H * W));
  }
  if (features.cols() <= 0) throw ShapeError("TokenGrid: channel count must be positive");
}

TokenGrid::TokenGrid(Index height, Index width, Index channels)
    : TokenGrid(height, width, Matrix::Zero(height * width, channels)) {}

TokenGrid TokenGrid::seeded(Index height, Index width, Index channels, SeededRng& rng,
                            double scale) {
  return TokenGrid(height, width, uniform_matrix(rng, height * width, channels, scale));
}

Index TokenGrid::flat(Index row, Index col) const {
  if (row < 1 || row > H || col < 1 || col > W) {
    throw IndexError("TokenGrid: coordinate (" + std::to_string(row) + "," +
                     std::to_string(col) + ") outside " + shape_str(H, W));
  }
  return (row - 1) * W + (col - 1);
}

std::pair<Index, Index> TokenGrid::coord(Index i) const {
  if (i < 0 || i >= tokens()) {
    throw IndexError("TokenGrid: token " + std::to_string(i) + " out of range");
  }
  return {i / W + 1, i % W + 1};
}

double TokenGrid::norm_row(Index row) const {
  if (H == 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(row - 1) / static_cast<double>(H - 1);
}

double TokenGrid::norm_col(Index col) const {
  if (W == 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(col - 1) / static_cast<double>(W - 1);
}

Eigen::Vector2d TokenGrid::position(Index i) const {
  auto [row, col] = coord(i);
  return {norm_col(col), norm_row(row)};
}

void ProjectionSet::validate(Index channels) const {
  if (radius < 0) throw ParameterError("ProjectionSet: radius must be nonnegative");
  if (heads < 1) throw ParameterError("ProjectionSet: head count must be at least 1");
  if (W_q.rows() != channels || W_k.rows() != channels || W_v.rows() != channels) {
    throw ShapeError("ProjectionSet: projections expect " + std::to_string(W_q.rows()) +
                     " channels, grid has " + std::to_string(channels));
  }
  if (W_q.cols() != W_k.cols()) {
    throw ShapeError("ProjectionSet: W_q and W_k must share their inner dimension");
  }
  if (W_o.rows() != W_v.cols() || W_o.cols() != channels) {
    throw ShapeError("ProjectionSet: W_o must be " + shape_str(W_v.cols(), channels) +
                     ", got " + shape_str(W_o.rows(), W_o.cols()));
  }
  if (b_rel.size() != window()) {
    throw ShapeError("ProjectionSet: bias table has " + std::to_string(b_rel.size()) +
                     " entries, window needs " + std::to_string(window()));
  }
}

ProjectionSet ProjectionSet::seeded(Index channels, Index d, Index d_v, Index radius,
                                    Index heads, SeededRng& rng, double out_scale,
                                    double bias_scale) {
  if (heads < 1 || d % heads != 0 || d_v % heads != 0) {
    throw ParameterError("ProjectionSet: d and d_v must be divisible by the head count");
  }
  ProjectionSet p;
  p.radius = radius;
  p.heads = heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(channels));
  p.W_q = uniform_matrix(rng, channels, d, scale);
  p.W_k = uniform_matrix(rng, channels, d, scale);
  p.W_v = uniform_matrix(rng, channels, d_v, scale);
  p.W_o = out_scale > 0.0 ? uniform_matrix(rng, d_v, channels, out_scale)
                          : Matrix::Zero(d_v, channels);
  p.b_rel = bias_scale > 0.0 ? uniform_vector(rng, p.window(), bias_scale)
                             : Vector::Zero(p.window());
  p.validate(channels);
  return p;
}

std::vector<std::pair<Index, Index>> candidate_set(std::pair<Index, Index> g, Index r, Index H,
                                                   Index W) {
  if (r < 0) throw ParameterError("candidate_set: radius must be nonnegative");
  if (g.first < 1 || g.first > H || g.second < 1 || g.second > W) {
    throw IndexError("candidate_set: coordinate (" + std::to_string(g.first) + "," +
                     std::to_string(g.second) + ") outside " + shape_str(H, W));
  }
  std::vector<std::pair<Index, Index>> out;
  out.reserve(static_cast<std::size_t>((2 * r + 1) * (2 * r + 1)));
  for (Index dr = -r; dr <= r; ++dr) {
    for (Index dc = -r; dc <= r; ++dc) {
      out.emplace_back(std::clamp(g.first + dr, Index{1}, H),
                       std::clamp(g.second + dc, Index{1}, W));
    }
  }
  return out;
}

RoutingField compute_affinities(const TokenGrid& grid, const ProjectionSet& proj, Index r) {
  proj.validate(grid.channels());
  if (r != proj.radius) {
    throw ParameterError("compute_affinities: radius " + std::to_string(r) +
                         " does not match the bias table radius " +
                         std::to_string(proj.radius));
  }
  const Index L = grid.tokens();
  const Index S = proj.window();
  const Index d = proj.W_q.cols();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  Matrix Q = grid.features * proj.W_q;
  Matrix K = grid.features * proj.W_k;

  RoutingField field;
  field.radius = r;
  field.neighbors.resize(L, S);
  field.scores.resize(L, S);
  for (Index i = 0; i < L; ++i) {
    auto g = grid.coord(i);
    Index slot = 0;
    for (Index dr = -r; dr <= r; ++dr) {
      for (Index dc = -r; dc <= r; ++dc, ++slot) {
        const Index nr = std::clamp(g.first + dr, Index{1}, grid.H);
        const Index nc = std::clamp(g.second + dc, Index{1}, grid.W);
        const Index j = (nr - 1) * grid.W + (nc - 1);
        field.neighbors(i, slot) = j;
        field.scores(i, slot) = Q.row(i).dot(K.row(j)) * inv_sqrt_d + proj.b_rel(slot);
      }
    }
  }
  field.affinities = softmax_rows(field.scores);
  return field;
}

namespace {

void check_field(const TokenGrid& grid, const RoutingField& field) {
  if (field.neighbors.rows() != grid.tokens()) {
    throw ShapeError("routing field was computed for " + std::to_string(field.neighbors.rows()) +
                     " tokens, grid has " + std::to_string(grid.tokens()));
  }
}

}  // namespace

Matrix route_messages(const TokenGrid& grid, const RoutingField& field,
                      const ProjectionSet& proj) {
  proj.validate(grid.channels());
  check_field(grid, field);
  const Index L = grid.tokens();
  const Index S = field.neighbors.cols();
  Matrix V = grid.features * proj.W_v;
  Matrix mixed = Matrix::Zero(L, V.cols());
  for (Index i = 0; i < L; ++i) {
    for (Index slot = 0; slot < S; ++slot) {
      mixed.row(i) += field.affinities(i, slot) * V.row(field.neighbors(i, slot));
    }
  }
  return mixed * proj.W_o;
}

TokenGrid route_tokens(const TokenGrid& grid, const RoutingField& field,
                       const ProjectionSet& proj) {
  return {grid.H, grid.W, grid.features + route_messages(grid, field, proj)};
}

SparseRouting routing_matrix(const RoutingField& field, const ProjectionSet& proj) {
  const Index L = field.neighbors.rows();
  const Index S = field.neighbors.cols();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(L * S));
  for (Index i = 0; i < L; ++i) {
    for (Index slot = 0; slot < S; ++slot) {
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(field.neighbors(i, slot)),
                            field.affinities(i, slot));
    }
  }
  SparseRouting routing;
  routing.P.resize(L, L);
  routing.P.setFromTriplets(triplets.begin(), triplets.end());
  routing.M = proj.W_v * proj.W_o;
  return routing;
}

TokenGrid route_via_matrix(const TokenGrid& grid, const SparseRouting& routing) {
  if (routing.P.rows() != grid.tokens()) {
    throw ShapeError("route_via_matrix: routing matrix is " +
                     shape_str(routing.P.rows(), routing.P.cols()) + ", grid has " +
                     std::to_string(grid.tokens()) + " tokens");
  }
  if (routing.M.rows() != grid.channels()) {
    throw ShapeError("route_via_matrix: value map is " +
                     shape_str(routing.M.rows(), routing.M.cols()) + ", grid has " +
                     std::to_string(grid.channels()) + " channels");
  }
  Matrix routed = grid.features + routing.P * (grid.features * routing.M);
  return {grid.H, grid.W, std::move(routed)};
}

Matrix expected_positions(const RoutingField& field, const TokenGrid& grid) {
  check_field(grid, field);
  const Index L = grid.tokens();
  const Index S = field.neighbors.cols();
  Matrix phat = Matrix::Zero(L, 2);
  for (Index i = 0; i < L; ++i) {
    for (Index slot = 0; slot < S; ++slot) {
      phat.row(i) +=
          field.affinities(i, slot) * grid.position(field.neighbors(i, slot)).transpose();
    }
  }
  return phat;
}

Matrix displacement_field(const RoutingField& field, const TokenGrid& grid) {
  Matrix delta = expected_positions(field, grid);
  for (Index i = 0; i < grid.tokens(); ++i) delta.row(i) -= grid.position(i).transpose();
  return delta;
}

TokenGrid multi_head_route(const TokenGrid& grid, const ProjectionSet& proj) {
  proj.validate(grid.channels());
  if (proj.heads == 1) {
    RoutingField field = compute_affinities(grid, proj, proj.radius);
    return route_tokens(grid, field, proj);
  }
  const Index d = proj.W_q.cols();
  const Index d_v = proj.W_v.cols();
  if (d % proj.heads != 0 || d_v % proj.heads != 0) {
    throw ParameterError("multi_head_route: d and d_v must be divisible by the head count");
  }
  const Index dh = d / proj.heads;
  const Index dvh = d_v / proj.heads;
  const Index L = grid.tokens();
  const Index S = proj.window();
  const Index r = proj.radius;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  IndexMatrix neighbors(L, S);
  for (Index i = 0; i < L; ++i) {
    auto g = grid.coord(i);
    Index slot = 0;
    for (Index dr = -r; dr <= r; ++dr) {
      for (Index dc = -r; dc <= r; ++dc, ++slot) {
        const Index nr = std::clamp(g.first + dr, Index{1}, grid.H);
        const Index nc = std::clamp(g.second + dc, Index{1}, grid.W);
        neighbors(i, slot) = (nr - 1) * grid.W + (nc - 1);
      }
    }
  }

  Matrix mixed(L, d_v);
  for (Index h = 0; h < proj.heads; ++h) {
    Matrix Q = grid.features * proj.W_q.middleCols(h * dh, dh);
    Matrix K = grid.features * proj.W_k.middleCols(h * dh, dh);
    Matrix V = grid.features * proj.W_v.middleCols(h * dvh, dvh);
    Matrix scores(L, S);
    for (Index i = 0; i < L; ++i) {
      for (Index slot = 0; slot < S; ++slot) {
        scores(i, slot) =
            Q.row(i).dot(K.row(neighbors(i, slot))) * inv_sqrt_dh + proj.b_rel(slot);
      }
    }
    Matrix alpha = softmax_rows(scores);
    for (Index i = 0; i < L; ++i) {
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dvh);
      for (Index slot = 0; slot < S; ++slot) {
        acc += alpha(i, slot) * V.row(neighbors(i, slot));
      }
      mixed.block(i, h * dvh, 1, dvh) = acc;
    }
  }
  return {grid.H, grid.W, grid.features + mixed * proj.W_o};
}

TokenGrid bilinear_offset_scan(const TokenGrid& grid, const Matrix& offsets) {
  if (offsets.rows() != grid.tokens() || offsets.cols() != 2) {
    throw ShapeError("bilinear_offset_scan: offsets must be " +
                     shape_str(grid.tokens(), 2) + ", got " +
                     shape_str(offsets.rows(), offsets.cols()));
  }
  const Index L = grid.tokens();
  Matrix out(L, grid.channels());
  for (Index i = 0; i < L; ++i) {
    Eigen::Vector2d target = grid.position(i) + offsets.row(i).transpose();
    const double px = std::clamp(target.x(), -1.0, 1.0);
    const double py = std::clamp(target.y(), -1.0, 1.0);

    // Back to continuous 1-based lattice coordinates.
    const double cc = grid.W == 1 ? 1.0 : (px + 1.0) * 0.5 * static_cast<double>(grid.W - 1) + 1.0;
    const double cr = grid.H == 1 ? 1.0 : (py + 1.0) * 0.5 * static_cast<double>(grid.H - 1) + 1.0;
    const Index c0 = std::clamp(static_cast<Index>(std::floor(cc)), Index{1}, grid.W);
    const Index r0 = std::clamp(static_cast<Index>(std::floor(cr)), Index{1}, grid.H);
    const Index c1 = std::min<Index>(c0 + 1, grid.W);
    const Index r1 = std::min<Index>(r0 + 1, grid.H);
    const double fx = cc - static_cast<double>(c0);
    const double fy = cr - static_cast<double>(r0);

    out.row(i) = (1.0 - fy) * (1.0 - fx) * grid.features.row(grid.flat(r0, c0)) +
                 (1.0 - fy) * fx * grid.features.row(grid.flat(r0, c1)) +
                 fy * (1.0 - fx) * grid.features.row(grid.flat(r1, c0)) +
                 fy * fx * grid.features.row(grid.flat(r1, c1));
  }
  return {grid.H, grid.W, std::move(out)};
}

TokenGrid route_jvp(const TokenGrid& grid, const ProjectionSet& proj, const Matrix& direction) {
  proj.validate(grid.channels());
  if (direction.rows() != grid.tokens() || direction.cols() != grid.channels()) {
    throw ShapeError("route_jvp: direction must be " +
                     shape_str(grid.tokens(), grid.channels()) + ", got " +
                     shape_str(direction.rows(), direction.cols()));
  }
  RoutingField field = compute_affinities(grid, proj, proj.radius);
  const Index L = grid.tokens();
  const Index S = field.neighbors.cols();
  const Index d = proj.W_q.cols();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  Matrix Q = grid.features * proj.W_q;
  Matrix K = grid.features * proj.W_k;
  Matrix V = grid.features * proj.W_v;
  Matrix Qd = direction * proj.W_q;
  Matrix Kd = direction * proj.W_k;
  Matrix Vd = direction * proj.W_v;

  Matrix mixed_dot = Matrix::Zero(L, V.cols());
  Vector sdot(S);
  for (Index i = 0; i < L; ++i) {
    for (Index slot = 0; slot < S; ++slot) {
      const Index j = field.neighbors(i, slot);
      sdot(slot) = (Qd.row(i).dot(K.row(j)) + Q.row(i).dot(Kd.row(j))) * inv_sqrt_d;
    }
    const double mean_sdot = field.affinities.row(i).dot(sdot.transpose());
    for (Index slot = 0; slot < S; ++slot) {
      const Index j = field.neighbors(i, slot);
      const double alpha_dot = field.affinities(i, slot) * (sdot(slot) - mean_sdot);
      mixed_dot.row(i) += alpha_dot * V.row(j) + field.affinities(i, slot) * Vd.row(j);
    }
  }
  return {grid.H, grid.W, direction + mixed_dot * proj.W_o};
}

}  // namespace gsm
