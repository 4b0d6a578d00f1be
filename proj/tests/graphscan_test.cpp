#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "gsm/graphscan.hpp"

using namespace gsm;

namespace {

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

// Independent oracle: per-token gather loop straight off the definitions,
// no shared code with the library's projections-then-gather path.
Matrix route_oracle(const TokenGrid& grid, const ProjectionSet& proj) {
  const Index L = grid.tokens();
  const Index r = proj.radius;
  const Index d = proj.W_q.cols();
  Matrix out(L, grid.channels());
  for (Index i = 0; i < L; ++i) {
    auto g = grid.coord(i);
    std::vector<double> scores;
    std::vector<Index> neigh;
    Index slot = 0;
    for (Index dr = -r; dr <= r; ++dr) {
      for (Index dc = -r; dc <= r; ++dc, ++slot) {
        const Index nr = std::clamp(g.first + dr, Index{1}, grid.H);
        const Index nc = std::clamp(g.second + dc, Index{1}, grid.W);
        const Index j = (nr - 1) * grid.W + (nc - 1);
        const double q_dot_k =
            (grid.features.row(i) * proj.W_q).dot(grid.features.row(j) * proj.W_k);
        scores.push_back(q_dot_k / std::sqrt(static_cast<double>(d)) + proj.b_rel(slot));
        neigh.push_back(j);
      }
    }
    const double m = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double& s : scores) {
      s = std::exp(s - m);
      z += s;
    }
    Eigen::RowVectorXd msg = Eigen::RowVectorXd::Zero(proj.W_v.cols());
    for (std::size_t s = 0; s < scores.size(); ++s) {
      msg += (scores[s] / z) * (grid.features.row(neigh[s]) * proj.W_v);
    }
    out.row(i) = grid.features.row(i) + msg * proj.W_o;
  }
  return out;
}

ProjectionSet seeded_proj(Index D, Index radius, SeededRng& rng, double out_scale) {
  return ProjectionSet::seeded(D, D, D, radius, 1, rng, out_scale);
}

}  // namespace

TEST_CASE("candidate_set clamps a corner into a multiset") {
  auto cs = candidate_set({1, 1}, 1, 4, 4);
  REQUIRE(cs.size() == 9);
  std::map<std::pair<Index, Index>, int> counts;
  for (auto& c : cs) counts[c]++;
  CHECK(counts[{1, 1}] == 4);
  CHECK(counts[{1, 2}] == 2);
  CHECK(counts[{2, 1}] == 2);
  CHECK(counts[{2, 2}] == 1);
}

TEST_CASE("candidate_set of an interior token has distinct neighbors in offset order") {
  auto cs = candidate_set({3, 3}, 1, 5, 5);
  REQUIRE(cs.size() == 9);
  std::map<std::pair<Index, Index>, int> counts;
  for (auto& c : cs) counts[c]++;
  CHECK(counts.size() == 9);
  CHECK(cs.front() == std::pair<Index, Index>{2, 2});
  CHECK(cs[4] == std::pair<Index, Index>{3, 3});
  CHECK(cs.back() == std::pair<Index, Index>{4, 4});
}

TEST_CASE("window sizes are (2r+1)^2") {
  CHECK(candidate_set({2, 2}, 1, 8, 8).size() == 9);
  CHECK(candidate_set({4, 4}, 2, 8, 8).size() == 25);
  CHECK(candidate_set({4, 4}, 3, 8, 8).size() == 49);
  CHECK_THROWS_AS(candidate_set({0, 1}, 1, 4, 4), IndexError);
  CHECK_THROWS_AS(candidate_set({5, 1}, 1, 4, 4), IndexError);
  CHECK_THROWS_AS(candidate_set({1, 1}, -1, 4, 4), ParameterError);
}

TEST_CASE("zero features and zero bias give uniform affinities") {
  SeededRng rng(1);
  TokenGrid grid(3, 4, 2);
  ProjectionSet proj = ProjectionSet::seeded(2, 2, 2, 1, 1, rng, 0.0, 0.0);
  RoutingField field = compute_affinities(grid, proj, 1);
  for (Index i = 0; i < grid.tokens(); ++i) {
    for (Index s = 0; s < 9; ++s) CHECK(field.affinities(i, s) == 1.0 / 9.0);
  }
}

TEST_CASE("a bias spike concentrates affinity on its slot") {
  SeededRng rng(2);
  TokenGrid grid(4, 4, 3);
  ProjectionSet proj = ProjectionSet::seeded(3, 3, 3, 1, 1, rng, 0.0, 0.0);
  const Index right_slot = 1 * 3 + 2;  // offset (0, +1) in row-major offset order
  proj.b_rel(right_slot) = 10.0;
  RoutingField field = compute_affinities(grid, proj, 1);

  // Features are zero, so affinities equal softmax of the bias row itself.
  double denom = 8.0 + std::exp(10.0);
  for (Index i = 0; i < grid.tokens(); ++i) {
    for (Index s = 0; s < 9; ++s) {
      const double expect = (s == right_slot ? std::exp(10.0) : 1.0) / denom;
      CHECK(field.affinities(i, s) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("affinities match a hand-evaluated softmax on a 2x2 grid") {
  Matrix feats(4, 1);
  feats << 0.3, -0.7, 0.4, 0.1;
  TokenGrid grid(2, 2, feats);
  ProjectionSet proj;
  proj.radius = 1;
  proj.heads = 1;
  proj.W_q = Matrix::Constant(1, 1, 0.5);
  proj.W_k = Matrix::Constant(1, 1, -0.8);
  proj.W_v = Matrix::Constant(1, 1, 1.0);
  proj.W_o = Matrix::Constant(1, 1, 0.0);
  Vector bias(9);
  bias << 0.11, -0.23, 0.08, 0.31, -0.05, 0.17, -0.29, 0.02, 0.40;
  proj.b_rel = bias;

  RoutingField field = compute_affinities(grid, proj, 1);

  // Token 0 sits at corner (1,1); its clamped window in offset order.
  const Index neigh[9] = {0, 0, 1, 0, 0, 1, 2, 2, 3};
  double scores[9];
  for (int s = 0; s < 9; ++s) {
    scores[s] = (0.5 * 0.3) * (-0.8 * feats(neigh[s], 0)) + bias(s);
  }
  double m = *std::max_element(scores, scores + 9);
  double z = 0.0;
  for (double& s : scores) {
    s = std::exp(s - m);
    z += s;
  }
  for (int s = 0; s < 9; ++s) {
    CHECK(std::abs(field.affinities(0, s) - scores[s] / z) <= 1e-12);
  }
}

TEST_CASE("compute_affinities rejects a radius that contradicts the bias table") {
  SeededRng rng(3);
  TokenGrid grid = TokenGrid::seeded(3, 3, 2, rng);
  ProjectionSet proj = seeded_proj(2, 1, rng, 0.1);
  CHECK_THROWS_AS(compute_affinities(grid, proj, 2), ParameterError);
}

TEST_CASE("route_tokens with zero output projection is the identity, bitwise") {
  SeededRng rng(4);
  TokenGrid grid = TokenGrid::seeded(4, 5, 3, rng);
  ProjectionSet proj = seeded_proj(3, 1, rng, 0.0);
  RoutingField field = compute_affinities(grid, proj, 1);
  TokenGrid routed = route_tokens(grid, field, proj);
  CHECK(bitwise_equal(routed.features, grid.features));
}

TEST_CASE("route_tokens at radius zero routes each token to itself") {
  SeededRng rng(5);
  TokenGrid grid = TokenGrid::seeded(3, 3, 4, rng);
  ProjectionSet proj = seeded_proj(4, 0, rng, 0.5);
  RoutingField field = compute_affinities(grid, proj, 0);
  TokenGrid routed = route_tokens(grid, field, proj);
  Matrix expect = grid.features + grid.features * proj.W_v * proj.W_o;
  CHECK(max_abs(routed.features - expect) <= 1e-14);
}

TEST_CASE("route_tokens matches the per-token gather oracle") {
  SeededRng rng(6);
  TokenGrid grid = TokenGrid::seeded(4, 4, 3, rng);
  ProjectionSet proj = seeded_proj(3, 1, rng, 0.7);
  RoutingField field = compute_affinities(grid, proj, 1);
  TokenGrid routed = route_tokens(grid, field, proj);
  CHECK(max_abs(routed.features - route_oracle(grid, proj)) <= 1e-12);
}

TEST_CASE("routing_matrix merges clamped duplicates and keeps rows stochastic") {
  SeededRng rng(7);
  TokenGrid grid(3, 3, 2);
  ProjectionSet proj = ProjectionSet::seeded(2, 2, 2, 1, 1, rng, 0.0, 0.0);
  RoutingField field = compute_affinities(grid, proj, 1);
  SparseRouting routing = routing_matrix(field, proj);

  Matrix P = Matrix(routing.P);
  const Index center = grid.flat(2, 2);
  for (Index j = 0; j < 9; ++j) CHECK(P(center, j) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));

  const Index corner = grid.flat(1, 1);
  CHECK(P(corner, grid.flat(1, 1)) == doctest::Approx(4.0 / 9.0).epsilon(1e-14));
  CHECK(P(corner, grid.flat(1, 2)) == doctest::Approx(2.0 / 9.0).epsilon(1e-14));
  CHECK(P(corner, grid.flat(2, 1)) == doctest::Approx(2.0 / 9.0).epsilon(1e-14));
  CHECK(P(corner, grid.flat(2, 2)) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
  CHECK(P(corner, grid.flat(3, 3)) == 0.0);

  for (Index i = 0; i < grid.tokens(); ++i) {
    CHECK(P.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("route_via_matrix trivial cases") {
  SeededRng rng(8);
  TokenGrid grid = TokenGrid::seeded(2, 3, 2, rng);

  SparseRouting self;
  self.P.resize(6, 6);
  self.P.setIdentity();
  self.M = Matrix::Zero(2, 2);
  CHECK(bitwise_equal(route_via_matrix(grid, self).features, grid.features));

  ProjectionSet proj = seeded_proj(2, 1, rng, 0.0);
  RoutingField field = compute_affinities(grid, proj, 1);
  SparseRouting routing = routing_matrix(field, proj);
  CHECK(max_abs(routing.M) == 0.0);
  CHECK(bitwise_equal(route_via_matrix(grid, routing).features, grid.features));
}

TEST_CASE("dual-path equivalence on random grids including 2x2 at radius 3") {
  std::uint64_t seed = 900;
  for (int trial = 0; trial < 30; ++trial) {
    SeededRng rng(seed++);
    const Index H = 1 + static_cast<Index>(rng.raw() % 8);
    const Index W = 1 + static_cast<Index>(rng.raw() % 8);
    const Index D = 1 + static_cast<Index>(rng.raw() % 8);
    const Index r = static_cast<Index>(rng.raw() % 4);
    TokenGrid grid = TokenGrid::seeded(H, W, D, rng);
    ProjectionSet proj = seeded_proj(D, r, rng, 0.8);
    RoutingField field = compute_affinities(grid, proj, r);
    TokenGrid direct = route_tokens(grid, field, proj);
    TokenGrid via = route_via_matrix(grid, routing_matrix(field, proj));
    CHECK(max_abs(direct.features - via.features) <= 1e-12);
  }

  SeededRng rng(7777);
  TokenGrid tiny = TokenGrid::seeded(2, 2, 3, rng);
  ProjectionSet proj = seeded_proj(3, 3, rng, 1.0);
  RoutingField field = compute_affinities(tiny, proj, 3);
  TokenGrid direct = route_tokens(tiny, field, proj);
  TokenGrid via = route_via_matrix(tiny, routing_matrix(field, proj));
  CHECK(max_abs(direct.features - via.features) <= 1e-12);
}

TEST_CASE("uniform affinities at an interior token give zero displacement") {
  SeededRng rng(10);
  TokenGrid grid(5, 5, 2);
  ProjectionSet proj = ProjectionSet::seeded(2, 2, 2, 1, 1, rng, 0.0, 0.0);
  RoutingField field = compute_affinities(grid, proj, 1);
  Matrix delta = displacement_field(field, grid);
  const Index center = grid.flat(3, 3);
  CHECK(std::abs(delta(center, 0)) <= 1e-15);
  CHECK(std::abs(delta(center, 1)) <= 1e-15);
}

TEST_CASE("affinity concentrated on the right neighbor displaces by one lattice step") {
  TokenGrid grid(3, 3, 1);
  RoutingField field;
  field.radius = 1;
  field.neighbors.resize(9, 9);
  field.scores = Matrix::Zero(9, 9);
  field.affinities = Matrix::Zero(9, 9);
  for (Index i = 0; i < 9; ++i) {
    auto cs = candidate_set(grid.coord(i), 1, 3, 3);
    for (Index s = 0; s < 9; ++s) {
      field.neighbors(i, s) = grid.flat(cs[static_cast<std::size_t>(s)].first,
                                        cs[static_cast<std::size_t>(s)].second);
    }
    field.affinities(i, 5) = 1.0;  // offset (0, +1)
  }
  Matrix delta = displacement_field(field, grid);
  const Index center = grid.flat(2, 2);
  CHECK(delta(center, 0) == doctest::Approx(1.0).epsilon(1e-14));  // one step right = +1.0 here
  CHECK(delta(center, 1) == doctest::Approx(0.0).epsilon(1e-14));
  const Index right_edge = grid.flat(2, 3);
  CHECK(delta(right_edge, 0) == doctest::Approx(0.0).epsilon(1e-14));  // clamped onto itself
}

TEST_CASE("displacement matches a direct weighted-sum oracle and stays in the domain") {
  std::uint64_t seed = 1100;
  for (int trial = 0; trial < 10; ++trial) {
    SeededRng rng(seed++);
    const Index H = 2 + static_cast<Index>(rng.raw() % 5);
    const Index W = 2 + static_cast<Index>(rng.raw() % 5);
    TokenGrid grid = TokenGrid::seeded(H, W, 3, rng);
    ProjectionSet proj = seeded_proj(3, 1, rng, 0.3);
    RoutingField field = compute_affinities(grid, proj, 1);
    Matrix phat = expected_positions(field, grid);
    Matrix delta = displacement_field(field, grid);
    for (Index i = 0; i < grid.tokens(); ++i) {
      Eigen::Vector2d acc = Eigen::Vector2d::Zero();
      for (Index s = 0; s < 9; ++s) {
        acc += field.affinities(i, s) * grid.position(field.neighbors(i, s));
      }
      CHECK((phat.row(i).transpose() - acc).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((delta.row(i).transpose() - (acc - grid.position(i))).cwiseAbs().maxCoeff() <=
            1e-12);
      CHECK(phat.row(i).cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("multi_head_route with one head reproduces route_tokens bitwise") {
  SeededRng rng(12);
  TokenGrid grid = TokenGrid::seeded(4, 4, 4, rng);
  ProjectionSet proj = ProjectionSet::seeded(4, 4, 4, 1, 1, rng, 0.6);
  RoutingField field = compute_affinities(grid, proj, 1);
  CHECK(bitwise_equal(multi_head_route(grid, proj).features,
                      route_tokens(grid, field, proj).features));
}

TEST_CASE("multi_head_route matches a per-head loop oracle") {
  SeededRng rng(13);
  const Index D = 8, d = 8, dv = 8, Hd = 4, r = 1;
  TokenGrid grid = TokenGrid::seeded(3, 5, D, rng);
  ProjectionSet proj = ProjectionSet::seeded(D, d, dv, r, Hd, rng, 0.4);
  TokenGrid routed = multi_head_route(grid, proj);

  const Index dh = d / Hd, dvh = dv / Hd;
  Matrix mixed(grid.tokens(), dv);
  for (Index h = 0; h < Hd; ++h) {
    for (Index i = 0; i < grid.tokens(); ++i) {
      auto cs = candidate_set(grid.coord(i), r, grid.H, grid.W);
      std::vector<double> scores;
      for (std::size_t s = 0; s < cs.size(); ++s) {
        const Index j = grid.flat(cs[s].first, cs[s].second);
        const double qk = (grid.features.row(i) * proj.W_q.middleCols(h * dh, dh))
                              .dot(grid.features.row(j) * proj.W_k.middleCols(h * dh, dh));
        scores.push_back(qk / std::sqrt(static_cast<double>(dh)) +
                         proj.b_rel(static_cast<Index>(s)));
      }
      const double m = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (double& s : scores) {
        s = std::exp(s - m);
        z += s;
      }
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dvh);
      for (std::size_t s = 0; s < cs.size(); ++s) {
        const Index j = grid.flat(cs[s].first, cs[s].second);
        acc += (scores[s] / z) * (grid.features.row(j) * proj.W_v.middleCols(h * dvh, dvh));
      }
      mixed.block(i, h * dvh, 1, dvh) = acc;
    }
  }
  Matrix expect = grid.features + mixed * proj.W_o;
  CHECK(max_abs(routed.features - expect) <= 1e-12);
}

TEST_CASE("zeroing one head leaves the other head's message half intact") {
  SeededRng rng(14);
  const Index D = 4, Hd = 2, dvh = 2;
  TokenGrid grid = TokenGrid::seeded(3, 3, D, rng);
  ProjectionSet proj = ProjectionSet::seeded(D, 4, 4, 1, Hd, rng, 0.5);
  proj.W_o = Matrix::Identity(4, 4);

  ProjectionSet zeroed = proj;
  zeroed.W_q.leftCols(2).setZero();
  zeroed.W_k.leftCols(2).setZero();
  zeroed.W_v.leftCols(dvh).setZero();

  Matrix full = multi_head_route(grid, proj).features - grid.features;
  Matrix half = multi_head_route(grid, zeroed).features - grid.features;

  // Head 0 writes message columns 0..1, head 1 columns 2..3 (W_o = I).
  CHECK(max_abs(half.leftCols(dvh)) == 0.0);
  CHECK(max_abs(half.rightCols(dvh) - full.rightCols(dvh)) == 0.0);
}

TEST_CASE("multi_head_route rejects indivisible head splits") {
  SeededRng rng(15);
  TokenGrid grid = TokenGrid::seeded(2, 2, 3, rng);
  CHECK_THROWS_AS(ProjectionSet::seeded(3, 3, 3, 1, 2, rng, 0.1), ParameterError);
  ProjectionSet proj = ProjectionSet::seeded(3, 4, 4, 1, 2, rng, 0.1);
  proj.W_q.conservativeResize(3, 3);
  proj.W_k.conservativeResize(3, 3);
  CHECK_THROWS_AS(multi_head_route(grid, proj), ParameterError);
}

TEST_CASE("bilinear sampling trivial cases") {
  SeededRng rng(16);
  TokenGrid grid = TokenGrid::seeded(3, 3, 2, rng);
  TokenGrid same = bilinear_offset_scan(grid, Matrix::Zero(9, 2));
  CHECK(max_abs(same.features - grid.features) == 0.0);

  TokenGrid strip = TokenGrid::seeded(1, 3, 2, rng);
  Matrix offsets = Matrix::Zero(3, 2);
  offsets(0, 0) = 0.5;  // halfway from column 1 toward column 2
  TokenGrid blend = bilinear_offset_scan(strip, offsets);
  Matrix expect = 0.5 * strip.features.row(0) + 0.5 * strip.features.row(1);
  CHECK(max_abs(blend.features.row(0) - expect) <= 1e-15);
}

TEST_CASE("bilinear sampling matches a direct four-corner oracle") {
  SeededRng rng(17);
  TokenGrid grid = TokenGrid::seeded(4, 5, 3, rng);
  Matrix offsets = uniform_matrix(rng, grid.tokens(), 2, 0.9);
  TokenGrid sampled = bilinear_offset_scan(grid, offsets);
  for (Index i = 0; i < grid.tokens(); ++i) {
    Eigen::Vector2d p = grid.position(i) + offsets.row(i).transpose();
    const double px = std::clamp(p.x(), -1.0, 1.0);
    const double py = std::clamp(p.y(), -1.0, 1.0);
    const double cc = (px + 1.0) * 0.5 * 4.0 + 1.0;
    const double cr = (py + 1.0) * 0.5 * 3.0 + 1.0;
    const Index c0 = static_cast<Index>(std::floor(cc));
    const Index r0 = static_cast<Index>(std::floor(cr));
    const Index c1 = std::min<Index>(c0 + 1, 5);
    const Index r1 = std::min<Index>(r0 + 1, 4);
    const double fx = cc - static_cast<double>(c0);
    const double fy = cr - static_cast<double>(r0);
    Eigen::RowVectorXd expect =
        (1 - fy) * (1 - fx) * grid.features.row((r0 - 1) * 5 + (c0 - 1)) +
        (1 - fy) * fx * grid.features.row((r0 - 1) * 5 + (c1 - 1)) +
        fy * (1 - fx) * grid.features.row((r1 - 1) * 5 + (c0 - 1)) +
        fy * fx * grid.features.row((r1 - 1) * 5 + (c1 - 1));
    CHECK((sampled.features.row(i) - expect).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("route_jvp trivial cases") {
  SeededRng rng(18);
  TokenGrid grid = TokenGrid::seeded(3, 3, 2, rng);
  Matrix dir = uniform_matrix(rng, 9, 2, 1.0);

  ProjectionSet contained = seeded_proj(2, 1, rng, 0.0);
  CHECK(bitwise_equal(route_jvp(grid, contained, dir).features, dir));

  ProjectionSet proj = seeded_proj(2, 1, rng, 0.5);
  CHECK(max_abs(route_jvp(grid, proj, Matrix::Zero(9, 2)).features) == 0.0);
}

TEST_CASE("route_jvp matches central finite differences") {
  std::uint64_t seed = 1800;
  const double h = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    SeededRng rng(seed++);
    TokenGrid grid = TokenGrid::seeded(3, 3, 2, rng);
    ProjectionSet proj = seeded_proj(2, 1, rng, 0.5);
    Matrix dir = uniform_matrix(rng, 9, 2, 1.0);

    Matrix jvp = route_jvp(grid, proj, dir).features;

    TokenGrid plus(3, 3, Matrix(grid.features + h * dir));
    TokenGrid minus(3, 3, Matrix(grid.features - h * dir));
    Matrix f_plus = route_tokens(plus, compute_affinities(plus, proj, 1), proj).features;
    Matrix f_minus = route_tokens(minus, compute_affinities(minus, proj, 1), proj).features;
    Matrix fd = (f_plus - f_minus) / (2.0 * h);

    const double rel = max_abs(jvp - fd) / std::max(1e-12, max_abs(fd));
    CHECK(rel <= 1e-5);
  }
}

TEST_CASE("messages only depend on tokens within the window") {
  SeededRng rng(19);
  TokenGrid grid = TokenGrid::seeded(5, 5, 3, rng);
  ProjectionSet proj = seeded_proj(3, 1, rng, 0.5);
  RoutingField field = compute_affinities(grid, proj, 1);
  Matrix base_messages = route_messages(grid, field, proj);

  const Index j = grid.flat(3, 3);
  TokenGrid bumped = grid;
  bumped.features.row(j).array() += 0.5;
  RoutingField bumped_field = compute_affinities(bumped, proj, 1);
  Matrix bumped_messages = route_messages(bumped, bumped_field, proj);

  for (Index i = 0; i < grid.tokens(); ++i) {
    auto gi = grid.coord(i);
    const Index cheb = std::max(std::abs(gi.first - 3), std::abs(gi.second - 3));
    const bool changed = (base_messages.row(i) - bumped_messages.row(i)).cwiseAbs().maxCoeff() > 0;
    if (cheb <= 1) {
      CHECK(changed);
    } else {
      CHECK_FALSE(changed);
    }
  }
}

TEST_CASE("routing preserves grid shape and affinity rows are stochastic") {
  std::uint64_t seed = 2000;
  for (int trial = 0; trial < 10; ++trial) {
    SeededRng rng(seed++);
    const Index H = 1 + static_cast<Index>(rng.raw() % 6);
    const Index W = 1 + static_cast<Index>(rng.raw() % 6);
    const Index D = 1 + static_cast<Index>(rng.raw() % 5);
    const Index r = static_cast<Index>(rng.raw() % 3);
    TokenGrid grid = TokenGrid::seeded(H, W, D, rng);
    ProjectionSet proj = seeded_proj(D, r, rng, 0.5);
    RoutingField field = compute_affinities(grid, proj, r);
    TokenGrid routed = route_tokens(grid, field, proj);
    CHECK(routed.H == H);
    CHECK(routed.W == W);
    CHECK(routed.channels() == D);
    for (Index i = 0; i < grid.tokens(); ++i) {
      CHECK(field.affinities.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(field.affinities.row(i).minCoeff() >= 0.0);
    }
  }
}
