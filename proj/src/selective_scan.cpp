#include "gsm/selective_scan.hpp"

#include <cmath>

namespace gsm {

namespace {

void check_projection_shapes(const Array2D& A, const Matrix& W_delta, const Vector& bias_delta,
                             const Matrix& W_b, const Matrix& W_c) {
  const Index D = A.rows(), Ns = A.cols();
  if (D <= 0 || Ns <= 0) throw ShapeError("SsmCore: A must be a nonempty D x N_s array");
  if (W_delta.rows() != D || W_delta.cols() != D) {
    throw ShapeError("SsmCore: W_delta must be " + shape_str(D, D) + ", got " +
                     shape_str(W_delta.rows(), W_delta.cols()));
  }
  if (bias_delta.size() != D) {
    throw ShapeError("SsmCore: bias_delta must have length " + std::to_string(D));
  }
  if (W_b.rows() != D || W_b.cols() != Ns || W_c.rows() != D || W_c.cols() != Ns) {
    throw ShapeError("SsmCore: W_b and W_c must be " + shape_str(D, Ns));
  }
}

void check_negative_transition(const Array2D& A) {
  if ((A >= 0.0).any()) {
    throw ParameterError("SsmCore: every entry of A must be strictly negative");
  }
}

}  // namespace

SsmCore::SsmCore(Array2D A, Matrix W_delta, Vector bias_delta, Matrix W_b, Matrix W_c)
    : A_(std::move(A)),
      W_delta_(std::move(W_delta)),
      bias_delta_(std::move(bias_delta)),
      W_b_(std::move(W_b)),
      W_c_(std::move(W_c)) {
  check_projection_shapes(A_, W_delta_, bias_delta_, W_b_, W_c_);
  check_negative_transition(A_);
}

SsmCore SsmCore::seeded(Index D, Index Ns, SeededRng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(D));
  Matrix W_delta = uniform_matrix(rng, D, D, scale);
  Vector bias_delta = uniform_vector(rng, D, 0.5);
  Matrix W_b = uniform_matrix(rng, D, Ns, scale);
  Matrix W_c = uniform_matrix(rng, D, Ns, scale);
  return SsmCore(default_transition(D, Ns), std::move(W_delta), std::move(bias_delta),
                 std::move(W_b), std::move(W_c));
}

SsmCore SsmCore::frozen(Array2D A, SelectiveParams params) {
  const Index D = A.rows(), Ns = A.cols();
  if (params.delta.size() != D || params.b.size() != Ns || params.c.size() != Ns) {
    throw ShapeError("SsmCore::frozen: params do not match the transition shape " +
                     shape_str(D, Ns));
  }
  if ((params.delta <= 0.0).any()) {
    throw ParameterError("SsmCore::frozen: delta entries must be strictly positive");
  }
  SsmCore core(std::move(A), Matrix::Zero(D, D), Vector::Zero(D), Matrix::Zero(D, Ns),
               Matrix::Zero(D, Ns));
  core.frozen_ = std::move(params);
  return core;
}

Array2D SsmCore::default_transition(Index D, Index Ns) {
  Array2D A(D, Ns);
  for (Index n = 0; n < Ns; ++n) A.col(n) = -static_cast<double>(n + 1);
  return A;
}

SelectiveParams generate_params(const SsmCore& core, const Vector& u) {
  if (u.size() != core.channels()) {
    throw ShapeError("generate_params: token length " + std::to_string(u.size()) +
                     " does not match D = " + std::to_string(core.channels()));
  }
  if (core.frozen_) return *core.frozen_;
  SelectiveParams p;
  Vector pre = core.W_delta_.transpose() * u + core.bias_delta_;
  p.delta = pre.array().unaryExpr([](double x) { return softplus(x); });
  p.b = core.W_b_.transpose() * u;
  p.c = core.W_c_.transpose() * u;
  return p;
}

std::pair<Array2D, Array2D> discretize(const SsmCore& core, const SelectiveParams& p) {
  if (p.delta.size() != core.channels() || p.b.size() != core.state_dim()) {
    throw ShapeError("discretize: params do not match the core shape");
  }
  if ((p.delta <= 0.0).any()) {
    throw ParameterError("discretize: delta entries must be strictly positive");
  }
  Array2D Abar = (core.A().colwise() * p.delta).exp();
  Array2D Bbar = (p.delta.matrix() * p.b.transpose()).array();
  return {std::move(Abar), std::move(Bbar)};
}

namespace {

DiscretizedSequence discretize_sequence(const SsmCore& core, const Matrix& U) {
  const Index L = U.rows(), D = core.channels(), Ns = core.state_dim();
  if (L < 1) throw ShapeError("scan: sequence must have at least one token");
  if (U.cols() != D) {
    throw ShapeError("scan: token width " + std::to_string(U.cols()) +
                     " does not match D = " + std::to_string(D));
  }
  DiscretizedSequence seq;
  seq.L = L;
  seq.D = D;
  seq.Ns = Ns;
  seq.Abar.reserve(L);
  seq.Bbar.reserve(L);
  seq.states.reserve(L);
  seq.outputs.resize(L, D);
  seq.deltas.resize(L, D);
  seq.bs.resize(L, Ns);
  seq.cs.resize(L, Ns);
  for (Index t = 0; t < L; ++t) {
    SelectiveParams p = generate_params(core, U.row(t).transpose());
    auto [Abar, Bbar] = discretize(core, p);
    seq.Abar.push_back(std::move(Abar));
    seq.Bbar.push_back(std::move(Bbar));
    seq.deltas.row(t) = p.delta.matrix().transpose();
    seq.bs.row(t) = p.b.transpose();
    seq.cs.row(t) = p.c.transpose();
  }
  return seq;
}

void readout(DiscretizedSequence& seq) {
  for (Index t = 0; t < seq.L; ++t) {
    seq.outputs.row(t) =
        (seq.states[static_cast<std::size_t>(t)].matrix() * seq.cs.row(t).transpose())
            .transpose();
  }
}

}  // namespace

DiscretizedSequence recurrent_scan(const SsmCore& core, const Matrix& U) {
  DiscretizedSequence seq = discretize_sequence(core, U);
  Array2D H = Array2D::Zero(seq.D, seq.Ns);
  for (Index t = 0; t < seq.L; ++t) {
    const auto& Abar = seq.Abar[static_cast<std::size_t>(t)];
    const auto& Bbar = seq.Bbar[static_cast<std::size_t>(t)];
    H = Abar * H + Bbar.colwise() * U.row(t).transpose().array();
    seq.states.push_back(H);
  }
  readout(seq);
  return seq;
}

Matrix scan_outputs(const SsmCore& core, const Matrix& U) {
  const Index L = U.rows(), D = core.channels(), Ns = core.state_dim();
  if (L < 1) throw ShapeError("scan: sequence must have at least one token");
  if (U.cols() != D) {
    throw ShapeError("scan: token width " + std::to_string(U.cols()) +
                     " does not match D = " + std::to_string(D));
  }
  Matrix Y(L, D);
  Array2D H = Array2D::Zero(D, Ns);
  for (Index t = 0; t < L; ++t) {
    SelectiveParams p = generate_params(core, U.row(t).transpose());
    auto [Abar, Bbar] = discretize(core, p);
    H = Abar * H + Bbar.colwise() * U.row(t).transpose().array();
    Y.row(t) = (H.matrix() * p.c).transpose();
  }
  return Y;
}

ScanPair scan_identity(Index D, Index Ns) {
  return {Array2D::Ones(D, Ns), Array2D::Zero(D, Ns)};
}

ScanPair scan_compose(const ScanPair& earlier, const ScanPair& later) {
  return {later.A * earlier.A, later.A * earlier.U + later.U};
}

DiscretizedSequence prefix_scan(const SsmCore& core, const Matrix& U) {
  DiscretizedSequence seq = discretize_sequence(core, U);
  const Index L = seq.L;

  Index padded = 1;
  while (padded < L) padded *= 2;

  std::vector<ScanPair> work;
  work.reserve(static_cast<std::size_t>(padded));
  for (Index t = 0; t < L; ++t) {
    const auto& Bbar = seq.Bbar[static_cast<std::size_t>(t)];
    work.push_back({seq.Abar[static_cast<std::size_t>(t)],
                    Bbar.colwise() * U.row(t).transpose().array()});
  }
  for (Index t = L; t < padded; ++t) work.push_back(scan_identity(seq.D, seq.Ns));

  // Blelloch up/down sweep; compose(earlier, later) keeps sequence order.
  for (Index stride = 1; stride < padded; stride *= 2) {
    for (Index k = 0; k + 2 * stride <= padded; k += 2 * stride) {
      auto& right = work[static_cast<std::size_t>(k + 2 * stride - 1)];
      right = scan_compose(work[static_cast<std::size_t>(k + stride - 1)], right);
    }
  }
  work[static_cast<std::size_t>(padded - 1)] = scan_identity(seq.D, seq.Ns);
  for (Index stride = padded / 2; stride >= 1; stride /= 2) {
    for (Index k = 0; k + 2 * stride <= padded; k += 2 * stride) {
      ScanPair left = work[static_cast<std::size_t>(k + stride - 1)];
      auto& right = work[static_cast<std::size_t>(k + 2 * stride - 1)];
      work[static_cast<std::size_t>(k + stride - 1)] = right;
      right = scan_compose(right, left);
    }
  }

  // work[t] now holds the exclusive composition P_{t-1} o ... o P_1; one more
  // composition with P_t gives the inclusive prefix, whose offset term is H_t
  // under the zero initial state.
  for (Index t = 0; t < L; ++t) {
    const auto& Bbar = seq.Bbar[static_cast<std::size_t>(t)];
    ScanPair token{seq.Abar[static_cast<std::size_t>(t)],
                   Bbar.colwise() * U.row(t).transpose().array()};
    ScanPair inclusive = scan_compose(work[static_cast<std::size_t>(t)], token);
    seq.states.push_back(std::move(inclusive.U));
  }
  readout(seq);
  return seq;
}

Array2D survival_factor(const DiscretizedSequence& seq, Index t, Index i) {
  if (i < 1 || t > seq.L || i > t) {
    throw IndexError("survival_factor: need 1 <= i <= t <= L, got i = " + std::to_string(i) +
                     ", t = " + std::to_string(t) + ", L = " + std::to_string(seq.L));
  }
  Array2D G = Array2D::Ones(seq.D, seq.Ns);
  for (Index j = i + 1; j <= t; ++j) G *= seq.Abar[static_cast<std::size_t>(j - 1)];
  return G;
}

Array2D unrolled_state(const SsmCore& core, const Matrix& U, Index t) {
  if (t < 1 || t > U.rows()) {
    throw IndexError("unrolled_state: t = " + std::to_string(t) + " out of range for L = " +
                     std::to_string(U.rows()));
  }
  const Index D = core.channels(), Ns = core.state_dim();
  Array2D H = Array2D::Zero(D, Ns);
  Array2D G = Array2D::Ones(D, Ns);
  for (Index i = t; i >= 1; --i) {
    SelectiveParams p = generate_params(core, U.row(i - 1).transpose());
    auto [Abar, Bbar] = discretize(core, p);
    H += G * (Bbar.colwise() * U.row(i - 1).transpose().array());
    G *= Abar;
  }
  return H;
}

}  // namespace gsm
