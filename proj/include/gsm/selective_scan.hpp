#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "gsm/tensor.hpp"
#include "gsm/types.hpp"

namespace gsm {

struct SelectiveParams {
  Array1D delta;  // D, strictly positive
  Vector b;       // N_s
  Vector c;       // N_s
};

// Static scan parameters plus the projections that generate the selective
// quantities from each token. A frozen core returns stored constants from
// generate_params regardless of the token, which is how token-independent
// coefficients are modeled.
class SsmCore {
 public:
  SsmCore(Array2D A, Matrix W_delta, Vector bias_delta, Matrix W_b, Matrix W_c);
  static SsmCore seeded(Index D, Index Ns, SeededRng& rng);
  static SsmCore frozen(Array2D A, SelectiveParams params);

  Index channels() const { return A_.rows(); }
  Index state_dim() const { return A_.cols(); }
  const Array2D& A() const { return A_; }
  const Matrix& W_delta() const { return W_delta_; }
  const Vector& bias_delta() const { return bias_delta_; }
  const Matrix& W_b() const { return W_b_; }
  const Matrix& W_c() const { return W_c_; }
  bool is_frozen() const { return frozen_.has_value(); }

  // Default transition parameter: A[d,n] = -(n+1), strictly negative.
  static Array2D default_transition(Index D, Index Ns);

  friend SelectiveParams generate_params(const SsmCore& core, const Vector& u);

 private:
  Array2D A_;
  Matrix W_delta_;
  Vector bias_delta_;
  Matrix W_b_;
  Matrix W_c_;
  std::optional<SelectiveParams> frozen_;
};

struct DiscretizedSequence {
  Index L = 0, D = 0, Ns = 0;
  std::vector<Array2D> Abar;    // L entries of D x N_s
  std::vector<Array2D> Bbar;    // L entries of D x N_s
  std::vector<Array2D> states;  // H_1..H_L, D x N_s each
  Matrix outputs;               // L x D
  Matrix deltas;                // L x D
  Matrix bs;                    // L x N_s
  Matrix cs;                    // L x N_s
};

SelectiveParams generate_params(const SsmCore& core, const Vector& u);
std::pair<Array2D, Array2D> discretize(const SsmCore& core, const SelectiveParams& p);

DiscretizedSequence recurrent_scan(const SsmCore& core, const Matrix& U);
DiscretizedSequence prefix_scan(const SsmCore& core, const Matrix& U);

// Outputs only, no per-token recording; same arithmetic as recurrent_scan.
Matrix scan_outputs(const SsmCore& core, const Matrix& U);

// Positions t, i are 1-based to match the recurrence indexing.
Array2D survival_factor(const DiscretizedSequence& seq, Index t, Index i);
Array2D unrolled_state(const SsmCore& core, const Matrix& U, Index t);

// Affine pair carried by the prefix scan: state map H -> A (.) H + U.
struct ScanPair {
  Array2D A;
  Array2D U;
};

ScanPair scan_identity(Index D, Index Ns);
ScanPair scan_compose(const ScanPair& earlier, const ScanPair& later);

}  // namespace gsm
