#pragma once

#include <limits>
#include <vector>

#include "gsm/graphscan.hpp"
#include "gsm/selective_scan.hpp"

namespace gsm {

// Base and routed scans of the same grid under one core, with all per-token
// parameter and state differences. Positions follow the 1-based scan
// indexing; storage is 0-based.
struct RoutedScanResult {
  DiscretizedSequence base;
  DiscretizedSequence routed;
  Matrix base_inputs;    // L x D
  Matrix routed_inputs;  // L x D
  Matrix messages;       // L x D
  RoutingField field;
  Matrix M;  // W_v W_o
  std::vector<Array2D> dAbar;
  std::vector<Array2D> dBbar;
  std::vector<Array2D> dH;
  Matrix dc;  // L x N_s
  Matrix dy;  // L x D
};

RoutedScanResult routed_scan(const SsmCore& core, const TokenGrid& grid,
                             const ProjectionSet& proj, Index r);

// The three state pathways: direct value injection, write modulation, and
// transition modulation. Their sum reproduces dH exactly (no smallness
// assumption on the messages).
struct StateDecomposition {
  std::vector<Array2D> value_injection;
  std::vector<Array2D> write_modulation;
  std::vector<Array2D> transition_modulation;
  std::vector<Array2D> total;
};

StateDecomposition exact_state_decomposition(const RoutedScanResult& res);

struct OutputDecomposition {
  Matrix state_term;    // <dH_t, c'_t>
  Matrix readout_term;  // <H_t, dc_t>
  Matrix total;
};

OutputDecomposition exact_output_decomposition(const RoutedScanResult& res,
                                               const StateDecomposition& dec);

// Input-to-output kernel of the routed scan; zero for i > t. t, i are
// 1-based scan positions.
Vector kernel_apply(const RoutedScanResult& res, Index t, Index i, const Vector& z);

// The routed-message output contribution evaluated in two summation orders
// plus the value-injection pathway contracted with the routed readout.
struct KernelSums {
  Matrix per_position;  // sum over i of K_{t,i}(m_i)
  Matrix per_source;    // regrouped over window sources j
  Matrix pathway;
};

KernelSums local_global_kernel_sum(const RoutedScanResult& res, const RoutingField& field);

struct BoundReport {
  double rho = 0.0;
  double B_max = 0.0;
  double C_max = 0.0;
  Index pairs = 0;
  Index violations = 0;
  double max_ratio = 0.0;  // worst lhs/rhs over all (t, i, z)
  double min_margin = std::numeric_limits<double>::infinity();  // smallest rhs - lhs
};

BoundReport attenuation_bound_check(const RoutedScanResult& res, const std::vector<Vector>& zs);

// Closed-form finite-horizon states under externally supplied
// token-independent coefficients.
struct ReachabilityResult {
  Array2D base;    // H_L from the raw inputs
  Array2D routed;  // H_L from inputs plus routed messages
};

ReachabilityResult frozen_reachability(const std::vector<Array2D>& Abar,
                                       const std::vector<Array2D>& Bbar, const TokenGrid& grid,
                                       const RoutingField& field, const Matrix& M);

struct ContainmentReport {
  bool inputs_bitwise = false;
  bool outputs_bitwise = false;
  double max_output_diff = 0.0;
};

ContainmentReport containment_check(const SsmCore& core, const TokenGrid& grid,
                                    const ProjectionSet& proj);

}  // namespace gsm
