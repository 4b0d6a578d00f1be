#include "gsm/routed_analysis.hpp"

#include <cmath>
#include <cstring>

namespace gsm {

RoutedScanResult routed_scan(const SsmCore& core, const TokenGrid& grid,
                             const ProjectionSet& proj, Index r) {
  if (core.channels() != grid.channels()) {
    throw ShapeError("routed_scan: core expects " + std::to_string(core.channels()) +
                     " channels, grid has " + std::to_string(grid.channels()));
  }
  RoutedScanResult res;
  res.field = compute_affinities(grid, proj, r);
  res.messages = route_messages(grid, res.field, proj);
  res.base_inputs = grid.features;
  res.routed_inputs = grid.features + res.messages;
  res.M = proj.W_v * proj.W_o;
  res.base = recurrent_scan(core, res.base_inputs);
  res.routed = recurrent_scan(core, res.routed_inputs);

  const Index L = res.base.L;
  res.dAbar.reserve(L);
  res.dBbar.reserve(L);
  res.dH.reserve(L);
  for (Index t = 0; t < L; ++t) {
    const auto u = static_cast<std::size_t>(t);
    res.dAbar.push_back(res.routed.Abar[u] - res.base.Abar[u]);
    res.dBbar.push_back(res.routed.Bbar[u] - res.base.Bbar[u]);
    res.dH.push_back(res.routed.states[u] - res.base.states[u]);
  }
  res.dc = res.routed.cs - res.base.cs;
  res.dy = res.routed.outputs - res.base.outputs;
  return res;
}

StateDecomposition exact_state_decomposition(const RoutedScanResult& res) {
  const Index L = res.base.L, D = res.base.D, Ns = res.base.Ns;
  StateDecomposition dec;
  dec.value_injection.reserve(L);
  dec.write_modulation.reserve(L);
  dec.transition_modulation.reserve(L);
  dec.total.reserve(L);
  for (Index t = 1; t <= L; ++t) {
    Array2D vi = Array2D::Zero(D, Ns);
    Array2D wm = Array2D::Zero(D, Ns);
    Array2D tm = Array2D::Zero(D, Ns);
    Array2D G = Array2D::Ones(D, Ns);
    for (Index i = t; i >= 1; --i) {
      const auto u = static_cast<std::size_t>(i - 1);
      vi += G * (res.routed.Bbar[u].colwise() * res.messages.row(i - 1).transpose().array());
      wm += G * (res.dBbar[u].colwise() * res.base_inputs.row(i - 1).transpose().array());
      if (i > 1) tm += G * (res.dAbar[u] * res.base.states[u - 1]);
      G *= res.routed.Abar[u];
    }
    dec.value_injection.push_back(vi);
    dec.write_modulation.push_back(wm);
    dec.transition_modulation.push_back(tm);
    dec.total.push_back(vi + wm + tm);
  }
  return dec;
}

OutputDecomposition exact_output_decomposition(const RoutedScanResult& res,
                                               const StateDecomposition& dec) {
  const Index L = res.base.L, D = res.base.D;
  if (static_cast<Index>(dec.total.size()) != L) {
    throw ShapeError("exact_output_decomposition: decomposition length does not match the run");
  }
  OutputDecomposition out;
  out.state_term.resize(L, D);
  out.readout_term.resize(L, D);
  for (Index t = 0; t < L; ++t) {
    const auto u = static_cast<std::size_t>(t);
    out.state_term.row(t) =
        (dec.total[u].matrix() * res.routed.cs.row(t).transpose()).transpose();
    out.readout_term.row(t) =
        (res.base.states[u].matrix() * res.dc.row(t).transpose()).transpose();
  }
  out.total = out.state_term + out.readout_term;
  return out;
}

Vector kernel_apply(const RoutedScanResult& res, Index t, Index i, const Vector& z) {
  const Index L = res.routed.L, D = res.routed.D;
  if (t < 1 || t > L || i < 1 || i > L) {
    throw IndexError("kernel_apply: positions must lie in 1.." + std::to_string(L) + ", got t = " +
                     std::to_string(t) + ", i = " + std::to_string(i));
  }
  if (z.size() != D) {
    throw ShapeError("kernel_apply: z has length " + std::to_string(z.size()) + ", expected " +
                     std::to_string(D));
  }
  if (i > t) return Vector::Zero(D);
  Array2D G = survival_factor(res.routed, t, i);
  Array2D weighted =
      (G * res.routed.Bbar[static_cast<std::size_t>(i - 1)]).colwise() * z.array();
  return weighted.matrix() * res.routed.cs.row(t - 1).transpose();
}

KernelSums local_global_kernel_sum(const RoutedScanResult& res, const RoutingField& field) {
  const Index L = res.base.L, D = res.base.D;
  if (field.neighbors.rows() != L) {
    throw ShapeError("local_global_kernel_sum: field and scan token counts differ");
  }
  KernelSums sums;
  sums.per_position = Matrix::Zero(L, D);
  sums.per_source = Matrix::Zero(L, D);
  sums.pathway = Matrix::Zero(L, D);

  for (Index t = 1; t <= L; ++t) {
    for (Index i = 1; i <= t; ++i) {
      sums.per_position.row(t - 1) +=
          kernel_apply(res, t, i, res.messages.row(i - 1).transpose()).transpose();
    }
  }

  // Regrouped order: iterate window sources j, then the tokens i that pull
  // from j, applying the kernel to x_j M one slot at a time.
  std::vector<std::vector<std::pair<Index, Index>>> pulled_by(
      static_cast<std::size_t>(L));
  for (Index i = 0; i < L; ++i) {
    for (Index slot = 0; slot < field.neighbors.cols(); ++slot) {
      pulled_by[static_cast<std::size_t>(field.neighbors(i, slot))].push_back({i, slot});
    }
  }
  for (Index t = 1; t <= L; ++t) {
    for (Index j = 0; j < L; ++j) {
      Vector xjM = (res.base_inputs.row(j) * res.M).transpose();
      for (auto [i, slot] : pulled_by[static_cast<std::size_t>(j)]) {
        if (i + 1 > t) continue;
        sums.per_source.row(t - 1) +=
            field.affinities(i, slot) * kernel_apply(res, t, i + 1, xjM).transpose();
      }
    }
  }

  StateDecomposition dec = exact_state_decomposition(res);
  for (Index t = 1; t <= L; ++t) {
    sums.pathway.row(t - 1) = (dec.value_injection[static_cast<std::size_t>(t - 1)].matrix() *
                               res.routed.cs.row(t - 1).transpose())
                                  .transpose();
  }
  return sums;
}

BoundReport attenuation_bound_check(const RoutedScanResult& res, const std::vector<Vector>& zs) {
  const Index L = res.routed.L, Ns = res.routed.Ns;
  BoundReport report;
  for (const auto& Abar : res.routed.Abar) report.rho = std::max(report.rho, Abar.abs().maxCoeff());
  for (const auto& Bbar : res.routed.Bbar) {
    report.B_max = std::max(report.B_max, Bbar.abs().maxCoeff());
  }
  report.C_max = res.routed.cs.cwiseAbs().maxCoeff();
  if (report.rho >= 1.0) {
    throw NumericError("attenuation_bound_check: routed transitions reach " +
                       std::to_string(report.rho) + ", the bound needs rho < 1");
  }
  for (const Vector& z : zs) {
    const double z_inf = z.cwiseAbs().maxCoeff();
    for (Index t = 1; t <= L; ++t) {
      for (Index i = 1; i <= t; ++i) {
        const double lhs = kernel_apply(res, t, i, z).cwiseAbs().maxCoeff();
        const double rhs = static_cast<double>(Ns) * report.B_max * report.C_max *
                           std::pow(report.rho, static_cast<double>(t - i)) * z_inf;
        report.pairs += 1;
        // Tiny multiplicative headroom: lhs and rhs are rounded independently.
        if (lhs > rhs * (1.0 + 1e-12)) report.violations += 1;
        if (rhs > 0.0) report.max_ratio = std::max(report.max_ratio, lhs / rhs);
        report.min_margin = std::min(report.min_margin, rhs - lhs);
      }
    }
  }
  return report;
}

ReachabilityResult frozen_reachability(const std::vector<Array2D>& Abar,
                                       const std::vector<Array2D>& Bbar, const TokenGrid& grid,
                                       const RoutingField& field, const Matrix& M) {
  const Index L = grid.tokens(), D = grid.channels();
  if (static_cast<Index>(Abar.size()) != L || static_cast<Index>(Bbar.size()) != L) {
    throw ShapeError("frozen_reachability: coefficient sequences must have one entry per token");
  }
  if (field.neighbors.rows() != L) {
    throw ShapeError("frozen_reachability: field token count does not match the grid");
  }
  if (M.rows() != D || M.cols() != D) {
    throw ShapeError("frozen_reachability: value map must be " + shape_str(D, D));
  }
  for (const auto& A : Abar) {
    if (A.rows() != D) throw ShapeError("frozen_reachability: coefficient channel mismatch");
  }
  const Index Ns = Abar.front().cols();

  Matrix routed_inputs = grid.features;
  for (Index i = 0; i < L; ++i) {
    for (Index slot = 0; slot < field.neighbors.cols(); ++slot) {
      routed_inputs.row(i) +=
          field.affinities(i, slot) * (grid.features.row(field.neighbors(i, slot)) * M);
    }
  }

  auto closed_form = [&](const Matrix& inputs) {
    Array2D H = Array2D::Zero(D, Ns);
    Array2D G = Array2D::Ones(D, Ns);
    for (Index i = L; i >= 1; --i) {
      const auto u = static_cast<std::size_t>(i - 1);
      H += G * (Bbar[u].colwise() * inputs.row(i - 1).transpose().array());
      G *= Abar[u];
    }
    return H;
  };
  return {closed_form(grid.features), closed_form(routed_inputs)};
}

ContainmentReport containment_check(const SsmCore& core, const TokenGrid& grid,
                                    const ProjectionSet& proj) {
  RoutingField field = compute_affinities(grid, proj, proj.radius);
  TokenGrid routed = route_tokens(grid, field, proj);
  Matrix base_outputs = scan_outputs(core, grid.features);
  Matrix routed_outputs = scan_outputs(core, routed.features);

  ContainmentReport report;
  report.inputs_bitwise =
      std::memcmp(grid.features.data(), routed.features.data(),
                  sizeof(double) * static_cast<std::size_t>(grid.features.size())) == 0;
  report.outputs_bitwise =
      std::memcmp(base_outputs.data(), routed_outputs.data(),
                  sizeof(double) * static_cast<std::size_t>(base_outputs.size())) == 0;
  report.max_output_diff = (base_outputs - routed_outputs).cwiseAbs().maxCoeff();
  return report;
}

}  // namespace gsm
