#include "gsm/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gsm/routed_analysis.hpp"

namespace gsm {

namespace {

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) ==
             0;
}

double max_abs_matrix(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

void validate_options(const VerifyOptions& opt) {
  if (opt.height <= 0 || opt.width <= 0) throw ParameterError("grid extents must be positive");
  if (opt.channels <= 0) throw ParameterError("channels must be positive");
  if (opt.radius < 0) throw ParameterError("radius must be nonnegative");
  if (opt.heads < 1 || opt.channels % opt.heads != 0)
    throw ParameterError("channels must be divisible by the head count");
  if (opt.tolerance < 0.0) throw ParameterError("tolerance must be nonnegative");
}

}  // namespace

bool VerificationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.passed; });
}

const CheckResult* VerificationReport::first_failure() const {
  for (const CheckResult& c : checks)
    if (!c.passed) return &c;
  return nullptr;
}

VerificationReport run_verification(const VerifyOptions& opt) {
  validate_options(opt);
  auto tol = [&opt](double dflt) { return opt.tolerance > 0.0 ? opt.tolerance : dflt; };
  const double bias_scale = opt.rel_bias ? 0.02 : 0.0;
  const Index C = opt.channels;
  const Index Ns = 4;

  VerificationReport report;
  auto add = [&report](const std::string& name, double max_error, double tolerance,
                       bool structural_ok, const std::string& detail) {
    report.checks.push_back(
        {name, structural_ok && max_error <= tolerance, max_error, tolerance, detail});
  };

  SeededRng rng(opt.seed);
  TokenGrid grid = TokenGrid::seeded(opt.height, opt.width, C, rng);
  ProjectionSet proj = ProjectionSet::seeded(C, C, C, opt.radius, 1, rng, 0.5, bias_scale);
  SsmCore core = SsmCore::seeded(C, Ns, rng);

  {
    double err = 0.0;
    for (Index L : {Index(1), Index(2), Index(7), Index(31), grid.tokens()}) {
      Matrix U = uniform_matrix(rng, L, C, 1.0);
      DiscretizedSequence rec = recurrent_scan(core, U);
      DiscretizedSequence par = prefix_scan(core, U);
      err = std::max(err, max_abs_matrix(rec.outputs - par.outputs));
      for (Index t = 0; t < L; ++t)
        err = std::max(err, (rec.states[static_cast<std::size_t>(t)] -
                             par.states[static_cast<std::size_t>(t)])
                                .abs()
                                .maxCoeff());
    }
    add("scan_agreement", err, tol(1e-10), true,
        "parallel prefix scan against the sequential recurrence");
  }

  {
    Matrix U = uniform_matrix(rng, 12, C, 1.0);
    DiscretizedSequence rec = recurrent_scan(core, U);
    double err = 0.0;
    for (Index t : {Index(1), Index(5), Index(12)})
      err = std::max(err, (unrolled_state(core, U, t) -
                           rec.states[static_cast<std::size_t>(t - 1)])
                              .abs()
                              .maxCoeff());
    add("unrolled_state", err, tol(1e-10), true,
        "survival-weighted unrolled sum against the recurrence");
  }

  {
    RoutingField field = compute_affinities(grid, proj, opt.radius);
    TokenGrid direct = route_tokens(grid, field, proj);
    TokenGrid sparse = route_via_matrix(grid, routing_matrix(field, proj));
    add("routing_dual_path", max_abs_matrix(direct.features - sparse.features), tol(1e-12),
        true, "gathered routing against the sparse-matrix form");
  }

  RoutedScanResult routed = routed_scan(core, grid, proj, opt.radius);
  StateDecomposition dec = exact_state_decomposition(routed);

  {
    double err = 0.0;
    for (Index t = 0; t < routed.base.L; ++t)
      err = std::max(err, (dec.total[static_cast<std::size_t>(t)] -
                           routed.dH[static_cast<std::size_t>(t)])
                              .abs()
                              .maxCoeff());
    add("state_decomposition", err, tol(1e-10), true,
        "three-pathway state change against the true difference");
  }

  {
    OutputDecomposition out = exact_output_decomposition(routed, dec);
    add("output_decomposition", max_abs_matrix(out.total - routed.dy), tol(1e-10), true,
        "state plus readout terms against the true output change");
  }

  {
    KernelSums sums = local_global_kernel_sum(routed, routed.field);
    const double err =
        std::max(max_abs_matrix(sums.per_position - sums.per_source),
                 max_abs_matrix(sums.per_position - sums.pathway));
    add("kernel_agreement", err, tol(1e-10), true,
        "kernel sums in both orders against the injection pathway");
  }

  {
    SeededRng zrng(opt.seed + 1);
    std::vector<Vector> zs;
    for (int k = 0; k < 3; ++k) zs.push_back(uniform_vector(zrng, C, 2.0));
    BoundReport bound = attenuation_bound_check(routed, zs);
    add("attenuation_bound", bound.max_ratio, tol(1.0 + 1e-12),
        bound.rho < 1.0 && bound.violations == 0,
        "kernel norms against the geometric attenuation envelope");
  }

  {
    std::vector<Array2D> Abar, Bbar;
    SeededRng frng(opt.seed + 2);
    for (Index t = 0; t < grid.tokens(); ++t) {
      Abar.push_back(uniform_matrix(frng, C, Ns, 0.45).array() + 0.5);
      Bbar.push_back(uniform_matrix(frng, C, Ns, 1.0).array());
    }
    ReachabilityResult reach =
        frozen_reachability(Abar, Bbar, grid, routed.field, routed.M);

    Matrix inputs = grid.features;
    for (Index i = 0; i < grid.tokens(); ++i)
      for (Index slot = 0; slot < routed.field.neighbors.cols(); ++slot)
        inputs.row(i) += routed.field.affinities(i, slot) *
                         (grid.features.row(routed.field.neighbors(i, slot)) * routed.M);
    Array2D h_routed = Array2D::Zero(C, Ns);
    Array2D h_base = Array2D::Zero(C, Ns);
    for (Index t = 0; t < grid.tokens(); ++t) {
      const auto u = static_cast<std::size_t>(t);
      h_routed = Abar[u] * h_routed + (Bbar[u].colwise() * inputs.row(t).transpose().array());
      h_base = Abar[u] * h_base +
               (Bbar[u].colwise() * grid.features.row(t).transpose().array());
    }
    const double err = std::max((reach.routed - h_routed).abs().maxCoeff(),
                                (reach.base - h_base).abs().maxCoeff());
    add("frozen_reachability", err, tol(1e-10), true,
        "frozen closed form against the frozen recurrence");
  }

  {
    ProjectionSet contained = proj;
    contained.W_o.setZero();
    ContainmentReport cont = containment_check(core, grid, contained);
    add("routing_containment", cont.max_output_diff, tol(0.0),
        cont.inputs_bitwise && cont.outputs_bitwise,
        "zero output projection leaves the scan bitwise untouched");
  }

  {
    SeededRng jrng(opt.seed + 3);
    TokenGrid small = TokenGrid::seeded(3, 3, C, jrng);
    ProjectionSet jproj = ProjectionSet::seeded(C, C, C, 1, 1, jrng, 0.5, bias_scale);
    Matrix dir = uniform_matrix(jrng, small.tokens(), C, 1.0);
    TokenGrid jvp = route_jvp(small, jproj, dir);

    const double h = 1e-5;
    TokenGrid plus = small, minus = small;
    plus.features += h * dir;
    minus.features -= h * dir;
    RoutingField fp = compute_affinities(plus, jproj, 1);
    RoutingField fm = compute_affinities(minus, jproj, 1);
    Matrix numeric = (route_tokens(plus, fp, jproj).features -
                      route_tokens(minus, fm, jproj).features) /
                     (2.0 * h);
    const double scale = std::max(1.0, max_abs_matrix(numeric));
    add("routing_jvp", max_abs_matrix(jvp.features - numeric) / scale, tol(1e-5), true,
        "analytic directional derivative against central differences");
  }

  {
    ProjectionSet mh = ProjectionSet::seeded(C, C, C, opt.radius, opt.heads, rng, 0.0,
                                             bias_scale);
    TokenGrid routed_mh = multi_head_route(grid, mh);
    add("multi_head_containment", max_abs_matrix(routed_mh.features - grid.features),
        tol(0.0), same_bits(routed_mh.features, grid.features),
        "zero output projection is the identity for every head split");
  }

  return report;
}

}  // namespace gsm
