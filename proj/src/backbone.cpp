#include "gsm/backbone.hpp"

#include <cmath>
#include <utility>

namespace gsm {

namespace {

constexpr double kLayerNormEps = 1e-6;

Index strided_extent(Index n, Index stride) { return (n - 1) / stride + 1; }

ConvParams seeded_conv(Index cin, Index cout, Index stride, SeededRng& rng) {
  const double scale = 1.0 / std::sqrt(9.0 * static_cast<double>(cin));
  return {cin, cout, stride, uniform_matrix(rng, 9 * cin, cout, scale), Vector::Zero(cout)};
}

ConvParams zero_conv(Index cin, Index cout, Index stride) {
  return {cin, cout, stride, Matrix::Zero(9 * cin, cout), Vector::Zero(cout)};
}

DwConvParams seeded_dw(Index c, SeededRng& rng) {
  return {uniform_matrix(rng, 9, c, 1.0 / 3.0), Vector::Zero(c)};
}

DwConvParams zero_dw(Index c) { return {Matrix::Zero(9, c), Vector::Zero(c)}; }

NormParams identity_norm(Index c) { return {Vector::Ones(c), Vector::Zero(c)}; }

LinearParams seeded_linear(Index in, Index out, SeededRng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  return {uniform_matrix(rng, in, out, scale), Vector::Zero(out)};
}

LinearParams zero_linear(Index in, Index out) {
  return {Matrix::Zero(in, out), Vector::Zero(out)};
}

ProjectionSet zero_projections(Index c, Index radius) {
  ProjectionSet p;
  p.radius = radius;
  p.heads = 1;
  p.W_q = Matrix::Zero(c, c / 4);
  p.W_k = Matrix::Zero(c, c / 4);
  p.W_v = Matrix::Zero(c, c / 4);
  p.W_o = Matrix::Zero(c / 4, c);
  p.b_rel = Vector::Zero(p.window());
  return p;
}

SsmCore zero_core(Index c, Index ns) {
  return SsmCore(SsmCore::default_transition(c, ns), Matrix::Zero(c, c), Vector::Zero(c),
                 Matrix::Zero(c, ns), Matrix::Zero(c, ns));
}

BlockParams seeded_block(const StageConfig& stage, Index state_dim, SeededRng& rng) {
  const Index c = stage.channels;
  const double out_scale = 1.0 / std::sqrt(static_cast<double>(c));
  return {seeded_dw(c, rng),
          identity_norm(c),
          {seeded_linear(c, c, rng), seeded_dw(c, rng),
           ProjectionSet::seeded(c, c / 4, c / 4, stage.radius, 1, rng, out_scale),
           SsmCore::seeded(c, state_dim, rng), identity_norm(c), seeded_linear(c, c, rng)},
          identity_norm(c),
          {seeded_linear(c, stage.ffn_ratio * c, rng), seeded_dw(stage.ffn_ratio * c, rng),
           seeded_linear(stage.ffn_ratio * c, c, rng)}};
}

BlockParams zero_block(const StageConfig& stage, Index state_dim) {
  const Index c = stage.channels;
  return {zero_dw(c),
          identity_norm(c),
          {zero_linear(c, c), zero_dw(c), zero_projections(c, stage.radius),
           zero_core(c, state_dim), identity_norm(c), zero_linear(c, c)},
          identity_norm(c),
          {zero_linear(c, stage.ffn_ratio * c), zero_dw(stage.ffn_ratio * c),
           zero_linear(stage.ffn_ratio * c, c)}};
}

long long conv_param_count(Index cin, Index cout) { return 9LL * cin * cout + cout; }
long long dw_param_count(Index c) { return 10LL * c; }
long long norm_param_count(Index c) { return 2LL * c; }
long long linear_param_count(Index in, Index out) {
  return static_cast<long long>(in) * out + out;
}

long long routing_param_count(Index c, Index window) {
  const Index d = c / 4;
  return 4LL * c * d + window;
}

long long ssm_param_count(Index c, Index ns) {
  return static_cast<long long>(c) * c + c + 3LL * c * ns;
}

long long block_param_count(const StageConfig& stage, Index state_dim) {
  const Index c = stage.channels;
  const Index m = stage.ffn_ratio;
  const Index window = (2 * stage.radius + 1) * (2 * stage.radius + 1);
  long long total = dw_param_count(c) + norm_param_count(c);
  total += linear_param_count(c, c) + dw_param_count(c) + routing_param_count(c, window) +
           ssm_param_count(c, state_dim) + norm_param_count(c) + linear_param_count(c, c);
  total += norm_param_count(c);
  total += linear_param_count(c, m * c) + dw_param_count(m * c) + linear_param_count(m * c, c);
  return total;
}

double conv_flop_count(Index cin, Index cout, Index tokens) {
  return 9.0 * static_cast<double>(cin) * static_cast<double>(cout) *
         static_cast<double>(tokens);
}

double dw_flop_count(Index c, Index tokens) {
  return 9.0 * static_cast<double>(c) * static_cast<double>(tokens);
}

double linear_flop_count(Index in, Index out, Index tokens) {
  return static_cast<double>(in) * static_cast<double>(out) * static_cast<double>(tokens);
}

double routing_flop_count(Index c, Index window, Index tokens) {
  const double d = static_cast<double>(c) / 4.0;
  const double proj = 4.0 * c * d;                         // query, key, value, output maps
  const double mix = static_cast<double>(window) * 2.0 * d;  // scores plus value gathering
  return (proj + mix) * static_cast<double>(tokens);
}

double ssm_flop_count(Index c, Index ns, Index tokens) {
  const double cd = static_cast<double>(c);
  const double nd = static_cast<double>(ns);
  // Step projection, b/c projections, discretization, state update, readout.
  const double per_token = cd * cd + 2.0 * cd * nd + 2.0 * cd * nd + 2.0 * cd * nd + cd * nd;
  return per_token * static_cast<double>(tokens);
}

double block_flop_count(const StageConfig& stage, Index state_dim, Index tokens) {
  const Index c = stage.channels;
  const Index m = stage.ffn_ratio;
  const Index window = (2 * stage.radius + 1) * (2 * stage.radius + 1);
  double total = dw_flop_count(c, tokens);
  total += linear_flop_count(c, c, tokens) + dw_flop_count(c, tokens) +
           routing_flop_count(c, window, tokens) + ssm_flop_count(c, state_dim, tokens) +
           linear_flop_count(c, c, tokens);
  total += linear_flop_count(c, m * c, tokens) + dw_flop_count(m * c, tokens) +
           linear_flop_count(m * c, c, tokens);
  return total;
}

}  // namespace

BackboneConfig BackboneConfig::preset(const std::string& name) {
  std::array<Index, 4> channels{}, depths{}, ratios{};
  const std::array<Index, 4> radii{1, 1, 2, 3};
  if (name == "tiny") {
    channels = {80, 160, 320, 512};
    depths = {3, 4, 12, 5};
    ratios = {4, 4, 3, 3};
  } else if (name == "small") {
    channels = {96, 192, 384, 512};
    depths = {4, 8, 20, 6};
    ratios = {4, 4, 3, 3};
  } else if (name == "base") {
    channels = {112, 224, 448, 640};
    depths = {4, 8, 25, 8};
    ratios = {4, 4, 3, 4};
  } else {
    throw ParameterError("unknown variant '" + name + "', expected tiny, small, or base");
  }
  BackboneConfig cfg;
  cfg.variant = name;
  for (int i = 0; i < 4; ++i) cfg.stages[i] = {channels[i], depths[i], ratios[i], radii[i]};
  cfg.validate();
  return cfg;
}

void BackboneConfig::validate() const {
  if (state_dim <= 0) throw ParameterError("state_dim must be positive");
  if (stages[0].channels % 2 != 0) throw ParameterError("stage-1 channels must be even");
  for (const StageConfig& s : stages) {
    if (s.channels <= 0 || s.channels % 4 != 0)
      throw ParameterError("stage channels must be positive multiples of 4");
    if (s.depth <= 0) throw ParameterError("stage depth must be positive");
    if (s.ffn_ratio <= 0) throw ParameterError("ffn ratio must be positive");
    if (s.radius < 0) throw ParameterError("radius must be nonnegative");
  }
}

BudgetTarget target_budget(const std::string& variant) {
  if (variant == "tiny") return {28e6, 5.2e9};
  if (variant == "small") return {49e6, 11.1e9};
  if (variant == "base") return {93e6, 17.8e9};
  throw ParameterError("unknown variant '" + variant + "', expected tiny, small, or base");
}

BackboneParams BackboneParams::seeded(const BackboneConfig& cfg, SeededRng& rng) {
  cfg.validate();
  const Index c1 = cfg.stages[0].channels;
  BackboneParams p{seeded_conv(3, c1 / 2, 2, rng), seeded_conv(c1 / 2, c1, 2, rng), {}, {}};
  for (int s = 0; s < 4; ++s)
    for (Index b = 0; b < cfg.stages[s].depth; ++b)
      p.stages[s].blocks.push_back(seeded_block(cfg.stages[s], cfg.state_dim, rng));
  for (int s = 0; s < 3; ++s)
    p.downsamples[s] =
        seeded_conv(cfg.stages[s].channels, cfg.stages[s + 1].channels, 2, rng);
  return p;
}

BackboneParams BackboneParams::zeros(const BackboneConfig& cfg) {
  cfg.validate();
  const Index c1 = cfg.stages[0].channels;
  BackboneParams p{zero_conv(3, c1 / 2, 2), zero_conv(c1 / 2, c1, 2), {}, {}};
  for (int s = 0; s < 4; ++s)
    for (Index b = 0; b < cfg.stages[s].depth; ++b)
      p.stages[s].blocks.push_back(zero_block(cfg.stages[s], cfg.state_dim));
  for (int s = 0; s < 3; ++s)
    p.downsamples[s] = zero_conv(cfg.stages[s].channels, cfg.stages[s + 1].channels, 2);
  return p;
}

TokenGrid conv3x3(const TokenGrid& in, const ConvParams& p) {
  if (in.channels() != p.in_ch)
    throw ShapeError("conv input has " + std::to_string(in.channels()) +
                     " channels, expected " + std::to_string(p.in_ch));
  if (p.weight.rows() != 9 * p.in_ch || p.weight.cols() != p.out_ch)
    throw ShapeError("conv weight is " + shape_str(p.weight.rows(), p.weight.cols()) +
                     ", expected " + shape_str(9 * p.in_ch, p.out_ch));
  if (p.bias.size() != p.out_ch) throw ShapeError("conv bias length mismatch");
  if (p.stride != 1 && p.stride != 2) throw ParameterError("conv stride must be 1 or 2");

  const Index ho = strided_extent(in.H, p.stride);
  const Index wo = strided_extent(in.W, p.stride);
  Matrix cols = Matrix::Zero(ho * wo, 9 * p.in_ch);
  for (Index orow = 0; orow < ho; ++orow) {
    for (Index ocol = 0; ocol < wo; ++ocol) {
      const Index out_i = orow * wo + ocol;
      for (Index dr = -1; dr <= 1; ++dr) {
        const Index ir = orow * p.stride + dr;
        if (ir < 0 || ir >= in.H) continue;
        for (Index dc = -1; dc <= 1; ++dc) {
          const Index ic = ocol * p.stride + dc;
          if (ic < 0 || ic >= in.W) continue;
          const Index slot = (dr + 1) * 3 + (dc + 1);
          cols.block(out_i, slot * p.in_ch, 1, p.in_ch) = in.features.row(ir * in.W + ic);
        }
      }
    }
  }
  Matrix out = cols * p.weight;
  out.rowwise() += p.bias.transpose();
  return {ho, wo, std::move(out)};
}

TokenGrid dwconv3x3(const TokenGrid& in, const DwConvParams& p) {
  const Index c = in.channels();
  if (p.weight.rows() != 9 || p.weight.cols() != c)
    throw ShapeError("depthwise weight is " + shape_str(p.weight.rows(), p.weight.cols()) +
                     ", expected " + shape_str(9, c));
  if (p.bias.size() != c) throw ShapeError("depthwise bias length mismatch");

  Matrix out = Matrix::Zero(in.tokens(), c);
  for (Index row = 0; row < in.H; ++row) {
    for (Index col = 0; col < in.W; ++col) {
      const Index out_i = row * in.W + col;
      for (Index dr = -1; dr <= 1; ++dr) {
        const Index ir = row + dr;
        if (ir < 0 || ir >= in.H) continue;
        for (Index dc = -1; dc <= 1; ++dc) {
          const Index ic = col + dc;
          if (ic < 0 || ic >= in.W) continue;
          const Index slot = (dr + 1) * 3 + (dc + 1);
          out.row(out_i).array() +=
              p.weight.row(slot).array() * in.features.row(ir * in.W + ic).array();
        }
      }
      out.row(out_i) += p.bias.transpose();
    }
  }
  return {in.H, in.W, std::move(out)};
}

Matrix layer_norm(const Matrix& X, const NormParams& p) {
  if (p.gamma.size() != X.cols() || p.beta.size() != X.cols())
    throw ShapeError("norm parameters do not match " + std::to_string(X.cols()) + " channels");
  Matrix out(X.rows(), X.cols());
  for (Index i = 0; i < X.rows(); ++i) {
    const double mean = X.row(i).mean();
    const double var = (X.row(i).array() - mean).square().mean();
    out.row(i) = (((X.row(i).array() - mean) / std::sqrt(var + kLayerNormEps)) *
                      p.gamma.transpose().array() +
                  p.beta.transpose().array())
                     .matrix();
  }
  return out;
}

Matrix affine_norm(const Matrix& X, const NormParams& p) {
  if (p.gamma.size() != X.cols() || p.beta.size() != X.cols())
    throw ShapeError("norm parameters do not match " + std::to_string(X.cols()) + " channels");
  return ((X.array().rowwise() * p.gamma.transpose().array()).rowwise() +
          p.beta.transpose().array())
      .matrix();
}

Matrix silu(const Matrix& X) {
  return X.array().unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); }).matrix();
}

Matrix linear_map(const Matrix& X, const LinearParams& p) {
  if (X.cols() != p.weight.rows())
    throw ShapeError("linear input has " + std::to_string(X.cols()) + " channels, expected " +
                     std::to_string(p.weight.rows()));
  Matrix out = X * p.weight;
  out.rowwise() += p.bias.transpose();
  return out;
}

Matrix gssm_forward(const TokenGrid& normed, const GssmParams& p) {
  TokenGrid z(normed.H, normed.W, linear_map(normed.features, p.proj_in));
  z = dwconv3x3(z, p.dw);
  z.features = silu(z.features);
  RoutingField field = compute_affinities(z, p.routing, p.routing.radius);
  TokenGrid routed = route_tokens(z, field, p.routing);
  Matrix scanned = scan_outputs(p.ssm, routed.features);
  return linear_map(layer_norm(scanned, p.post), p.proj_out);
}

TokenGrid block_forward(const TokenGrid& in, const BlockParams& p) {
  TokenGrid x = in;
  x.features += dwconv3x3(x, p.pos).features;
  TokenGrid normed(x.H, x.W, layer_norm(x.features, p.norm1));
  x.features += gssm_forward(normed, p.gssm);
  Matrix pre = affine_norm(x.features, p.norm2);
  TokenGrid hidden(x.H, x.W, silu(linear_map(pre, p.ffn.fc1)));
  Matrix mixed = silu(dwconv3x3(hidden, p.ffn.dw).features);
  x.features += linear_map(mixed, p.ffn.fc2);
  return x;
}

BackboneOutput backbone_forward(const TokenGrid& image, const BackboneConfig& cfg,
                                const BackboneParams& params) {
  cfg.validate();
  TokenGrid x = conv3x3(image, params.stem1);
  x.features = silu(x.features);
  x = conv3x3(x, params.stem2);

  BackboneOutput out{{TokenGrid(1, 1, 1), TokenGrid(1, 1, 1), TokenGrid(1, 1, 1),
                      TokenGrid(1, 1, 1)},
                     Vector()};
  for (int s = 0; s < 4; ++s) {
    if (s > 0) x = conv3x3(x, params.downsamples[static_cast<std::size_t>(s - 1)]);
    for (const BlockParams& block : params.stages[static_cast<std::size_t>(s)].blocks)
      x = block_forward(x, block);
    out.stage_maps[static_cast<std::size_t>(s)] = x;
  }
  out.pooled = x.features.colwise().mean().transpose();
  return out;
}

CountReport count_params_flops(const BackboneConfig& cfg, Index height, Index width) {
  cfg.validate();
  if (height <= 0 || width <= 0) throw ParameterError("input extents must be positive");
  CountReport report;

  const Index c1 = cfg.stages[0].channels;
  Index h = strided_extent(height, 2);
  Index w = strided_extent(width, 2);
  report.stem_params = conv_param_count(3, c1 / 2) + conv_param_count(c1 / 2, c1);
  report.stem_flops = conv_flop_count(3, c1 / 2, h * w);
  h = strided_extent(h, 2);
  w = strided_extent(w, 2);
  report.stem_flops += conv_flop_count(c1 / 2, c1, h * w);

  for (int s = 0; s < 4; ++s) {
    const auto u = static_cast<std::size_t>(s);
    if (s > 0) {
      const Index cin = cfg.stages[u - 1].channels;
      const Index cout = cfg.stages[u].channels;
      h = strided_extent(h, 2);
      w = strided_extent(w, 2);
      report.downsample_params += conv_param_count(cin, cout);
      report.downsample_flops += conv_flop_count(cin, cout, h * w);
    }
    report.stage_params[u] =
        cfg.stages[u].depth * block_param_count(cfg.stages[u], cfg.state_dim);
    report.stage_flops[u] = static_cast<double>(cfg.stages[u].depth) *
                            block_flop_count(cfg.stages[u], cfg.state_dim, h * w);
  }

  report.params = report.stem_params + report.downsample_params;
  report.flops = report.stem_flops + report.downsample_flops;
  for (int s = 0; s < 4; ++s) {
    report.params += report.stage_params[static_cast<std::size_t>(s)];
    report.flops += report.stage_flops[static_cast<std::size_t>(s)];
  }
  return report;
}

namespace {

long long tensor_count(const ConvParams& p) { return p.weight.size() + p.bias.size(); }
long long tensor_count(const DwConvParams& p) { return p.weight.size() + p.bias.size(); }
long long tensor_count(const NormParams& p) { return p.gamma.size() + p.beta.size(); }
long long tensor_count(const LinearParams& p) { return p.weight.size() + p.bias.size(); }

long long tensor_count(const ProjectionSet& p) {
  return p.W_q.size() + p.W_k.size() + p.W_v.size() + p.W_o.size() + p.b_rel.size();
}

long long tensor_count(const SsmCore& core) {
  return core.A().size() + core.W_delta().size() + core.bias_delta().size() +
         core.W_b().size() + core.W_c().size();
}

long long tensor_count(const BlockParams& p) {
  return tensor_count(p.pos) + tensor_count(p.norm1) + tensor_count(p.gssm.proj_in) +
         tensor_count(p.gssm.dw) + tensor_count(p.gssm.routing) + tensor_count(p.gssm.ssm) +
         tensor_count(p.gssm.post) + tensor_count(p.gssm.proj_out) + tensor_count(p.norm2) +
         tensor_count(p.ffn.fc1) + tensor_count(p.ffn.dw) + tensor_count(p.ffn.fc2);
}

}  // namespace

long long parameter_count(const BackboneParams& params) {
  long long total = tensor_count(params.stem1) + tensor_count(params.stem2);
  for (const StageParams& stage : params.stages)
    for (const BlockParams& block : stage.blocks) total += tensor_count(block);
  for (const ConvParams& down : params.downsamples) total += tensor_count(down);
  return total;
}

}  // namespace gsm
