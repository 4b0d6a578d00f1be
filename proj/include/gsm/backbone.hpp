#pragma once

#include <array>
#include <string>
#include <vector>

#include "gsm/graphscan.hpp"
#include "gsm/selective_scan.hpp"
#include "gsm/tensor.hpp"
#include "gsm/types.hpp"

namespace gsm {

struct StageConfig {
  Index channels = 0;
  Index depth = 0;
  Index ffn_ratio = 0;
  Index radius = 0;
};

// Four-stage pyramid at strides 4/8/16/32. The named presets carry target
// parameter and FLOP budgets checked by the CLI.
struct BackboneConfig {
  std::string variant;
  std::array<StageConfig, 4> stages;
  Index state_dim = 16;

  static BackboneConfig preset(const std::string& name);  // tiny, small, base
  void validate() const;
};

struct BudgetTarget {
  double params = 0.0;
  double flops = 0.0;  // at 224 x 224 input
};

BudgetTarget target_budget(const std::string& variant);

// 3x3 convolution, zero padding 1. Weight rows are indexed slot * in_ch + cin
// with slots in row-major offset order.
struct ConvParams {
  Index in_ch = 0;
  Index out_ch = 0;
  Index stride = 1;
  Matrix weight;  // (9 * in_ch) x out_ch
  Vector bias;    // out_ch
};

// Depthwise 3x3, zero padding 1, stride 1.
struct DwConvParams {
  Matrix weight;  // 9 x C, one column per channel
  Vector bias;    // C
};

struct NormParams {
  Vector gamma;
  Vector beta;
};

struct LinearParams {
  Matrix weight;  // in x out
  Vector bias;    // out
};

struct GssmParams {
  LinearParams proj_in;   // C x C
  DwConvParams dw;        // on C
  ProjectionSet routing;  // d = d_v = C/4, one head
  SsmCore ssm;            // D = C
  NormParams post;        // layer norm after the scan
  LinearParams proj_out;  // C x C
};

struct FfnParams {
  LinearParams fc1;  // C x mC
  DwConvParams dw;   // on mC
  LinearParams fc2;  // mC x C
};

struct BlockParams {
  DwConvParams pos;  // positional residual
  NormParams norm1;  // layer norm before the mixer
  GssmParams gssm;
  NormParams norm2;  // inference batch norm: per-channel affine
  FfnParams ffn;
};

struct StageParams {
  std::vector<BlockParams> blocks;
};

struct BackboneParams {
  ConvParams stem1;  // 3 -> C1/2, stride 2
  ConvParams stem2;  // C1/2 -> C1, stride 2
  std::array<StageParams, 4> stages;
  std::array<ConvParams, 3> downsamples;  // stride 2, C_i -> C_{i+1}

  static BackboneParams seeded(const BackboneConfig& cfg, SeededRng& rng);
  static BackboneParams zeros(const BackboneConfig& cfg);
};

TokenGrid conv3x3(const TokenGrid& in, const ConvParams& p);
TokenGrid dwconv3x3(const TokenGrid& in, const DwConvParams& p);
Matrix layer_norm(const Matrix& X, const NormParams& p);   // per token, eps 1e-6
Matrix affine_norm(const Matrix& X, const NormParams& p);  // per channel
Matrix silu(const Matrix& X);
Matrix linear_map(const Matrix& X, const LinearParams& p);

Matrix gssm_forward(const TokenGrid& normed, const GssmParams& p);
TokenGrid block_forward(const TokenGrid& in, const BlockParams& p);

struct BackboneOutput {
  std::array<TokenGrid, 4> stage_maps;
  Vector pooled;  // mean over final-stage tokens
};

BackboneOutput backbone_forward(const TokenGrid& image, const BackboneConfig& cfg,
                                const BackboneParams& params);

// Analytic counts: parameters include every stored tensor; FLOPs count one
// multiply-accumulate as one operation and ignore bias adds, activations,
// and normalizations.
struct CountReport {
  long long params = 0;
  double flops = 0.0;
  long long stem_params = 0;
  double stem_flops = 0.0;
  std::array<long long, 4> stage_params{};
  std::array<double, 4> stage_flops{};
  long long downsample_params = 0;
  double downsample_flops = 0.0;
};

CountReport count_params_flops(const BackboneConfig& cfg, Index height, Index width);
long long parameter_count(const BackboneParams& params);

}  // namespace gsm
