#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gsm/run_config.hpp"
#include "gsm/types.hpp"

namespace gsm {

struct BenchRow {
  Index height = 0;
  Index width = 0;
  Index tokens = 0;
  double affinity_ms = 0.0;
  double route_ms = 0.0;
  double per_token_us = 0.0;
};

// Median wall time over reps for computing affinities and routing tokens on
// seeded grids of the given sizes.
std::vector<BenchRow> bench_routing(const std::vector<std::pair<Index, Index>>& sizes,
                                    Index channels, Index radius, int reps,
                                    std::uint64_t seed);

int cmd_verify(const RunConfig& cfg);
int cmd_bench(const RunConfig& cfg);
int cmd_field(const RunConfig& cfg, const std::string& pattern);
int cmd_backbone(const RunConfig& cfg);

}  // namespace gsm
