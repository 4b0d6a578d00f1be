#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsm/types.hpp"

namespace gsm {

struct VerifyOptions {
  std::uint64_t seed = 42;
  Index height = 8;
  Index width = 8;
  Index channels = 4;
  Index radius = 1;
  Index heads = 1;
  bool rel_bias = true;
  double tolerance = 0.0;  // 0 keeps the per-check defaults
};

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerificationReport {
  std::vector<CheckResult> checks;
  bool all_passed() const;
  const CheckResult* first_failure() const;
};

// Runs every identity check on seeded fixtures sized by the options. A
// positive tolerance replaces each check's default.
VerificationReport run_verification(const VerifyOptions& opt);

}  // namespace gsm
