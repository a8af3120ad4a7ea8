// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace casgd {

/// One named invariant with its worst observed residual.
struct VerifyCheck {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  /// Adds the Monte Carlo suites.
  bool full = false;
  std::uint64_t seed = 0;
  /// Name of a check whose computed side is perturbed by a relative 1e-6,
  /// used to confirm that the suite detects a broken identity.
  std::string inject_fault;
  /// Runs only the named checks, from either suite, in the given order.
  std::vector<std::string> only;
};

/// Names of every check, fast ones first.
std::vector<std::string> verify_check_names(bool full);

std::vector<VerifyCheck> run_verify(const VerifyOptions& options);

/// Fixed-width table, one line per check.
std::string verify_table(const std::vector<VerifyCheck>& checks);

}  // namespace casgd
