#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ntpboost {

struct CheckResult {
  std::string name;
  bool passed = true;
  int cases = 0;
  double max_error = 0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  double tolerance = 1e-9;
  std::filesystem::path fixtures;  // empty: skip the fixture comparisons
  bool quick = false;              // fewer random instances
};

// Runs every brute-force oracle comparison and returns one row per check.
std::vector<CheckResult> run_oracle_suite(const VerifyOptions& opts);

// Expected outputs for the bundled fixtures, computed by the naive oracles.
void write_fixture_expectations(const std::filesystem::path& fixtures);

}  // namespace ntpboost
