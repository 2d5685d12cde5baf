// Runs every acceptance check and prints one PASS/FAIL line per criterion.

#include <iostream>

#include "tsgc/verify.hpp"

int main() {
  tsgc::VerifyOptions options;
  options.split_seeds = TSGC_SPLIT_SEEDS;
  options.on_result = [](const tsgc::CheckResult& r) { tsgc::print_result(std::cout, r); };
  int failed = 0;
  for (const auto& r : tsgc::run_acceptance(options)) failed += !r.passed;
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " failed" : "acceptance: all passed") << "\n";
  return failed ? 1 : 0;
}
