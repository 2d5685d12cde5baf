#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace tsgc {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  bool skipped = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  /// Skips the two long training checks (synthetic generalization, ablation ordering).
  bool quick = false;
  /// `split seed` list for the generalization and ablation checks.
  std::filesystem::path split_seeds;
  /// Called as each check finishes.
  std::function<void(const CheckResult&)> on_result;
};

/// Acceptance checks, one per criterion, in order:
///   1 gradients, 2 attention normalization, 3 aggregation invariance,
///   4 knn oracle, 5 loss sanity, 6 metric oracle, 7 overfit,
///   8 synthetic generalization, 9 ablation ordering,
///   10 determinism and persistence, 11 geometry.
std::vector<CheckResult> run_acceptance(const VerifyOptions& options);

CheckResult check_gradients();
CheckResult check_attention_normalization();
CheckResult check_aggregation_invariance();
CheckResult check_knn_oracle();
CheckResult check_loss_sanity();
CheckResult check_metric_oracle();
CheckResult check_overfit();
/// Checks 8 and 9 share the trained full model.
std::vector<CheckResult> check_synthetic_split(const std::filesystem::path& split_seeds);
CheckResult check_determinism();
CheckResult check_geometry();

/// `PASS|FAIL|SKIP  [id] name  (seconds)  detail`
void print_result(std::ostream& os, const CheckResult& result);

/// Test mIoU of the full desk model on the shipped split, as first measured.
inline constexpr double kGeneralizationBaseline = 0.953594;

}  // namespace tsgc
