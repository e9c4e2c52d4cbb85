#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ebmc::metrics {

/// Ordered name -> value list. NaN marks an undefined metric (e.g. the
/// correlation of a constant vector).
struct MetricRecord {
  std::vector<std::pair<std::string, double>> values;

  void add(std::string name, double value) { values.emplace_back(std::move(name), value); }
  /// Throws ContractError if absent.
  double get(const std::string& name) const;
  bool has(const std::string& name) const;
};

/// accuracy, macro_f1, f1.class<k>. F1 of a class absent from both predictions
/// and labels is 0.
MetricRecord evaluate_classification(std::span<const int> predictions, std::span<const int> labels,
                                     std::size_t num_classes);

/// Sentiment-score metrics on [-3, 3]:
///   acc2_has0 / f1_has0  zero counts as non-negative, all samples;
///   acc2_non0 / f1_non0  samples with zero truth excluded, positive means > 0;
///   acc7                 nearest integer, clamped to [-3, 3];
///   corr                 Pearson (NaN when either side is constant);
///   mae.
/// Binary F1 is the support-weighted mean of the two per-class F1 scores.
MetricRecord evaluate_regression(std::span<const double> predictions, std::span<const double> truth);

/// Rounds to the nearest integer bin and clamps to [-3, 3].
int score_bin(double score);

}  // namespace ebmc::metrics
