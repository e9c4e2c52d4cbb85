#include "ebmc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ebmc/errors.hpp"

namespace ebmc::metrics {

double MetricRecord::get(const std::string& name) const {
  for (const auto& [k, v] : values)
    if (k == name) return v;
  throw ContractError("metric '" + name + "' not recorded");
}

bool MetricRecord::has(const std::string& name) const {
  return std::any_of(values.begin(), values.end(), [&](const auto& kv) { return kv.first == name; });
}

namespace {

struct Confusion {
  std::vector<double> tp, fp, fn, support;
  explicit Confusion(std::size_t k) : tp(k, 0), fp(k, 0), fn(k, 0), support(k, 0) {}
};

Confusion confusion(std::span<const int> pred, std::span<const int> truth, std::size_t k) {
  Confusion c(k);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = static_cast<std::size_t>(pred[i]);
    const auto t = static_cast<std::size_t>(truth[i]);
    if (p >= k || t >= k) throw ContractError("metrics: class index out of range");
    c.support[t] += 1;
    if (p == t) {
      c.tp[t] += 1;
    } else {
      c.fp[p] += 1;
      c.fn[t] += 1;
    }
  }
  return c;
}

double f1(const Confusion& c, std::size_t cls) {
  const double denom = 2.0 * c.tp[cls] + c.fp[cls] + c.fn[cls];
  return denom == 0.0 ? 0.0 : 2.0 * c.tp[cls] / denom;
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == truth[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

double weighted_binary_f1(std::span<const int> pred, std::span<const int> truth) {
  if (pred.empty()) return std::numeric_limits<double>::quiet_NaN();
  const Confusion c = confusion(pred, truth, 2);
  const double n = static_cast<double>(pred.size());
  return (c.support[0] * f1(c, 0) + c.support[1] * f1(c, 1)) / n;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

int score_bin(double score) { return static_cast<int>(std::clamp(std::round(score), -3.0, 3.0)); }

MetricRecord evaluate_classification(std::span<const int> predictions, std::span<const int> labels,
                                     std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw DimensionError("metrics: prediction/label count mismatch");
  const Confusion c = confusion(predictions, labels, num_classes);
  MetricRecord r;
  r.add("accuracy", accuracy(predictions, labels));
  double macro = 0.0;
  std::vector<double> per_class(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) macro += (per_class[k] = f1(c, k));
  r.add("macro_f1", macro / static_cast<double>(num_classes));
  for (std::size_t k = 0; k < num_classes; ++k) r.add("f1.class" + std::to_string(k), per_class[k]);
  return r;
}

MetricRecord evaluate_regression(std::span<const double> predictions, std::span<const double> truth) {
  if (predictions.size() != truth.size()) throw DimensionError("metrics: prediction/target count mismatch");
  std::vector<int> p_has0, t_has0, p_non0, t_non0, p7, t7;
  double abs_err = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    p_has0.push_back(predictions[i] >= 0.0);
    t_has0.push_back(truth[i] >= 0.0);
    if (truth[i] != 0.0) {
      p_non0.push_back(predictions[i] > 0.0);
      t_non0.push_back(truth[i] > 0.0);
    }
    p7.push_back(score_bin(predictions[i]));
    t7.push_back(score_bin(truth[i]));
    abs_err += std::abs(predictions[i] - truth[i]);
  }
  MetricRecord r;
  r.add("acc2_has0", accuracy(p_has0, t_has0));
  r.add("acc2_non0", accuracy(p_non0, t_non0));
  r.add("f1_has0", weighted_binary_f1(p_has0, t_has0));
  r.add("f1_non0", weighted_binary_f1(p_non0, t_non0));
  r.add("acc7", accuracy(p7, t7));
  r.add("corr", pearson(predictions, truth));
  r.add("mae", truth.empty() ? std::numeric_limits<double>::quiet_NaN()
                             : abs_err / static_cast<double>(truth.size()));
  return r;
}

}  // namespace ebmc::metrics
