#include "ebmc/losses.hpp"

namespace ebmc {

double count_included(const ad::Tensor& include) {
  double n = 0.0;
  for (double v : include.data()) n += v;
  return n;
}

ad::Tensor masked_mean(const ad::Tensor& values, const ad::Tensor& include) {
  const double n = count_included(include);
  if (n == 0.0) return ad::Tensor::scalar(0.0);
  return ad::scale(ad::sum(ad::mul(values, include)), 1.0 / n);
}

ad::Tensor cross_entropy_rows(const ad::Tensor& logits, std::span<const int> labels) {
  return ad::scale(ad::pick(ad::log_softmax_rows(logits), labels), -1.0);
}

}  // namespace ebmc
