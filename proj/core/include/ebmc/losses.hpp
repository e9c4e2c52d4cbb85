#pragma once

#include <span>

#include "ebmc/autodiff.hpp"

namespace ebmc {

/// Mean of an n x 1 column over rows where `include` (n x 1, 0/1) is 1.
/// Returns a detached zero when no row is included.
ad::Tensor masked_mean(const ad::Tensor& values, const ad::Tensor& include);

/// Per-row cross-entropy of softmax(logits) against class labels, n x 1.
ad::Tensor cross_entropy_rows(const ad::Tensor& logits, std::span<const int> labels);

/// Number of ones in a 0/1 column.
double count_included(const ad::Tensor& include);

}  // namespace ebmc
