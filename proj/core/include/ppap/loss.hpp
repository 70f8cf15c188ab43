#pragma once

#include <vector>

#include "ppap/tensor.hpp"

namespace ppap {

// Mean softmax cross-entropy over the batch (f64 accumulation). When dlogits
// is given it is filled with (softmax - onehot)/n, the gradient of the mean.
double softmax_ce(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits = nullptr);

// Per-sample gradients (softmax - onehot), no 1/n factor — curvature path.
Tensor softmax_dlogits_persample(const Tensor& logits, const std::vector<int>& labels);

// Fraction of argmax-correct rows. Ties resolve to the lowest class index.
double accuracy(const Tensor& logits, const std::vector<int>& labels);

} // namespace ppap
