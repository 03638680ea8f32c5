#pragma once

#include <cstdint>
#include <vector>

#include "trajkit/tensor.hpp"

namespace trajkit {

// K trajectory hypotheses with unnormalized confidences.  Confidences are
// softmax(confidence_logits), so they are positive and sum to 1.
struct TrajectoryPrediction {
  Tensor hypotheses;         // [K, T, 2] meters
  Tensor confidence_logits;  // [K]
};

struct GroundTruth {
  std::vector<double> positions;           // T x 2 interleaved meters
  std::vector<std::uint8_t> availability;  // per future step
};

std::vector<double> confidences(const TrajectoryPrediction& pred);

// Negative log of the confidence-weighted mixture of unit-variance Gaussian
// likelihoods: -logsumexp_k(log c_k - 0.5 * SSE_k), where SSE_k sums squared
// displacements over available timesteps only.
Tensor nll_loss(const TrajectoryPrediction& pred, const GroundTruth& gt);

// Arithmetic mean of per-sample nll_loss.
Tensor batch_nll(const std::vector<TrajectoryPrediction>& preds,
                 const std::vector<GroundTruth>& gts);

// Displacement diagnostics on the highest-confidence hypothesis (ties break
// to the smallest mode index).  best_mode_* instead pick the hypothesis that
// minimizes the metric.
double ade(const TrajectoryPrediction& pred, const GroundTruth& gt);
double fde(const TrajectoryPrediction& pred, const GroundTruth& gt);
double best_mode_ade(const TrajectoryPrediction& pred, const GroundTruth& gt);
double best_mode_fde(const TrajectoryPrediction& pred, const GroundTruth& gt);

}  // namespace trajkit
