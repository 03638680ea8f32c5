#include "trajkit/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trajkit/error.hpp"

namespace trajkit {

namespace {

struct Arity {
  std::int64_t num_modes;
  std::int64_t num_steps;
};

Arity check_pair(const TrajectoryPrediction& pred, const GroundTruth& gt) {
  require(pred.hypotheses.defined() && pred.confidence_logits.defined(),
          ErrorKind::invalid, "prediction tensors are undefined");
  require(pred.hypotheses.rank() == 3 && pred.hypotheses.dim(2) == 2,
          ErrorKind::invalid, "hypotheses must be [K, T, 2], got " +
                                  shape_str(pred.hypotheses.shape()));
  const std::int64_t K = pred.hypotheses.dim(0);
  const std::int64_t T = pred.hypotheses.dim(1);
  require(K >= 1 && T >= 1, ErrorKind::invalid, "K and T must be at least 1");
  require(pred.confidence_logits.rank() == 1 &&
              pred.confidence_logits.dim(0) == K,
          ErrorKind::invalid, "confidence_logits must be [K]");
  require(static_cast<std::int64_t>(gt.positions.size()) == 2 * T,
          ErrorKind::invalid,
          "ground truth has " + std::to_string(gt.positions.size() / 2) +
              " steps, prediction has " + std::to_string(T));
  require(static_cast<std::int64_t>(gt.availability.size()) == T,
          ErrorKind::invalid, "availability length must equal T");
  bool any = false;
  for (auto a : gt.availability) {
    any = any || a != 0;
  }
  require(any, ErrorKind::invalid,
          "ground truth has no available timesteps; filter the sample upstream");
  return {K, T};
}

// Index of the highest-confidence mode; ties go to the smallest index.
std::int64_t top_mode(const TrajectoryPrediction& pred) {
  const auto logits = pred.confidence_logits.data();
  std::int64_t best = 0;
  for (std::int64_t k = 1; k < static_cast<std::int64_t>(logits.size()); ++k) {
    if (logits[static_cast<std::size_t>(k)] >
        logits[static_cast<std::size_t>(best)]) {
      best = k;
    }
  }
  return best;
}

double mode_ade(const TrajectoryPrediction& pred, const GroundTruth& gt,
                std::int64_t k, std::int64_t T) {
  const auto hyp = pred.hypotheses.data();
  double total = 0.0;
  std::int64_t available = 0;
  for (std::int64_t t = 0; t < T; ++t) {
    if (!gt.availability[static_cast<std::size_t>(t)]) {
      continue;
    }
    const std::size_t i = static_cast<std::size_t>((k * T + t) * 2);
    const double dx = hyp[i] - gt.positions[static_cast<std::size_t>(2 * t)];
    const double dy =
        hyp[i + 1] - gt.positions[static_cast<std::size_t>(2 * t + 1)];
    total += std::hypot(dx, dy);
    ++available;
  }
  return total / static_cast<double>(available);
}

double mode_fde(const TrajectoryPrediction& pred, const GroundTruth& gt,
                std::int64_t k, std::int64_t T) {
  const auto hyp = pred.hypotheses.data();
  std::int64_t last = -1;
  for (std::int64_t t = 0; t < T; ++t) {
    if (gt.availability[static_cast<std::size_t>(t)]) {
      last = t;
    }
  }
  const std::size_t i = static_cast<std::size_t>((k * T + last) * 2);
  const double dx = hyp[i] - gt.positions[static_cast<std::size_t>(2 * last)];
  const double dy =
      hyp[i + 1] - gt.positions[static_cast<std::size_t>(2 * last + 1)];
  return std::hypot(dx, dy);
}

}  // namespace

std::vector<double> confidences(const TrajectoryPrediction& pred) {
  Tensor soft = softmax(pred.confidence_logits, 0);
  return {soft.data().begin(), soft.data().end()};
}

Tensor nll_loss(const TrajectoryPrediction& pred, const GroundTruth& gt) {
  const auto [K, T] = check_pair(pred, gt);
  (void)K;

  Tensor targets = Tensor::from_data({T, 2}, gt.positions);
  std::vector<double> mask_data(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t) {
    mask_data[static_cast<std::size_t>(t)] =
        gt.availability[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
  }
  Tensor mask = Tensor::from_data({T}, std::move(mask_data));

  Tensor diff = sub(pred.hypotheses, targets);     // [K, T, 2]
  Tensor per_step = sum_axis(mul(diff, diff), 2);  // [K, T]
  Tensor sse = sum_axis(mul(per_step, mask), 1);   // [K]
  // -lse_k(log c_k - sse_k/2) written as lse(logits) - lse(logits - sse/2):
  // the two terms cancel exactly when every SSE is zero, so a perfect
  // prediction scores exactly 0 and the loss never dips below it.
  Tensor args = sub(pred.confidence_logits, scale(sse, 0.5));
  return sub(logsumexp(pred.confidence_logits, 0), logsumexp(args, 0));
}

Tensor batch_nll(const std::vector<TrajectoryPrediction>& preds,
                 const std::vector<GroundTruth>& gts) {
  require(!preds.empty(), ErrorKind::invalid, "batch_nll: empty batch");
  require(preds.size() == gts.size(), ErrorKind::invalid,
          "batch_nll: prediction and ground-truth counts differ");
  Tensor total = nll_loss(preds[0], gts[0]);
  for (std::size_t i = 1; i < preds.size(); ++i) {
    total = add(total, nll_loss(preds[i], gts[i]));
  }
  return scale(total, 1.0 / static_cast<double>(preds.size()));
}

double ade(const TrajectoryPrediction& pred, const GroundTruth& gt) {
  const auto [K, T] = check_pair(pred, gt);
  (void)K;
  return mode_ade(pred, gt, top_mode(pred), T);
}

double fde(const TrajectoryPrediction& pred, const GroundTruth& gt) {
  const auto [K, T] = check_pair(pred, gt);
  (void)K;
  return mode_fde(pred, gt, top_mode(pred), T);
}

double best_mode_ade(const TrajectoryPrediction& pred, const GroundTruth& gt) {
  const auto [K, T] = check_pair(pred, gt);
  double best = mode_ade(pred, gt, 0, T);
  for (std::int64_t k = 1; k < K; ++k) {
    best = std::min(best, mode_ade(pred, gt, k, T));
  }
  return best;
}

double best_mode_fde(const TrajectoryPrediction& pred, const GroundTruth& gt) {
  const auto [K, T] = check_pair(pred, gt);
  double best = mode_fde(pred, gt, 0, T);
  for (std::int64_t k = 1; k < K; ++k) {
    best = std::min(best, mode_fde(pred, gt, k, T));
  }
  return best;
}

}  // namespace trajkit
