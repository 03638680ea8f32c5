#pragma once

#include <cstdint>
#include <vector>

#include "trajkit/tensor.hpp"

namespace trajkit {

struct RAdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// The variance-rectification decision for step t, exposed so the branch
// boundary (rho_t > 4, where the square root turns real) is testable.
struct RectificationTerms {
  double rho_inf = 0.0;
  double rho_t = 0.0;
  bool rectified = false;
  double rectifier = 0.0;  // r_t, meaningful only when rectified
};

RectificationTerms radam_rectification(double beta2, std::int64_t t);

// Rectified Adam over leaf tensors.  step() consumes the gradients that
// backward() accumulated; callers zero grads between steps.
class RAdam {
 public:
  explicit RAdam(std::vector<Tensor> params, RAdamConfig config = {});

  void step();

  std::int64_t step_count() const { return t_; }
  const RAdamConfig& config() const { return config_; }
  const std::vector<Tensor>& params() const { return params_; }

  struct State {
    std::int64_t t = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
  };
  State state() const;
  void restore(const State& state);

 private:
  std::vector<Tensor> params_;
  RAdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// p <- p - lr * grad for every parameter.
void sgd_step(const std::vector<Tensor>& params, double lr);

}  // namespace trajkit
