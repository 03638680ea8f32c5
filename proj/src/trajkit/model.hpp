#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trajkit/loss.hpp"
#include "trajkit/nn.hpp"
#include "trajkit/optim.hpp"
#include "trajkit/scaling.hpp"

namespace trajkit {

// Residual backbone sized by compound scaling, with a dense multimodal
// trajectory head: global average pool -> K*T*2 coordinates + K logits.
struct HybridModel {
  BaseArchitecture base;       // pre-scaling skeleton
  ScalingCoefficients coeffs;  // applied at build time
  BaseArchitecture scaled;     // = apply_scaling(base, derive_multipliers(coeffs))
  std::int64_t in_channels = 0;
  ConvBlock stem;
  std::vector<std::vector<ResidualBlock>> stages;
  Tensor head_weight;  // [C_last, K*T*2 + K]
  Tensor head_bias;    // [K*T*2 + K]

  std::int64_t num_modes() const { return scaled.num_modes; }
  std::int64_t num_steps() const { return scaled.num_steps; }
  std::int64_t head_outputs() const {
    return num_modes() * num_steps() * 2 + num_modes();
  }
};

// K and T override the head arity of `base`.  Fails with the constraint
// product when coeffs violate |alpha*beta^2*gamma^2 - 2| <= tol.
HybridModel build(const BaseArchitecture& base, const ScalingCoefficients& coeffs,
                  std::int64_t K, std::int64_t T, std::uint64_t seed,
                  std::int64_t in_channels = 11, double constraint_tol = 0.1);

// Single raster [C, S, S] -> one prediction.
TrajectoryPrediction forward(const HybridModel& model, const Tensor& raster);

// Batched rasters [N, C, S, S] -> per-sample predictions sliced from one
// shared graph, so batch_nll backpropagates through a single forward pass.
std::vector<TrajectoryPrediction> forward_batch(const HybridModel& model,
                                                const Tensor& rasters);

Tensor stack_rasters(const std::vector<Tensor>& rasters);

std::vector<Tensor> parameters(const HybridModel& model);
std::vector<std::pair<std::string, Tensor>> named_parameters(
    const HybridModel& model);
std::int64_t parameter_count(const HybridModel& model);

struct Checkpoint {
  HybridModel model;
  bool has_optimizer = false;
  RAdamConfig opt_config;
  RAdam::State opt_state;
};

// Versioned binary container; round-trips every double bit-exactly.  Pass a
// null optimizer to save a model-only checkpoint.
void save_checkpoint(const HybridModel& model, const RAdam* optimizer,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace trajkit
