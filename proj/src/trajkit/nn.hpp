#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "trajkit/rng.hpp"
#include "trajkit/tensor.hpp"

namespace trajkit {

enum class Activation { relu, none };

// Convolution + per-channel bias + optional activation.  kernel is
// [O, C, kh, kw], bias is [O].
struct ConvBlock {
  Tensor kernel;
  Tensor bias;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  Activation activation = Activation::none;
};

// Residual mapping (f_path) summed with a shortcut.  The shortcut is the
// identity exactly when f_path preserves channel count and spatial size;
// otherwise it is a 1x1 projection matching the f_path output shape.
struct ResidualBlock {
  std::vector<ConvBlock> f_path;
  std::optional<ConvBlock> projection;
  Activation activation = Activation::relu;
};

// Weights are uniform in +-sqrt(1/fan_in); biases start at zero.
ConvBlock make_conv_block(std::int64_t in_channels, std::int64_t out_channels,
                          std::int64_t kernel_size, std::int64_t stride,
                          std::int64_t padding, Activation activation, Rng& rng);

Tensor conv_block_forward(const ConvBlock& block, const Tensor& x);

// Two 3x3 convolutions on the residual path.  stride and the channel change
// are carried by the first convolution; a projection shortcut appears iff
// either differs from the identity.
ResidualBlock make_residual_block(std::int64_t in_channels,
                                  std::int64_t out_channels, std::int64_t stride,
                                  Activation activation, Rng& rng);

// activation(F(x) + shortcut(x))
Tensor residual_forward(const ResidualBlock& block, const Tensor& x);

// First block carries the stride and channel change; the rest are
// identity-shortcut blocks at stride 1.
std::vector<ResidualBlock> make_stage(std::int64_t num_blocks,
                                      std::int64_t in_channels,
                                      std::int64_t out_channels,
                                      std::int64_t stride, Rng& rng);

void collect_parameters(const ConvBlock& block, std::vector<Tensor>& out);
void collect_parameters(const ResidualBlock& block, std::vector<Tensor>& out);
void collect_parameters(const std::vector<ResidualBlock>& stage,
                        std::vector<Tensor>& out);

std::int64_t parameter_count(const std::vector<Tensor>& params);

}  // namespace trajkit
