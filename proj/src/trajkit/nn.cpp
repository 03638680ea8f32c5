#include "trajkit/nn.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "trajkit/error.hpp"

namespace trajkit {

namespace {

Tensor apply_activation(Activation activation, Tensor x) {
  return activation == Activation::relu ? relu(x) : x;
}

}  // namespace

ConvBlock make_conv_block(std::int64_t in_channels, std::int64_t out_channels,
                          std::int64_t kernel_size, std::int64_t stride,
                          std::int64_t padding, Activation activation,
                          Rng& rng) {
  require(in_channels > 0 && out_channels > 0 && kernel_size > 0,
          ErrorKind::invalid, "make_conv_block: channels and kernel size must be positive");
  require(stride > 0, ErrorKind::invalid, "make_conv_block: stride must be positive");
  require(padding >= 0, ErrorKind::invalid, "make_conv_block: padding must be non-negative");

  const std::int64_t fan_in = in_channels * kernel_size * kernel_size;
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> weights(
      static_cast<std::size_t>(out_channels * fan_in));
  for (double& w : weights) {
    w = rng.uniform(-bound, bound);
  }

  ConvBlock block;
  block.kernel = Tensor::from_data(
      {out_channels, in_channels, kernel_size, kernel_size}, std::move(weights),
      true);
  block.bias = Tensor::zeros({out_channels}, true);
  block.stride = stride;
  block.padding = padding;
  block.activation = activation;
  return block;
}

Tensor conv_block_forward(const ConvBlock& block, const Tensor& x) {
  require(block.kernel.rank() == 4 && block.bias.rank() == 1 &&
              block.kernel.dim(0) == block.bias.dim(0),
          ErrorKind::invalid,
          "conv_block_forward: kernel and bias output channels disagree");
  Tensor y = conv2d(x, block.kernel, block.stride, block.padding);
  y = bias_add_channels(y, block.bias);
  return apply_activation(block.activation, y);
}

ResidualBlock make_residual_block(std::int64_t in_channels,
                                  std::int64_t out_channels, std::int64_t stride,
                                  Activation activation, Rng& rng) {
  ResidualBlock block;
  block.f_path.push_back(make_conv_block(in_channels, out_channels, 3, stride, 1,
                                         Activation::relu, rng));
  block.f_path.push_back(make_conv_block(out_channels, out_channels, 3, 1, 1,
                                         Activation::none, rng));
  if (in_channels != out_channels || stride != 1) {
    block.projection = make_conv_block(in_channels, out_channels, 1, stride, 0,
                                       Activation::none, rng);
  }
  block.activation = activation;
  return block;
}

Tensor residual_forward(const ResidualBlock& block, const Tensor& x) {
  require(!block.f_path.empty(), ErrorKind::invalid,
          "residual_forward: empty residual path");
  Tensor f = x;
  for (const ConvBlock& conv : block.f_path) {
    f = conv_block_forward(conv, f);
  }
  Tensor shortcut =
      block.projection ? conv_block_forward(*block.projection, x) : x;
  require(f.shape() == shortcut.shape(), ErrorKind::invalid,
          "residual_forward: path shapes disagree, " + shape_str(f.shape()) +
              " vs " + shape_str(shortcut.shape()));
  return apply_activation(block.activation, add(f, shortcut));
}

std::vector<ResidualBlock> make_stage(std::int64_t num_blocks,
                                      std::int64_t in_channels,
                                      std::int64_t out_channels,
                                      std::int64_t stride, Rng& rng) {
  require(num_blocks > 0, ErrorKind::invalid,
          "make_stage: num_blocks must be positive");
  std::vector<ResidualBlock> stage;
  stage.reserve(static_cast<std::size_t>(num_blocks));
  stage.push_back(make_residual_block(in_channels, out_channels, stride,
                                      Activation::relu, rng));
  for (std::int64_t i = 1; i < num_blocks; ++i) {
    stage.push_back(make_residual_block(out_channels, out_channels, 1,
                                        Activation::relu, rng));
  }
  return stage;
}

void collect_parameters(const ConvBlock& block, std::vector<Tensor>& out) {
  out.push_back(block.kernel);
  out.push_back(block.bias);
}

void collect_parameters(const ResidualBlock& block, std::vector<Tensor>& out) {
  for (const ConvBlock& conv : block.f_path) {
    collect_parameters(conv, out);
  }
  if (block.projection) {
    collect_parameters(*block.projection, out);
  }
}

void collect_parameters(const std::vector<ResidualBlock>& stage,
                        std::vector<Tensor>& out) {
  for (const ResidualBlock& block : stage) {
    collect_parameters(block, out);
  }
}

std::int64_t parameter_count(const std::vector<Tensor>& params) {
  std::int64_t total = 0;
  for (const Tensor& p : params) {
    total += p.numel();
  }
  return total;
}

}  // namespace trajkit
