#include "trajkit/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "trajkit/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace trajkit {

namespace {

constexpr char kCkptHeader[] = "trajkit-ckpt v1\n";

std::string stage_block_name(std::size_t stage, std::size_t block) {
  return "stage" + std::to_string(stage) + ".block" + std::to_string(block);
}

void collect_named(const HybridModel& model,
                   std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back("stem.kernel", model.stem.kernel);
  out.emplace_back("stem.bias", model.stem.bias);
  for (std::size_t s = 0; s < model.stages.size(); ++s) {
    for (std::size_t b = 0; b < model.stages[s].size(); ++b) {
      const ResidualBlock& block = model.stages[s][b];
      const std::string prefix = stage_block_name(s, b);
      for (std::size_t f = 0; f < block.f_path.size(); ++f) {
        out.emplace_back(prefix + ".f" + std::to_string(f) + ".kernel",
                         block.f_path[f].kernel);
        out.emplace_back(prefix + ".f" + std::to_string(f) + ".bias",
                         block.f_path[f].bias);
      }
      if (block.projection) {
        out.emplace_back(prefix + ".proj.kernel", block.projection->kernel);
        out.emplace_back(prefix + ".proj.bias", block.projection->bias);
      }
    }
  }
  out.emplace_back("head.weight", model.head_weight);
  out.emplace_back("head.bias", model.head_bias);
}

struct RawTensor {
  Shape shape;
  std::vector<double> data;
};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_raw(std::ostream& out, const std::string& name, const Shape& shape,
               std::span<const double> data) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (std::int64_t dim : shape) {
    write_i64(out, dim);
  }
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  require(in.good(), ErrorKind::io, path + ": truncated checkpoint");
  return v;
}

std::int64_t read_i64(std::istream& in, const std::string& path) {
  std::int64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  require(in.good(), ErrorKind::io, path + ": truncated checkpoint");
  return v;
}

std::map<std::string, RawTensor> read_all(std::istream& in,
                                          const std::string& path) {
  const std::uint64_t count = static_cast<std::uint64_t>(read_i64(in, path));
  std::map<std::string, RawTensor> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(in, path);
    require(name_len <= 4096, ErrorKind::io, path + ": absurd tensor name");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    require(in.good(), ErrorKind::io, path + ": truncated checkpoint");
    const std::uint32_t rank = read_u32(in, path);
    require(rank <= 8, ErrorKind::io, path + ": absurd tensor rank");
    RawTensor raw;
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::int64_t dim = read_i64(in, path);
      require(dim > 0, ErrorKind::io, path + ": non-positive dimension");
      raw.shape.push_back(dim);
      numel *= dim;
    }
    raw.data.resize(static_cast<std::size_t>(numel));
    in.read(reinterpret_cast<char*>(raw.data.data()),
            static_cast<std::streamsize>(raw.data.size() * sizeof(double)));
    require(in.good(), ErrorKind::io, path + ": truncated checkpoint");
    require(tensors.emplace(name, std::move(raw)).second, ErrorKind::io,
            path + ": duplicate tensor " + name);
  }
  return tensors;
}

const RawTensor& expect(const std::map<std::string, RawTensor>& tensors,
                        const std::string& name, const std::string& path) {
  const auto it = tensors.find(name);
  require(it != tensors.end(), ErrorKind::io,
          path + ": missing tensor " + name);
  return it->second;
}

}  // namespace

HybridModel build(const BaseArchitecture& base, const ScalingCoefficients& coeffs,
                  std::int64_t K, std::int64_t T, std::uint64_t seed,
                  std::int64_t in_channels, double constraint_tol) {
  validate(coeffs);
  require(K >= 1 && T >= 1, ErrorKind::invalid, "K and T must be at least 1");
  require(in_channels >= 1, ErrorKind::invalid,
          "in_channels must be at least 1");
  require(check_constraint(coeffs, constraint_tol), ErrorKind::constraint,
          "scaling constraint violated: alpha*beta^2*gamma^2 = " +
              std::to_string(constraint_product(coeffs)) +
              ", need within " + std::to_string(constraint_tol) + " of 2");

  HybridModel model;
  model.base = base;
  model.base.num_modes = K;
  model.base.num_steps = T;
  model.coeffs = coeffs;
  model.scaled = apply_scaling(model.base, derive_multipliers(coeffs));
  model.in_channels = in_channels;

  Rng rng(seed);
  model.stem = make_conv_block(in_channels, model.scaled.stage_channels[0], 3, 1,
                               1, Activation::relu, rng);
  std::int64_t channels = model.scaled.stage_channels[0];
  for (std::size_t i = 0; i < model.scaled.stage_layers.size(); ++i) {
    const std::int64_t out = model.scaled.stage_channels[i];
    const std::int64_t stride = i == 0 ? 1 : 2;
    model.stages.push_back(
        make_stage(model.scaled.stage_layers[i], channels, out, stride, rng));
    channels = out;
  }

  const std::int64_t outputs = model.head_outputs();
  const double bound = std::sqrt(1.0 / static_cast<double>(channels));
  std::vector<double> weight(static_cast<std::size_t>(channels * outputs));
  for (double& w : weight) {
    w = rng.uniform(-bound, bound);
  }
  model.head_weight =
      Tensor::from_data({channels, outputs}, std::move(weight), true);
  model.head_bias = Tensor::zeros({outputs}, true);
  return model;
}

std::vector<TrajectoryPrediction> forward_batch(const HybridModel& model,
                                                const Tensor& rasters) {
  require(rasters.defined() && rasters.rank() == 4, ErrorKind::invalid,
          "forward expects rasters [N, C, S, S]");
  const std::int64_t S = model.scaled.input_resolution;
  require(rasters.dim(1) == model.in_channels && rasters.dim(2) == S &&
              rasters.dim(3) == S,
          ErrorKind::invalid,
          "raster shape mismatch: expected [N," +
              std::to_string(model.in_channels) + "," + std::to_string(S) + "," +
              std::to_string(S) + "], got " + shape_str(rasters.shape()));

  Tensor x = conv_block_forward(model.stem, rasters);
  for (const auto& stage : model.stages) {
    for (const ResidualBlock& block : stage) {
      x = residual_forward(block, x);
    }
  }
  Tensor pooled = global_avg_pool(x);  // [N, C_last]
  Tensor out = add(matmul(pooled, model.head_weight), model.head_bias);

  const std::int64_t N = rasters.dim(0);
  const std::int64_t K = model.num_modes();
  const std::int64_t T = model.num_steps();
  std::vector<TrajectoryPrediction> preds;
  preds.reserve(static_cast<std::size_t>(N));
  for (std::int64_t i = 0; i < N; ++i) {
    Tensor row = reshape(slice(out, 0, i, 1), {model.head_outputs()});
    TrajectoryPrediction pred;
    pred.hypotheses = reshape(slice(row, 0, 0, K * T * 2), {K, T, 2});
    pred.confidence_logits = slice(row, 0, K * T * 2, K);
    preds.push_back(std::move(pred));
  }
  return preds;
}

TrajectoryPrediction forward(const HybridModel& model, const Tensor& raster) {
  require(raster.defined() && raster.rank() == 3, ErrorKind::invalid,
          "forward expects a raster [C, S, S], got " +
              (raster.defined() ? shape_str(raster.shape()) : "undefined"));
  Tensor batched =
      reshape(raster, {1, raster.dim(0), raster.dim(1), raster.dim(2)});
  return forward_batch(model, batched)[0];
}

Tensor stack_rasters(const std::vector<Tensor>& rasters) {
  require(!rasters.empty(), ErrorKind::invalid, "cannot stack zero rasters");
  const Shape unit = rasters[0].shape();
  require(unit.size() == 3, ErrorKind::invalid, "rasters must be [C, S, S]");
  std::vector<double> data;
  data.reserve(rasters.size() * static_cast<std::size_t>(rasters[0].numel()));
  for (const Tensor& r : rasters) {
    require(r.shape() == unit, ErrorKind::invalid,
            "raster shapes disagree within a batch");
    data.insert(data.end(), r.data().begin(), r.data().end());
  }
  return Tensor::from_data(
      {static_cast<std::int64_t>(rasters.size()), unit[0], unit[1], unit[2]},
      std::move(data));
}

std::vector<Tensor> parameters(const HybridModel& model) {
  std::vector<Tensor> params;
  for (auto& [name, tensor] : named_parameters(model)) {
    params.push_back(tensor);
  }
  return params;
}

std::vector<std::pair<std::string, Tensor>> named_parameters(
    const HybridModel& model) {
  std::vector<std::pair<std::string, Tensor>> named;
  collect_named(model, named);
  return named;
}

std::int64_t parameter_count(const HybridModel& model) {
  return parameter_count(parameters(model));
}

void save_checkpoint(const HybridModel& model, const RAdam* optimizer,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write " + path);
  out.write(kCkptHeader, sizeof(kCkptHeader) - 1);

  const auto named = named_parameters(model);
  std::uint64_t count = named.size() + 6;  // meta tensors below
  if (optimizer) {
    count += 2 + 2 * named.size();  // opt.config, opt.t, per-parameter m and v
  }
  write_i64(out, static_cast<std::int64_t>(count));

  const auto& b = model.base;
  std::vector<double> layers(b.stage_layers.begin(), b.stage_layers.end());
  std::vector<double> channels(b.stage_channels.begin(), b.stage_channels.end());
  write_raw(out, "meta.coeffs", {4},
            std::vector<double>{model.coeffs.alpha, model.coeffs.beta,
                                model.coeffs.gamma, model.coeffs.phi});
  write_raw(out, "meta.base.layers",
            {static_cast<std::int64_t>(layers.size())}, layers);
  write_raw(out, "meta.base.channels",
            {static_cast<std::int64_t>(channels.size())}, channels);
  write_raw(out, "meta.base.resolution", {1},
            std::vector<double>{static_cast<double>(b.input_resolution)});
  write_raw(out, "meta.head", {2},
            std::vector<double>{static_cast<double>(b.num_modes),
                                static_cast<double>(b.num_steps)});
  write_raw(out, "meta.in_channels", {1},
            std::vector<double>{static_cast<double>(model.in_channels)});

  for (const auto& [name, tensor] : named) {
    write_raw(out, name, tensor.shape(), tensor.data());
  }

  if (optimizer) {
    const RAdamConfig& cfg = optimizer->config();
    write_raw(out, "opt.config", {4},
              std::vector<double>{cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon});
    const RAdam::State state = optimizer->state();
    write_raw(out, "opt.t", {1},
              std::vector<double>{static_cast<double>(state.t)});
    require(state.m.size() == named.size(), ErrorKind::invalid,
            "optimizer state does not match the model parameters");
    for (std::size_t i = 0; i < named.size(); ++i) {
      const Shape& shape = named[i].second.shape();
      write_raw(out, "opt." + named[i].first + ".m", shape, state.m[i]);
      write_raw(out, "opt." + named[i].first + ".v", shape, state.v[i]);
    }
  }
  require(out.good(), ErrorKind::io, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open " + path);
  char header[sizeof(kCkptHeader) - 1];
  in.read(header, sizeof(header));
  require(in.good() && std::memcmp(header, kCkptHeader, sizeof(header)) == 0,
          ErrorKind::io, path + ": not a checkpoint file");

  const auto tensors = read_all(in, path);

  const auto& coeffs = expect(tensors, "meta.coeffs", path);
  const auto& layers = expect(tensors, "meta.base.layers", path);
  const auto& channels = expect(tensors, "meta.base.channels", path);
  const auto& resolution = expect(tensors, "meta.base.resolution", path);
  const auto& head = expect(tensors, "meta.head", path);
  const auto& in_ch = expect(tensors, "meta.in_channels", path);

  BaseArchitecture base;
  base.stage_layers.assign(layers.data.begin(), layers.data.end());
  base.stage_channels.assign(channels.data.begin(), channels.data.end());
  base.input_resolution = static_cast<std::int64_t>(resolution.data.at(0));
  base.num_modes = static_cast<std::int64_t>(head.data.at(0));
  base.num_steps = static_cast<std::int64_t>(head.data.at(1));

  Checkpoint ckpt;
  ckpt.model = build(
      base,
      {coeffs.data.at(0), coeffs.data.at(1), coeffs.data.at(2),
       coeffs.data.at(3)},
      base.num_modes, base.num_steps, /*seed=*/0,
      static_cast<std::int64_t>(in_ch.data.at(0)),
      /*constraint_tol=*/1e9);  // stored coeffs were validated at build time

  for (auto& [name, tensor] : named_parameters(ckpt.model)) {
    const RawTensor& raw = expect(tensors, name, path);
    require(raw.shape == tensor.shape(), ErrorKind::io,
            path + ": tensor " + name + " has shape " + shape_str(raw.shape) +
                ", expected " + shape_str(tensor.shape()));
    auto dst = tensor.mutable_data();
    std::copy(raw.data.begin(), raw.data.end(), dst.begin());
  }

  if (tensors.count("opt.t") != 0) {
    const auto& cfg = expect(tensors, "opt.config", path);
    ckpt.opt_config = {cfg.data.at(0), cfg.data.at(1), cfg.data.at(2),
                       cfg.data.at(3)};
    ckpt.opt_state.t = static_cast<std::int64_t>(
        expect(tensors, "opt.t", path).data.at(0));
    for (const auto& [name, tensor] : named_parameters(ckpt.model)) {
      ckpt.opt_state.m.push_back(expect(tensors, "opt." + name + ".m", path).data);
      ckpt.opt_state.v.push_back(expect(tensors, "opt." + name + ".v", path).data);
    }
    ckpt.has_optimizer = true;
  }
  return ckpt;
}

}  // namespace trajkit
