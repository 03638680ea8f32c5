#include "trajkit/optim.hpp"

#include <cmath>
#include <string>

#include "trajkit/error.hpp"

namespace trajkit {

namespace {

std::span<const double> checked_grad(const Tensor& param) {
  require(param.defined() && param.requires_grad(), ErrorKind::invalid,
          "optimizer parameters must be leaf tensors with requires_grad");
  const auto grad = param.grad();
  require(grad.size() == param.data().size(), ErrorKind::invalid,
          "parameter has no populated gradient; run backward() first");
  return grad;
}

}  // namespace

RectificationTerms radam_rectification(double beta2, std::int64_t t) {
  require(beta2 > 0.0 && beta2 < 1.0, ErrorKind::invalid,
          "beta2 must lie in (0, 1)");
  require(t >= 1, ErrorKind::invalid, "step index must be at least 1");
  RectificationTerms terms;
  terms.rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double beta2_t = std::pow(beta2, static_cast<double>(t));
  terms.rho_t =
      terms.rho_inf - 2.0 * static_cast<double>(t) * beta2_t / (1.0 - beta2_t);
  terms.rectified = terms.rho_t > 4.0;
  if (terms.rectified) {
    terms.rectifier = std::sqrt(
        ((terms.rho_t - 4.0) * (terms.rho_t - 2.0) * terms.rho_inf) /
        ((terms.rho_inf - 4.0) * (terms.rho_inf - 2.0) * terms.rho_t));
  }
  return terms;
}

RAdam::RAdam(std::vector<Tensor> params, RAdamConfig config)
    : params_(std::move(params)), config_(config) {
  require(config_.lr > 0.0, ErrorKind::invalid, "learning rate must be positive");
  require(config_.beta1 >= 0.0 && config_.beta1 < 1.0, ErrorKind::invalid,
          "beta1 must lie in [0, 1)");
  require(config_.beta2 > 0.0 && config_.beta2 < 1.0, ErrorKind::invalid,
          "beta2 must lie in (0, 1)");
  require(config_.epsilon > 0.0, ErrorKind::invalid, "epsilon must be positive");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    require(p.defined() && p.requires_grad(), ErrorKind::invalid,
            "optimizer parameters must be leaf tensors with requires_grad");
    m_.emplace_back(p.data().size(), 0.0);
    v_.emplace_back(p.data().size(), 0.0);
  }
}

void RAdam::step() {
  ++t_;
  const RectificationTerms terms = radam_rectification(config_.beta2, t_);
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto grad = checked_grad(params_[i]);
    auto data = params_[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[j] / bias1;
      if (terms.rectified) {
        const double v_hat = std::sqrt(v[j] / bias2);
        data[j] -= config_.lr * terms.rectifier * m_hat /
                   (v_hat + config_.epsilon);
      } else {
        data[j] -= config_.lr * m_hat;
      }
    }
  }
}

RAdam::State RAdam::state() const { return {t_, m_, v_}; }

void RAdam::restore(const State& state) {
  require(state.m.size() == params_.size() && state.v.size() == params_.size(),
          ErrorKind::invalid, "optimizer state parameter count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    require(state.m[i].size() == params_[i].data().size() &&
                state.v[i].size() == params_[i].data().size(),
            ErrorKind::invalid,
            "optimizer state shape mismatch at parameter " + std::to_string(i));
  }
  require(state.t >= 0, ErrorKind::invalid, "step counter must be non-negative");
  t_ = state.t;
  m_ = state.m;
  v_ = state.v;
}

void sgd_step(const std::vector<Tensor>& params, double lr) {
  for (const Tensor& p : params) {
    const auto grad = checked_grad(p);
    Tensor mutable_p = p;
    auto data = mutable_p.mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      data[j] -= lr * grad[j];
    }
  }
}

}  // namespace trajkit
