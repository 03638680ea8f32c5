#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "trajkit/error.hpp"
#include "trajkit/rng.hpp"
#include "trajkit/tensor.hpp"

using trajkit::Error;
using trajkit::Rng;
using trajkit::Shape;
using trajkit::Tensor;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad,
                     double lo = -1.0, double hi = 1.0) {
  std::vector<double> data(static_cast<std::size_t>(trajkit::shape_numel(shape)));
  for (double& v : data) {
    v = rng.uniform(lo, hi);
  }
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("add elementwise and identities") {
  Tensor a = Tensor::from_data({2}, {1.0, 2.0});
  Tensor b = Tensor::from_data({2}, {3.0, 4.0});
  Tensor c = trajkit::add(a, b);
  CHECK(c.data()[0] == 4.0);
  CHECK(c.data()[1] == 6.0);

  Tensor x = Tensor::from_data({2, 2}, {1.5, -2.0, 0.25, 7.0});
  Tensor z = Tensor::zeros({2, 2});
  Tensor y = trajkit::add(x, z);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(y.data()[i] == x.data()[i]);
  }
}

TEST_CASE("add broadcasts along leading dimensions") {
  // [2,2,2] + [1,2,2] tiles the second operand across the first axis.
  Tensor a = Tensor::full({2, 2, 2}, 1.0);
  Tensor b = Tensor::from_data({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor c = trajkit::add(a, b);
  CHECK(c.data()[0] == 2.0);
  CHECK(c.data()[3] == 5.0);
  CHECK(c.data()[4] == 2.0);
  CHECK(c.data()[7] == 5.0);

  // Bias-vector style: [2,3] + [3].
  Tensor m = Tensor::zeros({2, 3});
  Tensor bias = Tensor::from_data({3}, {1.0, 2.0, 3.0});
  Tensor r = trajkit::add(m, bias);
  CHECK(r.data()[0] == 1.0);
  CHECK(r.data()[5] == 3.0);

  CHECK_THROWS_AS(trajkit::add(Tensor::zeros({2, 3}), Tensor::zeros({2})), Error);
}

TEST_CASE("gradient of sum(a+b) is ones; matches finite differences") {
  Rng rng(7);
  Tensor a = random_tensor({2, 3}, rng, true);
  Tensor b = random_tensor({2, 3}, rng, true);
  Tensor loss = trajkit::sum(trajkit::add(a, b));
  trajkit::backward(loss);
  for (double g : a.grad()) {
    CHECK(g == 1.0);
  }
  auto report = oracles::fd_check({a, b}, [&] {
    return trajkit::sum(trajkit::add(a, b));
  });
  CHECK(report.max_rel_err <= 1e-4);
}

TEST_CASE("matmul basics") {
  Tensor eye = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor m = Tensor::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor r = trajkit::matmul(eye, m);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.data()[i] == m.data()[i]);
  }

  Tensor row = Tensor::from_data({1, 2}, {1.0, 2.0});
  Tensor col = Tensor::from_data({2, 1}, {3.0, 4.0});
  CHECK(trajkit::matmul(row, col).item() == 11.0);

  CHECK_THROWS_AS(trajkit::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})),
                  Error);
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng, true);
  Tensor b = random_tensor({4, 2}, rng, true);
  Tensor w = random_tensor({3, 2}, rng, false);
  auto forward = [&] { return trajkit::sum(trajkit::mul(trajkit::matmul(a, b), w)); };
  auto report = oracles::fd_check({a, b}, forward);
  CHECK(report.checked == 20);
  CHECK(report.max_rel_err <= 1e-4);
}

TEST_CASE("conv2d trivial kernels") {
  Tensor ones_in = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor ones_k = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor out = trajkit::conv2d(ones_in, ones_k, 1, 0);
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out.item() == 9.0);

  Rng rng(3);
  Tensor x = random_tensor({2, 1, 4, 5}, rng, false);
  Tensor identity = Tensor::full({1, 1, 1, 1}, 1.0);
  Tensor y = trajkit::conv2d(x, identity, 1, 0);
  REQUIRE(y.numel() == x.numel());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    CHECK(y.data()[static_cast<std::size_t>(i)] ==
          x.data()[static_cast<std::size_t>(i)]);
  }

  CHECK_THROWS_AS(trajkit::conv2d(Tensor::zeros({1, 1, 2, 2}),
                                  Tensor::zeros({1, 1, 5, 5}), 1, 1),
                  Error);
}

TEST_CASE("conv2d matches the naive reference on random shapes") {
  Rng rng(19);
  struct Case {
    oracles::ConvSpec spec;
  };
  const std::vector<oracles::ConvSpec> cases = {
      {2, 3, 8, 8, 4, 3, 3, 1, 0},
      {1, 2, 7, 9, 3, 3, 3, 2, 1},
      {2, 1, 5, 5, 2, 1, 1, 1, 0},
      {1, 4, 6, 6, 2, 5, 3, 2, 2},
  };
  for (const auto& spec : cases) {
    Tensor in = random_tensor({spec.batch, spec.in_ch, spec.in_h, spec.in_w}, rng,
                              false);
    Tensor k = random_tensor({spec.out_ch, spec.in_ch, spec.k_h, spec.k_w}, rng,
                             false);
    Tensor out = trajkit::conv2d(in, k, spec.stride, spec.pad);
    std::vector<double> expect = oracles::conv2d_reference(
        {in.data().begin(), in.data().end()}, {k.data().begin(), k.data().end()},
        spec);
    REQUIRE(out.numel() == static_cast<std::int64_t>(expect.size()));
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(std::abs(out.data()[i] - expect[i]) <= 1e-10);
    }
  }
}

TEST_CASE("conv2d gradients vs finite differences") {
  Rng rng(23);
  Tensor in = random_tensor({2, 3, 8, 8}, rng, true);
  Tensor k = random_tensor({4, 3, 3, 3}, rng, true);
  Tensor w = random_tensor({2, 4, 8, 8}, rng, false);
  auto forward = [&] {
    return trajkit::sum(trajkit::mul(trajkit::conv2d(in, k, 1, 1), w));
  };
  auto report = oracles::fd_check({in, k}, forward);
  CHECK(report.max_rel_err <= 1e-4);

  // Strided case.
  Tensor in2 = random_tensor({1, 2, 6, 6}, rng, true);
  Tensor k2 = random_tensor({2, 2, 3, 3}, rng, true);
  auto forward2 = [&] {
    return trajkit::sum(trajkit::conv2d(in2, k2, 2, 1));
  };
  auto report2 = oracles::fd_check({in2, k2}, forward2);
  CHECK(report2.max_rel_err <= 1e-4);
}

TEST_CASE("bias_add_channels and its gradient") {
  Rng rng(29);
  Tensor x = random_tensor({2, 3, 4, 4}, rng, true);
  Tensor b = random_tensor({3}, rng, true);
  Tensor y = trajkit::bias_add_channels(x, b);
  CHECK(y.data()[0] == x.data()[0] + b.data()[0]);

  Tensor w = random_tensor({2, 3, 4, 4}, rng, false);
  auto report = oracles::fd_check({x, b}, [&] {
    return trajkit::sum(trajkit::mul(trajkit::bias_add_channels(x, b), w));
  });
  CHECK(report.max_rel_err <= 1e-4);
}

TEST_CASE("relu, pooling, reshape gradients") {
  Rng rng(31);
  // Keep inputs away from the relu kink so finite differences stay valid.
  Tensor x = random_tensor({2, 2, 3, 3}, rng, true, 0.1, 1.0);
  Tensor sign = random_tensor({2, 2, 3, 3}, rng, false);
  auto flip = x.mutable_data();
  for (std::size_t i = 0; i < flip.size(); ++i) {
    if (sign.data()[i] < 0) {
      flip[i] = -flip[i];
    }
  }
  Tensor w = random_tensor({2, 2}, rng, false);
  auto forward = [&] {
    Tensor pooled = trajkit::global_avg_pool(trajkit::relu(x));
    return trajkit::sum(trajkit::mul(pooled, w));
  };
  auto report = oracles::fd_check({x}, forward);
  CHECK(report.max_rel_err <= 1e-4);

  Tensor r = trajkit::reshape(x, {4, 9});
  CHECK(r.shape() == Shape{4, 9});
  CHECK_THROWS_AS(trajkit::reshape(x, {5, 5}), Error);

  Tensor w9 = random_tensor({9}, rng, false);
  auto report2 = oracles::fd_check({x}, [&] {
    return trajkit::sum(trajkit::mul(trajkit::reshape(x, {4, 9}), w9));
  });
  CHECK(report2.max_rel_err <= 1e-4);
}

TEST_CASE("softmax and logsumexp values") {
  Tensor two_zeros = Tensor::from_data({2}, {0.0, 0.0});
  CHECK(trajkit::logsumexp(two_zeros, 0).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  for (double c : {-3.0, 0.0, 42.0}) {
    Tensor t = Tensor::full({3}, c);
    Tensor s = trajkit::softmax(t, 0);
    for (double v : s.data()) {
      CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
  }

  Tensor big = Tensor::from_data({2}, {1000.0, 1000.0});
  const double lse = trajkit::logsumexp(big, 0).item();
  CHECK(std::isfinite(lse));
  CHECK(lse == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));

  CHECK_THROWS_AS(trajkit::softmax(two_zeros, 1), Error);
  CHECK_THROWS_AS(trajkit::logsumexp(two_zeros, -1), Error);
}

TEST_CASE("logsumexp shift invariance and softmax normalization") {
  Rng rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({5}, rng, false, -20.0, 20.0);
    const double c = rng.uniform(-100.0, 100.0);
    std::vector<double> shifted(x.data().begin(), x.data().end());
    for (double& v : shifted) {
      v += c;
    }
    Tensor xs = Tensor::from_data({5}, std::move(shifted));
    const double a = trajkit::logsumexp(x, 0).item() + c;
    const double b = trajkit::logsumexp(xs, 0).item();
    CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));

    Tensor sm = trajkit::softmax(x, 0);
    double total = 0.0;
    for (double v : sm.data()) {
      CHECK(v > 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax and logsumexp gradients along interior axis") {
  Rng rng(41);
  Tensor x = random_tensor({2, 3, 2}, rng, true, -2.0, 2.0);
  Tensor w = random_tensor({2, 3, 2}, rng, false);
  auto report = oracles::fd_check({x}, [&] {
    return trajkit::sum(trajkit::mul(trajkit::softmax(x, 1), w));
  });
  CHECK(report.max_rel_err <= 1e-4);

  Tensor w2 = random_tensor({2, 2}, rng, false);
  auto report2 = oracles::fd_check({x}, [&] {
    return trajkit::sum(trajkit::mul(trajkit::logsumexp(x, 1), w2));
  });
  CHECK(report2.max_rel_err <= 1e-4);
}

TEST_CASE("sum_axis and slice") {
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor s0 = trajkit::sum_axis(x, 0);
  CHECK(s0.shape() == Shape{3});
  CHECK(s0.data()[0] == 5.0);
  Tensor s1 = trajkit::sum_axis(x, 1);
  CHECK(s1.shape() == Shape{2});
  CHECK(s1.data()[1] == 15.0);

  Tensor sl = trajkit::slice(x, 1, 1, 2);
  CHECK(sl.shape() == Shape{2, 2});
  CHECK(sl.data()[0] == 2.0);
  CHECK(sl.data()[3] == 6.0);
  CHECK_THROWS_AS(trajkit::slice(x, 1, 2, 2), Error);

  Rng rng(43);
  Tensor y = random_tensor({3, 4, 2}, rng, true);
  Tensor w = random_tensor({3, 2, 2}, rng, false);
  auto report = oracles::fd_check({y}, [&] {
    return trajkit::sum(trajkit::mul(trajkit::slice(y, 1, 1, 2), w));
  });
  CHECK(report.max_rel_err <= 1e-4);

  Tensor w2 = random_tensor({3, 2}, rng, false);
  auto report2 = oracles::fd_check({y}, [&] {
    return trajkit::sum(trajkit::mul(trajkit::sum_axis(y, 1), w2));
  });
  CHECK(report2.max_rel_err <= 1e-4);
}

TEST_CASE("backward basics") {
  Rng rng(47);
  Tensor x = random_tensor({3, 2}, rng, true);

  SUBCASE("sum gives ones") {
    trajkit::backward(trajkit::sum(x));
    for (double g : x.grad()) {
      CHECK(g == 1.0);
    }
  }

  SUBCASE("sum of squares gives 2x") {
    trajkit::backward(trajkit::sum(trajkit::mul(x, x)));
    for (std::size_t i = 0; i < x.grad().size(); ++i) {
      CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-12));
    }
  }

  SUBCASE("non-scalar loss is rejected") {
    CHECK_THROWS_AS(trajkit::backward(trajkit::mul(x, x)), Error);
  }

  SUBCASE("grads accumulate until reset") {
    trajkit::backward(trajkit::sum(x));
    trajkit::backward(trajkit::sum(x));
    for (double g : x.grad()) {
      CHECK(g == 2.0);
    }
    x.zero_grad();
    trajkit::backward(trajkit::sum(x));
    for (double g : x.grad()) {
      CHECK(g == 1.0);
    }
  }

  SUBCASE("diamond graphs route gradient through both paths") {
    // loss = sum(x + x) -> grad 2 per element.
    trajkit::backward(trajkit::sum(trajkit::add(x, x)));
    for (double g : x.grad()) {
      CHECK(g == 2.0);
    }
  }
}

TEST_CASE("forward is bit-identical across repeated runs") {
  Rng rng(53);
  Tensor in = random_tensor({1, 2, 6, 6}, rng, false);
  Tensor k = random_tensor({3, 2, 3, 3}, rng, false);
  auto run = [&] {
    Tensor c = trajkit::conv2d(in, k, 1, 1);
    Tensor p = trajkit::global_avg_pool(trajkit::relu(c));
    return trajkit::logsumexp(trajkit::reshape(p, {3}), 0).item();
  };
  const double a = run();
  const double b = run();
  CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
}
