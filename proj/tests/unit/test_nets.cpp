#include <cmath>

#include "doctest.h"
#include "flowtrpo/diffcore/errors.hpp"
#include "flowtrpo/nets/adam.hpp"
#include "flowtrpo/nets/mlp.hpp"
#include "oracles.hpp"

using namespace flowtrpo;
using namespace flowtrpo::nets;

namespace {

// Straight-line evaluation: x*W + b with tanh between layers, reading weights by offset.
std::vector<double> chain_eval(const std::vector<std::size_t>& widths, const std::vector<double>& theta,
                               const std::vector<double>& x, FinalActivation fin) {
  std::vector<double> h = x;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    std::vector<double> next(out, 0.0);
    for (std::size_t j = 0; j < out; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += h[i] * theta[offset + i * out + j];
      next[j] = acc;
    }
    offset += in * out;
    for (std::size_t j = 0; j < out; ++j) next[j] += theta[offset + j];
    offset += out;
    const bool last = l + 2 == widths.size();
    for (auto& v : next) {
      if (!last) {
        v = std::tanh(v);
      } else if (fin == FinalActivation::Tanh) {
        v = std::tanh(v);
      } else if (fin == FinalActivation::SoftplusPlusOne) {
        v = std::log1p(std::exp(v)) + 1.0;
      }
    }
    h = std::move(next);
  }
  return h;
}

}  // namespace

TEST_SUITE("nets") {
  TEST_CASE("parameter count formula") {
    MlpSpec spec{3, 2, {64, 64}, FinalActivation::None};
    CHECK(spec.param_count() == (3 + 1) * 64 + (64 + 1) * 64 + (64 + 1) * 2);
    ParamLayout layout;
    Mlp net(spec, "pi", layout);
    CHECK(layout.total() == spec.param_count());
    CHECK(layout.find("pi/W0").has_value());
    CHECK(layout.find("pi/b2").has_value());
    MlpSpec bare{2, 1, {}, FinalActivation::None};
    CHECK(bare.param_count() == 3);
  }

  TEST_CASE("zero weights give zero pre-activation") {
    MlpSpec spec{3, 2, {5, 4}, FinalActivation::SoftplusPlusOne};
    ParamLayout layout;
    Mlp net(spec, "n", layout);
    std::vector<double> theta(layout.total(), 0.0);
    Tape tape;
    Var t = tape.constant(Tensor::row(theta));
    Var x = tape.constant(Tensor::from_rows({{1, -2, 3}, {0.5, 0.5, 0.5}}));
    Tensor pre = net.pre_activation(t, x).value();
    for (double v : pre.data()) CHECK(v == 0.0);
    Tensor post = net.forward(t, x).value();
    for (double v : post.data()) CHECK(v == doctest::Approx(1.693147).epsilon(1e-6));
  }

  TEST_CASE("forward matches straight-line chain evaluation") {
    Rng rng(21);
    for (auto fin : {FinalActivation::None, FinalActivation::Tanh, FinalActivation::SoftplusPlusOne}) {
      std::vector<std::size_t> hidden{static_cast<std::size_t>(2 + rng.index(5)), static_cast<std::size_t>(1 + rng.index(6))};
      MlpSpec spec{4, 3, hidden, fin};
      ParamLayout layout;
      Mlp net(spec, "m", layout);
      std::vector<double> theta(layout.total());
      for (auto& v : theta) v = 0.7 * rng.normal();
      Tensor x = rng.normal_tensor(6, 4);
      Tensor out = evaluate(net, theta, x);
      std::vector<std::size_t> widths{4, hidden[0], hidden[1], 3};
      for (std::size_t r = 0; r < 6; ++r) {
        auto row = x.row_span(r);
        auto ref = chain_eval(widths, theta, std::vector<double>(row.begin(), row.end()), fin);
        for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(out(r, c) - ref[c]) < 1e-12);
      }
    }
  }

  TEST_CASE("input dimension mismatch is a configuration error") {
    ParamLayout layout;
    Mlp net(MlpSpec{3, 1, {4}, FinalActivation::None}, "m", layout);
    std::vector<double> theta(layout.total(), 0.1);
    CHECK_THROWS_AS(evaluate(net, theta, Tensor(2, 2, 1.0)), ConfigError);
    CHECK_THROWS_AS(MlpSpec({0, 1, {4}, FinalActivation::None}).validate(), ConfigError);
  }

  TEST_CASE("initialization is seeded and scaled") {
    MlpSpec spec{64, 64, {64}, FinalActivation::None};
    ParamLayout layout;
    Mlp net(spec, "v", layout);
    auto draw = [&](std::uint64_t seed) {
      std::vector<double> flat(layout.total(), 0.0);
      Rng rng(seed);
      net.init(flat, rng);
      return flat;
    };
    auto a = draw(1), b = draw(1), c = draw(2);
    CHECK(a == b);
    CHECK(a != c);
    // 64x64 hidden-to-output block; uniform(+-sqrt(6/128)) has stddev sqrt(6/128/3) = 1/8.
    auto slot = *layout.find("v/W1");
    double s2 = 0.0;
    for (std::size_t i = 0; i < slot.size(); ++i) s2 += a[slot.offset + i] * a[slot.offset + i];
    const double sd = std::sqrt(s2 / slot.size());
    CHECK(sd > 0.8 / 8.0);
    CHECK(sd < 1.2 / 8.0);
    auto bias = *layout.find("v/b0");
    for (std::size_t i = 0; i < bias.size(); ++i) CHECK(a[bias.offset + i] == 0.0);
  }

  TEST_CASE("forward is pure and gradients match finite differences") {
    Rng rng(4);
    MlpSpec spec{2, 2, {6, 5}, FinalActivation::Tanh};
    ParamLayout layout;
    Mlp net(spec, "m", layout);
    std::vector<double> theta(layout.total());
    net.init(theta, rng);
    Tensor x = rng.normal_tensor(3, 2);
    CHECK(evaluate(net, theta, x) == evaluate(net, theta, x));
    auto f = [&](std::span<const double> p) {
      Tape tape;
      return sum(net.forward(tape.constant(Tensor::row(p)), tape.constant(x))).value().item();
    };
    Tape tape;
    Var leaf = tape.leaf(Tensor::row(theta));
    auto g = tape.gradient(sum(net.forward(leaf, tape.constant(x))), leaf);
    auto check = flowtrpo::testing::compare_gradients(g, flowtrpo::testing::richardson_diff(f, theta));
    CHECK(check.max_rel < 1e-6);
  }

  TEST_CASE("adam minimizes a quadratic") {
    Adam adam;
    adam.step_size = 0.05;
    std::vector<double> p{3.0, -2.0};
    for (int i = 0; i < 2000; ++i) {
      std::vector<double> g{2.0 * p[0], 2.0 * (p[1] - 1.0)};
      adam.step(p, g);
    }
    CHECK(std::abs(p[0]) < 1e-2);
    CHECK(std::abs(p[1] - 1.0) < 1e-2);
    CHECK(adam.steps == 2000);
  }

  TEST_CASE("adam first step moves each coordinate by the step size") {
    // Bias correction makes the first update exactly lr * g / (|g| + eps').
    Adam adam;
    std::vector<double> p{0.0, 0.0};
    std::vector<double> g{4.0, -0.5};
    adam.step(p, g);
    CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(1e-3).epsilon(1e-6));
  }
}
