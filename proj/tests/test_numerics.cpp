#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "vtranse/error.hpp"
#include "vtranse/numerics.hpp"

using namespace vtranse;

TEST_CASE("dot, norm and matrix products") {
  const Vector a{1, 2, 3}, b{4, -5, 6};
  CHECK(dot(a, b) == 12.0);
  CHECK(norm(Vector{3, 4}) == doctest::Approx(5.0));
  CHECK_THROWS_AS(dot(a, Vector{1, 2}), DimensionError);

  Matrix w(2, 2);
  w(0, 0) = 1, w(0, 1) = 2, w(1, 0) = 3, w(1, 1) = 4;
  CHECK(matvec(w, Vector{1, 1}) == Vector{3, 7});
  CHECK(matvec_transposed(w, Vector{1, 1}) == Vector{4, 6});
  CHECK_THROWS_AS(matvec(w, Vector{1, 1, 1}), DimensionError);

  Matrix z(2, 3);
  add_outer(z, Vector{1, 2}, Vector{1, 0, -1}, 2.0);
  CHECK(z(1, 0) == 4.0);
  CHECK(z(1, 2) == -4.0);
  CHECK(z(0, 1) == 0.0);

  Vector y{1, 1};
  axpy(3.0, Vector{1, 2}, y);
  CHECK(y == Vector{4, 7});
}

TEST_CASE("softmax is stable and normalised") {
  const Vector p = softmax(Vector{1000.0, 1000.0});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  const Vector q = softmax(Vector{0.0, 10.0});
  CHECK(q[1] == doctest::Approx(0.9999546).epsilon(1e-6));

  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const Vector logits = oracle::gaussian(rng, 1 + oracle::pick(rng, 6), 5.0);
    const Vector s = softmax(logits);
    double total = 0.0;
    for (double v : s) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    Vector shifted = logits;
    for (double& v : shifted) v += 123.0;
    CHECK(argmax(softmax(shifted)) == argmax(s));
  }
  CHECK_THROWS_AS(softmax(Vector{}), DimensionError);
}

TEST_CASE("log_sum_exp") {
  CHECK(log_sum_exp(Vector{0.0, 0.0}) == doctest::Approx(std::log(2.0)));
  CHECK(log_sum_exp(Vector{1000.0}) == doctest::Approx(1000.0));
  CHECK_THROWS_AS(log_sum_exp(Vector{}), DimensionError);
  CHECK_THROWS_AS(log_sum_exp(Vector{std::numeric_limits<double>::quiet_NaN()}), NumericError);
}

TEST_CASE("argmax prefers the lowest index on ties") {
  CHECK(argmax(Vector{0.0, 0.0}) == 0);
  CHECK(argmax(Vector{1.0, 3.0, 3.0}) == 1);
  CHECK_THROWS_AS(argmax(Vector{}), DimensionError);
}

TEST_CASE("require_finite") {
  CHECK_NOTHROW(require_finite(Vector{1.0, 2.0}, "v"));
  CHECK_THROWS_AS(require_finite(Vector{std::numeric_limits<double>::infinity()}, "v"), NumericError);
  CHECK_FALSE(all_finite(Vector{std::numeric_limits<double>::quiet_NaN()}));
}

TEST_CASE("sgd momentum step by hand") {
  SgdConfig cfg{0.1, 0.5, 0.0};
  Vector theta{1.0}, v{0.0};
  sgd_momentum_step(theta, Vector{2.0}, v, cfg);
  CHECK(v[0] == doctest::Approx(-0.2));
  CHECK(theta[0] == doctest::Approx(0.8));
  sgd_momentum_step(theta, Vector{2.0}, v, cfg);
  CHECK(v[0] == doctest::Approx(-0.3));
  CHECK(theta[0] == doctest::Approx(0.5));

  SUBCASE("weight decay is folded into the gradient") {
    SgdConfig decay{0.1, 0.0, 0.5};
    Vector t{2.0}, vel{0.0};
    sgd_momentum_step(t, Vector{0.0}, vel, decay);
    CHECK(t[0] == doctest::Approx(1.9));
  }
  SUBCASE("zero gradient and zero decay leave parameters alone") {
    Vector t{3.0}, vel{0.0};
    sgd_momentum_step(t, Vector{0.0}, vel, SgdConfig{0.1, 0.9, 0.0});
    CHECK(t[0] == 3.0);
  }
  CHECK_THROWS_AS(sgd_momentum_step(theta, Vector{1.0}, v, SgdConfig{0.1, 1.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(sgd_momentum_step(theta, Vector{1.0, 2.0}, v, cfg), DimensionError);
}

TEST_CASE("optimizer keeps one velocity per block") {
  OptimizerState opt(SgdConfig{0.1, 0.5, 0.0});
  Vector a{1.0}, b{1.0, 1.0};
  opt.step(0, a, Vector{1.0});
  opt.step(1, b, Vector{1.0, -1.0});
  CHECK(opt.block_count() == 2);
  opt.step(0, a, Vector{1.0});
  CHECK(opt.velocity(0)[0] == doctest::Approx(-0.15));
  CHECK(opt.velocity(1)[1] == doctest::Approx(0.1));
}

TEST_CASE("finite differences on a known function") {
  auto f = [](std::span<const double> t) { return t[0] * t[0] * t[1] + std::sin(t[1]); };
  const Vector theta{1.5, -0.7};
  const Vector g = finite_diff_grad(f, theta);
  const Vector exact{2 * 1.5 * -0.7, 1.5 * 1.5 + std::cos(-0.7)};
  CHECK(relative_error(g, exact) < 1e-6);
  CHECK_THROWS_AS(finite_diff_grad(f, theta, 0.0), ConfigError);
  auto bad = [](std::span<const double> t) { return t[0] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0; };
  CHECK_THROWS_AS(finite_diff_grad(bad, Vector{0.0}), NumericError);
}

TEST_CASE("relative error") {
  CHECK(relative_error(Vector{1, 0}, Vector{1, 0}) == 0.0);
  CHECK(relative_error(Vector{2, 0}, Vector{1, 0}) == doctest::Approx(0.5));
  CHECK(relative_error(Vector{0, 0}, Vector{0, 0}) == 0.0);
  CHECK(relative_error(Vector{1e-12}, Vector{0.0}) == doctest::Approx(1e-4));
}
