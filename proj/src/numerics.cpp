#include "vtranse/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vtranse/error.hpp"

namespace vtranse {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Vector matvec(const Matrix& w, std::span<const double> x) {
  require_same_size(w.cols(), x.size(), "matvec");
  Vector y(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * x[c];
    y[r] = s;
  }
  return y;
}

Vector matvec_transposed(const Matrix& w, std::span<const double> x) {
  require_same_size(w.rows(), x.size(), "matvec_transposed");
  Vector y(w.cols(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const auto row = w.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) y[c] += row[c] * xr;
  }
  return y;
}

void add_outer(Matrix& w, std::span<const double> a, std::span<const double> b, double scale) {
  require_same_size(w.rows(), a.size(), "add_outer rows");
  require_same_size(w.cols(), b.size(), "add_outer cols");
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double ar = scale * a[r];
    if (ar == 0.0) continue;
    auto row = w.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += ar * b[c];
  }
}

void axpy(double scale, std::span<const double> x, std::span<double> y) {
  require_same_size(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += scale * x[i];
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) throw NumericError(std::string(what) + " contains non-finite values");
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax of an empty vector");
  require_finite(logits, "softmax logits");
  const double peak = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw DimensionError("log_sum_exp of an empty vector");
  require_finite(values, "log_sum_exp input");
  const double peak = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += std::exp(v - peak);
  return peak + std::log(total);
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw DimensionError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
                       const SgdConfig& config) {
  require_same_size(params.size(), grads.size(), "sgd params/grads");
  require_same_size(params.size(), velocity.size(), "sgd params/velocity");
  if (!(config.learning_rate >= 0.0)) throw ConfigError("learning rate must be nonnegative");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(config.weight_decay >= 0.0)) throw ConfigError("weight decay must be nonnegative");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + config.weight_decay * params[i];
    velocity[i] = config.momentum * velocity[i] - config.learning_rate * g;
    params[i] += velocity[i];
  }
  require_finite(params, "parameters after SGD step");
}

OptimizerState::OptimizerState(SgdConfig config) : config_(config) {}

OptimizerState::OptimizerState(SgdConfig config, std::span<const std::size_t> block_sizes) : config_(config) {
  for (std::size_t n : block_sizes) velocity_.emplace_back(n, 0.0);
}

void OptimizerState::step(std::size_t block, std::span<double> params, std::span<const double> grads) {
  if (block >= velocity_.size()) velocity_.resize(block + 1);
  auto& v = velocity_[block];
  if (v.empty() && !params.empty()) v.assign(params.size(), 0.0);
  sgd_momentum_step(params, grads, v, config_);
}

Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> theta, double step) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
  Vector point(theta.begin(), theta.end());
  Vector grad(theta.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + step;
    const double up = f(point);
    point[i] = saved - step;
    const double down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("objective is non-finite near coordinate " + std::to_string(i));
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  require_same_size(a.size(), b.size(), "relative_error");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(diff) / std::max({norm(a), norm(b), floor});
}

}  // namespace vtranse
