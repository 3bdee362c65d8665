#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace vtranse {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

// y = W x
Vector matvec(const Matrix& w, std::span<const double> x);
// y = W^T x
Vector matvec_transposed(const Matrix& w, std::span<const double> x);
// W += scale * a b^T
void add_outer(Matrix& w, std::span<const double> a, std::span<const double> b, double scale = 1.0);
// y += scale * x
void axpy(double scale, std::span<const double> x, std::span<double> y);

bool all_finite(std::span<const double> v);
// Throws NumericError naming `what` when v holds NaN or Inf.
void require_finite(std::span<const double> v, const char* what);

Vector softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> values);

// Index of the maximum, lowest index on ties.
std::size_t argmax(std::span<const double> values);

struct SgdConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// Heavy-ball momentum with L2 decay folded into the gradient:
//   v <- momentum * v - lr * (g + weight_decay * theta);  theta <- theta + v
// One velocity buffer per parameter block, zero-initialised.
class OptimizerState {
 public:
  explicit OptimizerState(SgdConfig config);
  OptimizerState(SgdConfig config, std::span<const std::size_t> block_sizes);

  const SgdConfig& config() const { return config_; }
  std::size_t block_count() const { return velocity_.size(); }
  std::span<const double> velocity(std::size_t block) const { return velocity_.at(block); }

  // Registers a block lazily on first use.
  void step(std::size_t block, std::span<double> params, std::span<const double> grads);

 private:
  SgdConfig config_;
  std::vector<Vector> velocity_;
};

void sgd_momentum_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
                       const SgdConfig& config);

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central differences (f(theta + h e_i) - f(theta - h e_i)) / 2h.
Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> theta, double step = 1e-3);

// ||a - b|| / max(||a||, ||b||, floor); the floor keeps near-zero gradients
// from blowing up the ratio.
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8);

}  // namespace vtranse
