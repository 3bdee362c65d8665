#pragma once

#include <cstddef>
#include <random>
#include <span>

#include "vtranse/numerics.hpp"

namespace vtranse {

// Linear softmax classifier over the sampled visual block, producing the
// (N + 1)-way classeme. The last class is background.
struct ObjectHead {
  Matrix weights;  // (N + 1) x D
  Vector bias;     // N + 1

  std::size_t class_count() const { return weights.rows(); }
  std::size_t input_dim() const { return weights.cols(); }

  bool operator==(const ObjectHead&) const = default;
};

ObjectHead make_object_head(std::size_t classes_with_background, std::size_t visual_dim);
void randomize(ObjectHead& head, std::mt19937_64& rng, double stddev = 0.01);

Vector object_logits(const ObjectHead& head, std::span<const double> visual);
// softmax(weights * visual + bias)
Vector object_head(const ObjectHead& head, std::span<const double> visual);

struct ObjectHeadGradients {
  Matrix weights;
  Vector bias;
  Vector visual;
};

ObjectHeadGradients zero_gradients(const ObjectHead& head);

// Accumulates gradients given dL/d(probabilities); returns dL/d(visual).
Vector object_head_backward(const ObjectHead& head, std::span<const double> visual,
                            std::span<const double> probabilities, std::span<const double> dprobabilities,
                            double scale, ObjectHeadGradients& grads);

// -log p[target] and its gradient, scaled by `scale`, accumulated into grads;
// returns the unscaled loss. Also returns dL/d(visual) through `dvisual`.
double object_cross_entropy(const ObjectHead& head, std::span<const double> visual, std::size_t target, double scale,
                            ObjectHeadGradients& grads, Vector* dvisual = nullptr);

}  // namespace vtranse
