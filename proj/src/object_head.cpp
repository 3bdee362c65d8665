#include "vtranse/object_head.hpp"

#include <string>

#include "vtranse/error.hpp"

namespace vtranse {

ObjectHead make_object_head(std::size_t classes_with_background, std::size_t visual_dim) {
  if (classes_with_background < 2 || visual_dim == 0)
    throw ConfigError("object head needs at least one class plus background and a visual block");
  return {Matrix(classes_with_background, visual_dim), Vector(classes_with_background, 0.0)};
}

void randomize(ObjectHead& head, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> gauss(0.0, stddev);
  for (double& v : head.weights.values()) v = gauss(rng);
  std::fill(head.bias.begin(), head.bias.end(), 0.0);
}

Vector object_logits(const ObjectHead& head, std::span<const double> visual) {
  if (visual.size() != head.input_dim())
    throw DimensionError("object head expects " + std::to_string(head.input_dim()) + " visual values, got " +
                         std::to_string(visual.size()));
  Vector logits = matvec(head.weights, visual);
  axpy(1.0, head.bias, logits);
  return logits;
}

Vector object_head(const ObjectHead& head, std::span<const double> visual) {
  return softmax(object_logits(head, visual));
}

ObjectHeadGradients zero_gradients(const ObjectHead& head) {
  return {Matrix(head.weights.rows(), head.weights.cols()), Vector(head.bias.size(), 0.0), {}};
}

Vector object_head_backward(const ObjectHead& head, std::span<const double> visual,
                            std::span<const double> probabilities, std::span<const double> dprobabilities,
                            double scale, ObjectHeadGradients& grads) {
  // Softmax Jacobian: dz_k = p_k (dp_k - sum_j p_j dp_j)
  const double mean = dot(probabilities, dprobabilities);
  Vector dlogits(probabilities.size());
  for (std::size_t k = 0; k < dlogits.size(); ++k)
    dlogits[k] = scale * probabilities[k] * (dprobabilities[k] - mean);
  add_outer(grads.weights, dlogits, visual);
  axpy(1.0, dlogits, grads.bias);
  return matvec_transposed(head.weights, dlogits);
}

double object_cross_entropy(const ObjectHead& head, std::span<const double> visual, std::size_t target, double scale,
                            ObjectHeadGradients& grads, Vector* dvisual) {
  if (target >= head.class_count()) throw DimensionError("object class out of range");
  const Vector logits = object_logits(head, visual);
  const double loss = log_sum_exp(logits) - logits[target];
  Vector dlogits = softmax(logits);
  dlogits[target] -= 1.0;
  for (double& d : dlogits) d *= scale;
  add_outer(grads.weights, dlogits, visual);
  axpy(1.0, dlogits, grads.bias);
  if (dvisual != nullptr) *dvisual = matvec_transposed(head.weights, dlogits);
  return loss;
}

}  // namespace vtranse
