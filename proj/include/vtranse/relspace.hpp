#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "vtranse/numerics.hpp"

namespace vtranse {

// Translation embedding over fused object features:
//   W_s x_s + t_p ~ W_o x_o
// Each row of `translations` is one predicate's t_p.
struct RelationModel {
  Matrix subject_projection;  // r x M
  Matrix object_projection;   // r x M
  Matrix translations;        // R x r

  std::size_t embedding_dim() const { return translations.cols(); }
  std::size_t feature_dim() const { return subject_projection.cols(); }
  std::size_t predicate_count() const { return translations.rows(); }

  bool operator==(const RelationModel&) const = default;
};

// Zero model of the given shape; throws ConfigError on empty dimensions.
RelationModel make_relation_model(std::size_t feature_dim, std::size_t embedding_dim, std::size_t predicates);
// Gaussian(0, stddev) entries.
void randomize(RelationModel& model, std::mt19937_64& rng, double stddev = 0.01);
void validate(const RelationModel& model);

struct RelationInstance {
  Vector subject;  // x_s
  Vector object;   // x_o
  std::size_t predicate = 0;
};

struct RelationGradients {
  Matrix subject_projection;
  Matrix object_projection;
  Matrix translations;
  std::vector<Vector> subject_features;  // one per input instance
  std::vector<Vector> object_features;
};

struct RelationLoss {
  double value = 0.0;
  RelationGradients grads;
};

Vector project(const Matrix& w, std::span<const double> x);

// logit_p = t_p . (W_o x_o - W_s x_s)
Vector predicate_logits(const RelationModel& model, std::span<const double> subject, std::span<const double> object);

// Mean over the batch of -log softmax(logits)[predicate].
RelationLoss softmax_loss(const RelationModel& model, std::span<const RelationInstance> batch);

struct MarginSample {
  RelationInstance positive;
  std::vector<RelationInstance> negatives;
};

// Hinge [d(W_s x_s + t_p, W_o x_o) + margin - d(W_s x_s' + t_p', W_o x_o')]_+
// summed over each positive's negatives and averaged over positives; d is
// squared Euclidean distance. Corrupted triplets carry their own predicate.
RelationLoss margin_loss(const RelationModel& model, std::span<const MarginSample> batch, double margin = 1.0);

// Gradient slots for margin_loss: subject_features/object_features hold the
// positive's entries first, then each negative's, sample by sample.
std::size_t margin_feature_slots(std::span<const MarginSample> batch);

// logits: t_p . (W_o x_o - W_s x_s). distance: -||W_s x_s + t_p - W_o x_o||^2,
// the decision rule matching margin_loss.
enum class PredicateScoring { logits, distance };
std::string_view to_string(PredicateScoring scoring);
PredicateScoring parse_predicate_scoring(std::string_view text);

Vector predicate_scores(const RelationModel& model, std::span<const double> subject, std::span<const double> object,
                        PredicateScoring scoring = PredicateScoring::logits);

// softmax of predicate_scores
Vector predicate_probabilities(const RelationModel& model, std::span<const double> subject,
                               std::span<const double> object, PredicateScoring scoring = PredicateScoring::logits);

struct PredicatePrediction {
  std::size_t predicate = 0;
  double probability = 0.0;
};

PredicatePrediction predict_predicate(const RelationModel& model, std::span<const double> subject,
                                      std::span<const double> object,
                                      PredicateScoring scoring = PredicateScoring::logits);

// W_s x_s + t_p - W_o x_o
Vector translation_residual(const RelationModel& model, std::span<const double> subject, std::size_t predicate,
                            std::span<const double> object);

struct PredicateNeighbor {
  std::size_t predicate = 0;
  double similarity = 0.0;
};

// k nearest translation vectors to t_p by cosine similarity, p excluded.
std::vector<PredicateNeighbor> predicate_neighbors(const RelationModel& model, std::size_t predicate, std::size_t k);

}  // namespace vtranse
