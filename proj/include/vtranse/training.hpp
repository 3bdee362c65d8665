#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vtranse/data.hpp"
#include "vtranse/model.hpp"
#include "vtranse/numerics.hpp"

namespace vtranse {

enum class LossKind { kSoftmax, kMargin };

const char* to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);
// Prediction rule consistent with the training objective.
PredicateScoring scoring_for(LossKind kind);

struct TrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double rel_loss_weight = 0.4;
  LossKind loss_kind = LossKind::kSoftmax;
  std::uint64_t seed = 1;
  std::size_t embedding = 32;
  GridSize grid;
  double init_stddev = 0.01;
  double margin = 1.0;
  std::size_t negatives_per_positive = 2;
  std::size_t background_per_image = 2;
  double validation_fraction = 0.1;
};

void validate(const TrainConfig& config);

// L_obj + weight * L_rel; both inputs must be nonnegative.
double multi_task_loss(double object_loss, double relation_loss, double weight);

struct LossBreakdown {
  double object = 0.0;    // mean cross-entropy over sampled boxes
  double relation = 0.0;  // mean relation loss over annotated triplets
  double total = 0.0;     // object + weight * relation
  bool has_relations = false;
};

// Everything one image contributes to a step; sampling happens here so the
// gradient computation itself is deterministic.
struct ImageBatch {
  std::vector<BoundingBox> boxes;  // ground-truth objects first, then background samples
  std::vector<std::size_t> targets;
  std::vector<RelationAnnotation> relations;
  std::vector<std::vector<std::size_t>> negatives;  // corrupted predicates per relation (margin loss)
};

ImageBatch prepare_batch(const ImageRecord& record, const ModelDims& dims, const TrainConfig& config,
                         std::mt19937_64& rng);

struct BatchGradients {
  LossBreakdown loss;
  ModelGradients grads;
  // d(weight * L_rel)/d(box) through the sampled visual features, per box.
  std::vector<std::array<double, 4>> box_grads;
  double box_grad_norm = 0.0;
};

BatchGradients compute_batch_gradients(const JointModel& model, const ImageBatch& batch, const FeatureMap& map,
                                       const TrainConfig& config);

// One SGD step on a single image. Relation-side blocks are frozen when the
// relation weight is 0.
BatchGradients apply_batch(JointModel& model, OptimizerState& optimizer, const ImageBatch& batch,
                           const FeatureMap& map, const TrainConfig& config);

struct EpochMetrics {
  std::size_t epoch = 0;
  double object_loss = 0.0;
  double relation_loss = 0.0;
  double total_loss = 0.0;
  std::optional<double> validation_accuracy;
  std::size_t skipped_images = 0;
  double box_grad_norm = 0.0;  // mean over trained images
};

std::string to_json_line(const EpochMetrics& metrics);

struct TrainResult {
  JointModel model;
  std::vector<EpochMetrics> log;
  std::vector<std::size_t> validation_images;
};

JointModel initial_model(std::size_t classes, std::size_t predicates, std::size_t channels,
                         const TrainConfig& config);

// Image-centric training: one image per step, epochs over a seeded shuffle.
// A seeded validation_fraction of the images is held out for accuracy.
TrainResult train(JointModel model, std::span<const ImageRecord> images, std::span<const FeatureMap> maps,
                  const TrainConfig& config);

}  // namespace vtranse
