#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "vtranse/features.hpp"
#include "vtranse/object_head.hpp"
#include "vtranse/relspace.hpp"

namespace vtranse {

struct ModelDims {
  std::size_t classes = 0;          // N, background excluded
  std::size_t predicates = 0;       // R
  std::size_t embedding = 32;       // r
  GridSize grid;                    // X, Y
  std::size_t channels = 0;         // C

  std::size_t visual_dim() const { return grid.x * grid.y * channels; }
  std::size_t feature_dim() const { return fused_dimension(classes, visual_dim()); }
  std::size_t background() const { return classes; }

  bool operator==(const ModelDims&) const = default;
};

// Everything that is trained: relation embedding, fusion scales and the
// object classification head.
struct JointModel {
  ModelDims dims;
  RelationModel relation;
  FeatureScales scales{1.0, 1.0, 1.0};
  ObjectHead head;

  bool operator==(const JointModel&) const = default;
};

JointModel make_model(const ModelDims& dims);
JointModel make_random_model(const ModelDims& dims, std::mt19937_64& rng, double stddev = 0.01);
// Throws ConfigError/DimensionError when the parts disagree with dims.
void validate(const JointModel& model);

// Parameter blocks in a fixed order: W_s, W_o, T, scales, head weights, head bias.
enum class ParameterBlock : std::size_t {
  kSubjectProjection = 0,
  kObjectProjection,
  kTranslations,
  kScales,
  kHeadWeights,
  kHeadBias,
};
inline constexpr std::size_t kParameterBlockCount = 6;

std::vector<std::span<double>> parameter_blocks(JointModel& model);
std::vector<std::span<const double>> parameter_blocks(const JointModel& model);

// Same block layout as the model; used for accumulated gradients.
struct ModelGradients {
  Matrix subject_projection;
  Matrix object_projection;
  Matrix translations;
  FeatureScales scales{};
  Matrix head_weights;
  Vector head_bias;

  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
};

ModelGradients zero_gradients(const JointModel& model);

// Concatenation of all parameter blocks (for finite-difference checks).
Vector flatten(const JointModel& model);
void unflatten(std::span<const double> values, JointModel& model);
Vector flatten(const ModelGradients& grads);

// Binary checkpoint: "VTRE", u32 version, u32 N, R, M, r, X, Y, C, then
// W_s, W_o, T, scales, head weights, head bias as little-endian f64.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const JointModel& model);
JointModel load_checkpoint(const std::filesystem::path& path);

}  // namespace vtranse
