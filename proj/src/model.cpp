#include "vtranse/model.hpp"

#include <string>

#include "binary_io.hpp"
#include "vtranse/error.hpp"

namespace vtranse {

JointModel make_model(const ModelDims& dims) {
  if (dims.classes == 0 || dims.predicates == 0 || dims.embedding == 0 || dims.channels == 0 || dims.grid.x == 0 ||
      dims.grid.y == 0)
    throw ConfigError("model dimensions must all be positive");
  JointModel model;
  model.dims = dims;
  model.relation = make_relation_model(dims.feature_dim(), dims.embedding, dims.predicates);
  model.head = make_object_head(dims.classes + 1, dims.visual_dim());
  return model;
}

JointModel make_random_model(const ModelDims& dims, std::mt19937_64& rng, double stddev) {
  JointModel model = make_model(dims);
  randomize(model.relation, rng, stddev);
  randomize(model.head, rng, stddev);
  return model;
}

void validate(const JointModel& model) {
  const auto& d = model.dims;
  validate(model.relation);
  if (model.relation.feature_dim() != d.feature_dim() || model.relation.embedding_dim() != d.embedding ||
      model.relation.predicate_count() != d.predicates)
    throw ConfigError("relation model shape disagrees with the declared dimensions");
  if (model.head.class_count() != d.classes + 1 || model.head.input_dim() != d.visual_dim() ||
      model.head.bias.size() != d.classes + 1)
    throw ConfigError("object head shape disagrees with the declared dimensions");
  require_finite(model.scales, "feature scales");
  require_finite(model.head.weights.values(), "object head");
  require_finite(model.head.bias, "object head bias");
}

std::vector<std::span<double>> parameter_blocks(JointModel& model) {
  return {model.relation.subject_projection.values(), model.relation.object_projection.values(),
          model.relation.translations.values(), std::span<double>(model.scales), model.head.weights.values(),
          std::span<double>(model.head.bias)};
}

std::vector<std::span<const double>> parameter_blocks(const JointModel& model) {
  return {model.relation.subject_projection.values(), model.relation.object_projection.values(),
          model.relation.translations.values(), std::span<const double>(model.scales), model.head.weights.values(),
          std::span<const double>(model.head.bias)};
}

std::vector<std::span<double>> ModelGradients::blocks() {
  return {subject_projection.values(), object_projection.values(), translations.values(), std::span<double>(scales),
          head_weights.values(), std::span<double>(head_bias)};
}

std::vector<std::span<const double>> ModelGradients::blocks() const {
  return {subject_projection.values(), object_projection.values(), translations.values(),
          std::span<const double>(scales), head_weights.values(), std::span<const double>(head_bias)};
}

ModelGradients zero_gradients(const JointModel& model) {
  const auto& rel = model.relation;
  return {Matrix(rel.subject_projection.rows(), rel.subject_projection.cols()),
          Matrix(rel.object_projection.rows(), rel.object_projection.cols()),
          Matrix(rel.translations.rows(), rel.translations.cols()),
          {},
          Matrix(model.head.weights.rows(), model.head.weights.cols()),
          Vector(model.head.bias.size(), 0.0)};
}

Vector flatten(const JointModel& model) {
  Vector out;
  for (auto block : parameter_blocks(model)) out.insert(out.end(), block.begin(), block.end());
  return out;
}

void unflatten(std::span<const double> values, JointModel& model) {
  std::size_t offset = 0;
  for (auto block : parameter_blocks(model)) {
    if (offset + block.size() > values.size()) throw DimensionError("flattened parameter vector too short");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), block.size(), block.begin());
    offset += block.size();
  }
  if (offset != values.size()) throw DimensionError("flattened parameter vector too long");
}

Vector flatten(const ModelGradients& grads) {
  Vector out;
  for (auto block : grads.blocks()) out.insert(out.end(), block.begin(), block.end());
  return out;
}

namespace {

constexpr char kCheckpointMagic[] = "VTRE";

std::uint32_t narrow(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw ConfigError(std::string(what) + " does not fit the checkpoint header");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const JointModel& model) {
  validate(model);
  const auto& d = model.dims;
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  for (auto [v, name] : {std::pair{d.classes, "N"}, {d.predicates, "R"}, {d.feature_dim(), "M"}, {d.embedding, "r"},
                         {d.grid.x, "X"}, {d.grid.y, "Y"}, {d.channels, "C"}})
    w.u32(narrow(v, name));
  for (auto block : parameter_blocks(model))
    for (double v : block) w.f64(v);
  detail::write_file(path.string(), w.buffer());
}

JointModel load_checkpoint(const std::filesystem::path& path) {
  const auto data = detail::read_file(path.string());
  detail::ByteReader r(data, path.string());
  if (r.bytes(4) != kCheckpointMagic) throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  ModelDims dims;
  dims.classes = r.u32();
  dims.predicates = r.u32();
  const std::size_t m = r.u32();
  dims.embedding = r.u32();
  dims.grid.x = r.u32();
  dims.grid.y = r.u32();
  dims.channels = r.u32();
  JointModel model;
  try {
    model = make_model(dims);
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (m != dims.feature_dim()) throw FormatError(path.string() + ": header M disagrees with N, X, Y, C");
  for (auto block : parameter_blocks(model))
    for (double& v : block) v = r.f64();
  if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes after payload");
  if (!all_finite(flatten(model))) throw FormatError(path.string() + ": non-finite parameters");
  return model;
}

}  // namespace vtranse
