#include "vtranse/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "vtranse/detector.hpp"
#include "vtranse/error.hpp"
#include "vtranse/eval.hpp"

namespace vtranse {

const char* to_string(LossKind kind) { return kind == LossKind::kSoftmax ? "softmax" : "margin"; }

LossKind parse_loss_kind(const std::string& name) {
  if (name == "softmax") return LossKind::kSoftmax;
  if (name == "margin") return LossKind::kMargin;
  throw ConfigError("unknown loss kind '" + name + "' (expected softmax or margin)");
}

PredicateScoring scoring_for(LossKind kind) {
  return kind == LossKind::kMargin ? PredicateScoring::distance : PredicateScoring::logits;
}

void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight decay must be nonnegative");
  if (!(c.rel_loss_weight >= 0.0)) throw ConfigError("relation loss weight must be nonnegative");
  if (c.embedding < 1) throw ConfigError("embedding dimension must be at least 1");
  if (c.grid.x < 1 || c.grid.y < 1) throw ConfigError("sample grid must be at least 1 x 1");
  if (!(c.init_stddev > 0.0)) throw ConfigError("initialisation stddev must be positive");
  if (!(c.margin > 0.0)) throw ConfigError("margin must be positive");
  if (c.loss_kind == LossKind::kMargin && c.negatives_per_positive < 1)
    throw ConfigError("margin loss needs at least one negative per positive");
  if (!(c.validation_fraction >= 0.0 && c.validation_fraction < 1.0))
    throw ConfigError("validation fraction must lie in [0, 1)");
}

double multi_task_loss(double object_loss, double relation_loss, double weight) {
  if (object_loss < 0.0 || relation_loss < 0.0) throw ContractError("losses must be nonnegative");
  if (weight < 0.0) throw ContractError("relation loss weight must be nonnegative");
  return object_loss + weight * relation_loss;
}

ImageBatch prepare_batch(const ImageRecord& record, const ModelDims& dims, const TrainConfig& config,
                         std::mt19937_64& rng) {
  ImageBatch batch;
  for (const auto& o : record.objects) {
    batch.boxes.push_back(o.box);
    batch.targets.push_back(o.label);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Background samples: random boxes overlapping every object by IoU < 0.3.
  for (std::size_t k = 0, attempt = 0; k < config.background_per_image && attempt < 20 * (k + 1); ++attempt) {
    const double w = record.width * (0.15 + 0.3 * unit(rng));
    const double h = record.height * (0.15 + 0.3 * unit(rng));
    const BoundingBox box{(record.width - w) * unit(rng), (record.height - h) * unit(rng), w, h};
    const bool clear = std::all_of(record.objects.begin(), record.objects.end(),
                                   [&](const ObjectAnnotation& o) { return iou(o.box, box) < 0.3; });
    if (!clear) continue;
    batch.boxes.push_back(box);
    batch.targets.push_back(dims.background());
    ++k;
  }
  batch.relations = record.relations;
  if (config.loss_kind == LossKind::kMargin) {
    for (const auto& r : record.relations) {
      std::vector<std::size_t> candidates;
      for (std::size_t p = 0; p < dims.predicates; ++p) {
        const bool annotated = std::any_of(record.relations.begin(), record.relations.end(), [&](const auto& o) {
          return o.subject == r.subject && o.object == r.object && o.predicate == p;
        });
        if (!annotated) candidates.push_back(p);
      }
      std::vector<std::size_t> picked;
      for (std::size_t k = 0; k < config.negatives_per_positive && !candidates.empty(); ++k) {
        const auto idx = static_cast<std::size_t>(unit(rng) * static_cast<double>(candidates.size()));
        picked.push_back(candidates[std::min(idx, candidates.size() - 1)]);
      }
      batch.negatives.push_back(std::move(picked));
    }
  }
  return batch;
}

BatchGradients compute_batch_gradients(const JointModel& model, const ImageBatch& batch, const FeatureMap& map,
                                       const TrainConfig& config) {
  const auto& dims = model.dims;
  if (map.channels() != dims.channels) throw ConfigError("feature map channels disagree with the model");
  const std::size_t count = batch.boxes.size();
  BatchGradients out{{}, zero_gradients(model), std::vector<std::array<double, 4>>(count, {0, 0, 0, 0}), 0.0};

  std::vector<SampleGrid> grids;
  std::vector<Vector> visual, classeme;
  for (const auto& box : batch.boxes) {
    grids.push_back(grid_positions(box, dims.grid, map.stride()));
    visual.push_back(bilinear_sample(map, grids.back()));
    classeme.push_back(object_head(model.head, visual.back()));
  }

  ObjectHeadGradients head_grads = zero_gradients(model.head);
  if (count > 0) {
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t k = 0; k < count; ++k)
      out.loss.object += inv * object_cross_entropy(model.head, visual[k], batch.targets[k], inv, head_grads);
  }

  const double weight = config.rel_loss_weight;
  if (!batch.relations.empty()) {
    out.loss.has_relations = true;
    struct Parts {
      std::array<double, 4> subject_location, object_location;
    };
    std::vector<Parts> parts;
    std::vector<RelationInstance> instances;
    for (const auto& r : batch.relations) {
      Parts p{location_feature(batch.boxes[r.subject], batch.boxes[r.object]),
              location_feature(batch.boxes[r.object], batch.boxes[r.subject])};
      instances.push_back({fuse(classeme[r.subject], p.subject_location, visual[r.subject], model.scales),
                           fuse(classeme[r.object], p.object_location, visual[r.object], model.scales),
                           r.predicate});
      parts.push_back(p);
    }

    RelationLoss rel;
    std::vector<Vector> dsubject, dobject;
    if (config.loss_kind == LossKind::kSoftmax) {
      rel = softmax_loss(model.relation, instances);
      dsubject = std::move(rel.grads.subject_features);
      dobject = std::move(rel.grads.object_features);
    } else {
      std::vector<MarginSample> samples;
      for (std::size_t k = 0; k < instances.size(); ++k) {
        MarginSample s{instances[k], {}};
        for (std::size_t p : batch.negatives.at(k)) s.negatives.push_back({instances[k].subject, instances[k].object, p});
        samples.push_back(std::move(s));
      }
      rel = margin_loss(model.relation, samples, config.margin);
      // Corrupted triplets share the positive's features; fold their slots back.
      std::size_t slot = 0;
      for (const auto& s : samples) {
        Vector ds = rel.grads.subject_features[slot], dob = rel.grads.object_features[slot];
        for (std::size_t n = 1; n <= s.negatives.size(); ++n) {
          axpy(1.0, rel.grads.subject_features[slot + n], ds);
          axpy(1.0, rel.grads.object_features[slot + n], dob);
        }
        slot += 1 + s.negatives.size();
        dsubject.push_back(std::move(ds));
        dobject.push_back(std::move(dob));
      }
    }
    out.loss.relation = rel.value;

    axpy(weight, rel.grads.subject_projection.values(), out.grads.subject_projection.values());
    axpy(weight, rel.grads.object_projection.values(), out.grads.object_projection.values());
    axpy(weight, rel.grads.translations.values(), out.grads.translations.values());

    // Back through the fusion into classemes and visual blocks.
    std::vector<Vector> dclasseme(count), dvisual(count);
    for (std::size_t k = 0; k < count; ++k) {
      dclasseme[k].assign(classeme[k].size(), 0.0);
      dvisual[k].assign(visual[k].size(), 0.0);
    }
    for (std::size_t k = 0; k < batch.relations.size(); ++k) {
      const auto& r = batch.relations[k];
      for (int side = 0; side < 2; ++side) {
        const std::size_t obj = side == 0 ? r.subject : r.object;
        const auto& loc = side == 0 ? parts[k].subject_location : parts[k].object_location;
        Vector up = side == 0 ? dsubject[k] : dobject[k];
        for (double& v : up) v *= weight;
        const auto g = fuse_backward(classeme[obj], loc, visual[obj], model.scales, up);
        for (int b = 0; b < 3; ++b) out.grads.scales[b] += g.scales[b];
        axpy(1.0, g.classeme, dclasseme[obj]);
        axpy(1.0, g.visual, dvisual[obj]);
      }
    }
    double squared = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const Vector dv = object_head_backward(model.head, visual[k], classeme[k], dclasseme[k], 1.0, head_grads);
      axpy(1.0, dv, dvisual[k]);
      out.box_grads[k] = bilinear_backward(map, grids[k], dvisual[k]).box;
      for (double v : out.box_grads[k]) squared += v * v;
    }
    out.box_grad_norm = std::sqrt(squared);
  }

  out.grads.head_weights = std::move(head_grads.weights);
  out.grads.head_bias = std::move(head_grads.bias);
  out.loss.total = multi_task_loss(out.loss.object, out.loss.relation, weight);
  return out;
}

BatchGradients apply_batch(JointModel& model, OptimizerState& optimizer, const ImageBatch& batch,
                           const FeatureMap& map, const TrainConfig& config) {
  BatchGradients result = compute_batch_gradients(model, batch, map, config);
  auto params = parameter_blocks(model);
  const auto grads = result.grads.blocks();
  const bool relation_frozen = config.rel_loss_weight == 0.0 || batch.relations.empty();
  for (std::size_t b = 0; b < kParameterBlockCount; ++b) {
    const bool relation_side = b <= static_cast<std::size_t>(ParameterBlock::kScales);
    if (relation_side && relation_frozen) continue;
    optimizer.step(b, params[b], grads[b]);
  }
  return result;
}

std::string to_json_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["l_obj"] = m.object_loss;
  j["l_rel"] = m.relation_loss;
  j["total"] = m.total_loss;
  j["accuracy"] = m.validation_accuracy ? nlohmann::ordered_json(*m.validation_accuracy)
                                        : nlohmann::ordered_json("NA");
  j["skipped"] = m.skipped_images;
  j["box_grad_norm"] = m.box_grad_norm;
  return j.dump();
}

JointModel initial_model(std::size_t classes, std::size_t predicates, std::size_t channels,
                         const TrainConfig& config) {
  validate(config);
  ModelDims dims{classes, predicates, config.embedding, config.grid, channels};
  std::mt19937_64 rng(config.seed);
  return make_random_model(dims, rng, config.init_stddev);
}

TrainResult train(JointModel model, std::span<const ImageRecord> images, std::span<const FeatureMap> maps,
                  const TrainConfig& config) {
  validate(config);
  validate(model);
  if (images.empty()) throw ConfigError("training set is empty");
  if (images.size() != maps.size()) throw ConfigError("one feature map per training image expected");
  for (const auto& m : maps)
    if (m.channels() != model.dims.channels) throw ConfigError("feature map channels disagree with the model");
  if (model.dims.grid.x != config.grid.x || model.dims.grid.y != config.grid.y ||
      model.dims.embedding != config.embedding)
    throw ConfigError("model dimensions disagree with the training configuration");

  // Separate streams so the split does not depend on how many steps ran.
  std::mt19937_64 split_rng(config.seed ^ 0x5bd1e995u);
  std::mt19937_64 rng(config.seed + 1);

  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto held_out = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(images.size())));
  std::vector<std::size_t> validation(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held_out));
  std::vector<std::size_t> training(order.begin() + static_cast<std::ptrdiff_t>(held_out), order.end());
  std::sort(validation.begin(), validation.end());
  std::sort(training.begin(), training.end());
  std::vector<ImageRecord> val_records;
  std::vector<FeatureMap> val_maps;
  for (std::size_t k : validation) {
    val_records.push_back(images[k]);
    val_maps.push_back(maps[k]);
  }

  OptimizerState optimizer({config.learning_rate, config.momentum, config.weight_decay});
  TrainResult result{std::move(model), {}, validation};
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(training.begin(), training.end(), rng);
    EpochMetrics m;
    m.epoch = epoch;
    std::size_t trained = 0;
    double obj_sum = 0.0, rel_sum = 0.0, box_sum = 0.0;
    for (std::size_t k : training) {
      const auto batch = prepare_batch(images[k], result.model.dims, config, rng);
      if (batch.relations.empty()) {
        ++m.skipped_images;
        continue;
      }
      const auto step = apply_batch(result.model, optimizer, batch, maps[k], config);
      obj_sum += step.loss.object;
      rel_sum += step.loss.relation;
      box_sum += step.box_grad_norm;
      ++trained;
    }
    if (trained > 0) {
      m.object_loss = obj_sum / static_cast<double>(trained);
      m.relation_loss = rel_sum / static_cast<double>(trained);
      m.box_grad_norm = box_sum / static_cast<double>(trained);
    }
    m.total_loss = multi_task_loss(m.object_loss, m.relation_loss, config.rel_loss_weight);
    m.validation_accuracy = predicate_accuracy(result.model, val_records, val_maps, scoring_for(config.loss_kind)).value();
    result.log.push_back(m);
  }
  return result;
}

}  // namespace vtranse
