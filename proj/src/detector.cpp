#include "vtranse/detector.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "vtranse/error.hpp"

namespace vtranse {

Detection make_detection(const BoundingBox& box, Vector classeme) {
  const std::size_t label = argmax(classeme);
  const double score = classeme[label];
  return {box, label, score, std::move(classeme)};
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  require_valid(a, "iou");
  require_valid(b, "iou");
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ConfigError("NMS threshold must lie in (0, 1)");
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });
  std::vector<bool> suppressed(detections.size(), false);
  std::vector<Detection> kept;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    if (suppressed[i]) continue;
    kept.push_back(detections[i]);
    for (std::size_t l = k + 1; l < order.size(); ++l) {
      const std::size_t j = order[l];
      if (!suppressed[j] && detections[j].label == detections[i].label &&
          iou(detections[i].box, detections[j].box) > iou_threshold)
        suppressed[j] = true;
    }
  }
  return kept;
}

std::vector<std::pair<std::size_t, std::size_t>> enumerate_pairs(std::size_t detection_count) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (detection_count < 2) return pairs;
  pairs.reserve(detection_count * (detection_count - 1));
  for (std::size_t i = 0; i < detection_count; ++i)
    for (std::size_t j = 0; j < detection_count; ++j)
      if (i != j) pairs.emplace_back(i, j);
  return pairs;
}

double relation_score(double subject_score, double predicate_score, double object_score) {
  return subject_score + predicate_score + object_score;
}

Vector visual_feature(const FeatureMap& map, const BoundingBox& box, GridSize grid) {
  return bilinear_sample(map, grid_positions(box, grid, map.stride()));
}

std::vector<Detection> classify_proposals(const FeatureMap& map, std::span<const BoundingBox> proposals,
                                          const JointModel& model) {
  if (map.channels() != model.dims.channels)
    throw ConfigError("feature map has " + std::to_string(map.channels()) + " channels, model expects " +
                      std::to_string(model.dims.channels));
  std::vector<Detection> out;
  for (const auto& box : proposals) {
    Detection d = make_detection(box, object_head(model.head, visual_feature(map, box, model.dims.grid)));
    if (d.label != model.dims.background()) out.push_back(std::move(d));
  }
  return out;
}

std::vector<Detection> detect_objects(const FeatureMap& map, std::span<const BoundingBox> proposals,
                                      const JointModel& model, const DetectionConfig& config) {
  const auto classified = classify_proposals(map, proposals, model);
  auto kept = nms(classified, config.nms_threshold);
  if (kept.size() > config.max_detections) kept.resize(config.max_detections);
  return kept;
}

bool prediction_before(const RelationPrediction& a, const RelationPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.subject_index != b.subject_index) return a.subject_index < b.subject_index;
  if (a.object_index != b.object_index) return a.object_index < b.object_index;
  return a.predicate < b.predicate;
}

std::vector<RelationPrediction> detect_relations(const FeatureMap& map, std::span<const Detection> detections,
                                                 const JointModel& model, std::size_t top_k,
                                                 PredicateScoring scoring) {
  const auto& dims = model.dims;
  if (map.channels() != dims.channels) throw ConfigError("feature map channels disagree with the model");
  std::vector<Vector> visual;
  visual.reserve(detections.size());
  for (const auto& d : detections) {
    if (d.classeme.size() != dims.classes + 1)
      throw ConfigError("detection classeme has " + std::to_string(d.classeme.size()) + " entries, model expects " +
                        std::to_string(dims.classes + 1));
    visual.push_back(visual_feature(map, d.box, dims.grid));
  }
  std::vector<RelationPrediction> out;
  for (const auto& [s, o] : enumerate_pairs(detections.size())) {
    const auto& subj = detections[s];
    const auto& obj = detections[o];
    const Vector xs = fuse(subj.classeme, location_feature(subj.box, obj.box), visual[s], model.scales);
    const Vector xo = fuse(obj.classeme, location_feature(obj.box, subj.box), visual[o], model.scales);
    const Vector probs = predicate_probabilities(model.relation, xs, xo, scoring);
    for (std::size_t p = 0; p < probs.size(); ++p)
      out.push_back({subj, obj, s, o, p, probs[p], relation_score(subj.score, probs[p], obj.score)});
  }
  std::sort(out.begin(), out.end(), prediction_before);
  if (top_k > 0 && out.size() > top_k) out.resize(top_k);
  return out;
}

}  // namespace vtranse
