#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "vtranse/features.hpp"
#include "vtranse/model.hpp"

namespace vtranse {

struct Detection {
  BoundingBox box;
  std::size_t label = 0;  // index in [0, N]; N is background
  double score = 0.0;     // classeme[label]
  Vector classeme;        // N + 1 probabilities

  bool operator==(const Detection&) const = default;
};

// Builds a detection whose label and score are read off the classeme.
Detection make_detection(const BoundingBox& box, Vector classeme);

struct RelationPrediction {
  Detection subject;
  Detection object;
  std::size_t subject_index = 0;  // positions in the detection list
  std::size_t object_index = 0;
  std::size_t predicate = 0;
  double predicate_score = 0.0;  // S_p
  double score = 0.0;            // S = S_s + S_p + S_o
};

double iou(const BoundingBox& a, const BoundingBox& b);

// Greedy per-class suppression (IoU > threshold suppresses); output sorted by
// descending score, ties by input order.
std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold);

std::vector<std::pair<std::size_t, std::size_t>> enumerate_pairs(std::size_t detection_count);

double relation_score(double subject_score, double predicate_score, double object_score);

// Bilinear visual block for a box.
Vector visual_feature(const FeatureMap& map, const BoundingBox& box, GridSize grid);

// Classifies proposal boxes with the object head; background-labelled
// proposals are dropped.
std::vector<Detection> classify_proposals(const FeatureMap& map, std::span<const BoundingBox> proposals,
                                          const JointModel& model);

struct DetectionConfig {
  double nms_threshold = 0.6;
  std::size_t max_detections = 32;
  PredicateScoring scoring = PredicateScoring::logits;
};

// classify_proposals -> nms -> cap at max_detections.
std::vector<Detection> detect_objects(const FeatureMap& map, std::span<const BoundingBox> proposals,
                                      const JointModel& model, const DetectionConfig& config = {});

// Scores every ordered pair and predicate; globally sorted by S descending,
// ties by subject index, object index, predicate. top_k == 0 keeps everything.
std::vector<RelationPrediction> detect_relations(const FeatureMap& map, std::span<const Detection> detections,
                                                 const JointModel& model, std::size_t top_k,
                                                 PredicateScoring scoring = PredicateScoring::logits);

// Total order used by detect_relations.
bool prediction_before(const RelationPrediction& a, const RelationPrediction& b);

}  // namespace vtranse
