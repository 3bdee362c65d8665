#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtranse/data.hpp"
#include "vtranse/detector.hpp"

namespace vtranse {

struct GroundTruthRelation {
  std::string image_id;
  std::size_t subject_label = 0;
  BoundingBox subject_box;
  std::size_t predicate = 0;
  std::size_t object_label = 0;
  BoundingBox object_box;

  bool operator==(const GroundTruthRelation&) const = default;
};

std::vector<GroundTruthRelation> ground_truth(const ImageRecord& record);
std::vector<GroundTruthRelation> ground_truth(std::span<const ImageRecord> records);

enum class MatchMode { kPredicate, kPhrase, kRelation };

const char* to_string(MatchMode mode);
MatchMode parse_match_mode(const std::string& name);

inline constexpr double kMatchIou = 0.5;

// Labels and predicate must agree; relation mode also needs IoU >= 0.5 on
// both boxes, phrase mode on the union boxes, predicate mode nothing more.
bool match_relation(const RelationPrediction& prediction, const GroundTruthRelation& gt, MatchMode mode);

// Overlap used to pick among several matching ground-truth entries:
// min of the two box IoUs (relation), union-box IoU (phrase), 1 (predicate).
double match_overlap(const RelationPrediction& prediction, const GroundTruthRelation& gt, MatchMode mode);

struct ImagePredictions {
  std::string image_id;
  std::vector<RelationPrediction> predictions;  // sorted by descending score
};

struct RecallResult {
  std::size_t hits = 0;
  std::size_t total = 0;
  std::vector<bool> matched;  // per ground-truth entry, in input order

  // hits / total, nullopt when there is no ground truth.
  std::optional<double> value() const;
};

// Per image, the top-K predictions claim ground truth greedily in score
// order: each takes the unclaimed matching entry of highest overlap (first
// in input order on ties), so every entry is counted at most once.
RecallResult recall_at_k(std::span<const ImagePredictions> images, std::span<const GroundTruthRelation> gt,
                         std::size_t k, MatchMode mode);

using PredicateTypeTable = std::vector<PredicateType>;

// Recall restricted to the ground truth of each predicate type, indexed by
// PredicateType; `result` must come from recall_at_k over the same `gt`.
std::array<RecallResult, kPredicateTypeCount> per_type_breakdown(const RecallResult& result,
                                                                 std::span<const GroundTruthRelation> gt,
                                                                 const PredicateTypeTable& table);

struct Triplet {
  std::size_t subject = 0;
  std::size_t predicate = 0;
  std::size_t object = 0;
  auto operator<=>(const Triplet&) const = default;
};

inline Triplet triplet_of(const GroundTruthRelation& gt) { return {gt.subject_label, gt.predicate, gt.object_label}; }
inline Triplet triplet_of(const RelationPrediction& p) { return {p.subject.label, p.predicate, p.object.label}; }

// Test relations whose triplet never occurs in training.
std::vector<GroundTruthRelation> zero_shot_filter(std::span<const GroundTruthRelation> train,
                                                  std::span<const GroundTruthRelation> test);

struct GalleryImage {
  std::string image_id;
  std::vector<RelationPrediction> predictions;
  std::vector<GroundTruthRelation> ground_truth;
};

struct RankedImage {
  std::string image_id;
  std::optional<double> score;  // mean S of the query's detections; none when absent
  bool hit = false;
};

struct QueryResult {
  Triplet query;
  std::vector<RankedImage> ranking;
  std::size_t first_hit_rank = 0;  // 1-based; gallery size + 1 when never found
};

struct RetrievalResult {
  std::vector<QueryResult> queries;
  std::optional<double> recall_at_5;
  std::optional<double> median_rank;
};

// Images are ranked per query by the mean score of that query's detections;
// images without any come last; ties by image id. A hit is an image where a
// detection of the query matches its ground truth in relation mode.
RetrievalResult retrieval_eval(std::span<const Triplet> queries, std::span<const GalleryImage> gallery,
                               std::size_t classes, std::size_t predicates);

// Most frequent ground-truth triplets, ties by triplet order.
std::vector<Triplet> frequent_triplets(std::span<const GroundTruthRelation> gt, std::size_t limit);

// ---- prediction drivers ---------------------------------------------------

// Candidates for predicate prediction: every annotated (subject, object) pair
// of ground-truth boxes, every predicate, S = 1 + S_p + 1.
ImagePredictions predicate_task_predictions(const JointModel& model, const ImageRecord& record,
                                            const FeatureMap& map,
                                            PredicateScoring scoring = PredicateScoring::logits);

// Full detection: external detections (object head labels those without a
// classeme; ground-truth boxes are used when the record has none), NMS,
// then relation scoring truncated to top_k.
ImagePredictions detect_image(const JointModel& model, const ImageRecord& record, const FeatureMap& map,
                              const DetectionConfig& config, std::size_t top_k);

// Top-1 predicate accuracy over annotated relations with ground-truth boxes.
struct AccuracyResult {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::optional<double> value() const;
};
AccuracyResult predicate_accuracy(const JointModel& model, std::span<const ImageRecord> records,
                                  std::span<const FeatureMap> maps,
                                  PredicateScoring scoring = PredicateScoring::logits);

// Pair features built from ground-truth boxes and head classemes.
struct PairFeatures {
  Vector subject;
  Vector object;
};
PairFeatures pair_features(const JointModel& model, const FeatureMap& map, const BoundingBox& subject,
                           const BoundingBox& object);

// ---- report ---------------------------------------------------------------

struct MetricRow {
  std::string task;
  std::string metric;
  std::optional<std::size_t> k;
  std::string subset = "all";
  std::optional<double> value;
  std::size_t hits = 0;
  std::size_t total = 0;
};

std::string to_json_line(const MetricRow& row);

}  // namespace vtranse
