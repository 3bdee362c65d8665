#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vtranse/features.hpp"

namespace vtranse {

enum class PredicateType { kVerb, kSpatial, kPreposition, kComparative };

inline constexpr std::size_t kPredicateTypeCount = 4;

const char* to_string(PredicateType type);
PredicateType parse_predicate_type(const std::string& name);

struct Vocabulary {
  std::vector<std::string> objects;  // N names, background excluded
  std::string background = "__background__";
  std::vector<std::string> predicates;         // R names
  std::vector<PredicateType> predicate_types;  // one per predicate

  std::size_t class_count() const { return objects.size(); }
  std::size_t predicate_count() const { return predicates.size(); }
  std::optional<std::size_t> object_index(const std::string& name) const;
  std::optional<std::size_t> predicate_index(const std::string& name) const;

  bool operator==(const Vocabulary&) const = default;
};

// Throws ConfigError on duplicate names or a partial type table.
void validate(const Vocabulary& vocab);

struct ObjectAnnotation {
  std::size_t label = 0;
  BoundingBox box;
  bool operator==(const ObjectAnnotation&) const = default;
};

struct RelationAnnotation {
  std::size_t subject = 0;  // index into ImageRecord::objects
  std::size_t predicate = 0;
  std::size_t object = 0;
  bool operator==(const RelationAnnotation&) const = default;
};

// Externally supplied detection; without a classeme the object head labels it.
struct ExternalDetection {
  BoundingBox box;
  Vector classeme;
  bool operator==(const ExternalDetection&) const = default;
};

struct ImageRecord {
  std::string id;
  double width = 0.0;
  double height = 0.0;
  std::string feature_map;  // path relative to the annotation file
  std::vector<ObjectAnnotation> objects;
  std::vector<RelationAnnotation> relations;
  std::vector<ExternalDetection> detections;

  bool operator==(const ImageRecord&) const = default;
};

struct Dataset {
  Vocabulary vocab;
  std::vector<ImageRecord> images;
  std::filesystem::path root;  // directory feature-map paths are relative to
};

// Vocabulary header: JSON {"objects": [...], "background": "...",
//                          "predicates": [{"name": ..., "type": ...}, ...]}
Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);

// One JSON object per line, one image per line:
//   {"id", "width", "height", "feature_map",
//    "objects": [{"label", "box": [x, y, w, h]}],
//    "relations": [{"subject", "predicate", "object"}],
//    "detections": [{"box", "classeme"?}]}
// Boxes are clamped to the image; records come back sorted by id.
Dataset load_annotations(const std::filesystem::path& path, const Vocabulary& vocab);
void save_annotations(const std::filesystem::path& path, const std::vector<ImageRecord>& images);

// Referential integrity and range checks against the vocabulary.
void validate(const ImageRecord& record, const Vocabulary& vocab);

// Feature maps: "VTFM", u32 version, u32 W', u32 H', u32 C, f64 stride,
// then W' * H' * C little-endian f32 in (i', j', c) row-major order.
inline constexpr std::uint32_t kFeatureMapVersion = 1;
FeatureMap load_feature_map(const std::filesystem::path& path);
void save_feature_map(const std::filesystem::path& path, const FeatureMap& map);

FeatureMap load_feature_map(const Dataset& dataset, const ImageRecord& record);

// ---- synthetic data -------------------------------------------------------

// One decision-list entry. A pair matches when every present constraint holds
// for the subject's location feature relative to the object.
struct PredicateRule {
  std::string name;
  PredicateType type = PredicateType::kSpatial;
  std::optional<double> max_ty;  // t_y < max_ty
  std::optional<double> min_ty;  // t_y > min_ty
  std::optional<double> max_tx;
  std::optional<double> min_tx;
  std::optional<double> min_th;  // t_h > min_th
  std::vector<std::size_t> subject_classes;  // empty = any
  std::vector<std::size_t> object_classes;   // empty = any
};

struct RuleSet {
  std::vector<PredicateRule> rules;  // first match wins; rule index = predicate index
  // Pairs whose features fall within this distance of any threshold are not
  // annotated, so every labelled pair is separated from the decision boundaries.
  double boundary_margin = 0.1;

  // Index of the first matching rule, nullopt when no rule applies.
  std::optional<std::size_t> classify(std::size_t subject_class, const BoundingBox& subject,
                                      std::size_t object_class, const BoundingBox& object) const;
  bool near_boundary(const BoundingBox& subject, const BoundingBox& object) const;
};

// Default decision list for R in [2, 7]: above, below, taller than, hold,
// left of, right of, with (catch-all, always last).
RuleSet default_rules(std::size_t classes, std::size_t predicates);

struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t images = 500;
  std::size_t classes = 6;
  std::size_t predicates = 5;
  std::size_t channels = 0;  // 0 = one per class
  double image_size = 64.0;
  double stride = 4.0;
  std::size_t min_objects = 3;
  std::size_t max_objects = 5;
  std::size_t max_relations = 4;
  double noise = 0.05;
  std::size_t proposals_per_object = 2;
  std::size_t background_proposals = 2;
  std::string id_prefix = "img";
};

struct SynthDataset {
  Dataset dataset;
  std::vector<FeatureMap> maps;  // parallel to dataset.images
  RuleSet rules;
};

SynthDataset synth_generate(const SynthConfig& config, const RuleSet& rules);
SynthDataset synth_generate(const SynthConfig& config);

// Writes maps under `directory/maps` and returns records with paths set.
void write_synth_split(const std::filesystem::path& directory, const std::string& split, SynthDataset& data);

}  // namespace vtranse
