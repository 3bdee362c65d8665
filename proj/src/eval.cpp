#include "vtranse/eval.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "vtranse/error.hpp"

namespace vtranse {

std::vector<GroundTruthRelation> ground_truth(const ImageRecord& record) {
  std::vector<GroundTruthRelation> out;
  for (const auto& r : record.relations) {
    const auto& s = record.objects.at(r.subject);
    const auto& o = record.objects.at(r.object);
    out.push_back({record.id, s.label, s.box, r.predicate, o.label, o.box});
  }
  return out;
}

std::vector<GroundTruthRelation> ground_truth(std::span<const ImageRecord> records) {
  std::vector<GroundTruthRelation> out;
  for (const auto& rec : records) {
    auto gt = ground_truth(rec);
    out.insert(out.end(), gt.begin(), gt.end());
  }
  return out;
}

const char* to_string(MatchMode mode) {
  switch (mode) {
    case MatchMode::kPredicate: return "predicate";
    case MatchMode::kPhrase: return "phrase";
    case MatchMode::kRelation: return "relation";
  }
  return "unknown";
}

MatchMode parse_match_mode(const std::string& name) {
  if (name == "predicate") return MatchMode::kPredicate;
  if (name == "phrase") return MatchMode::kPhrase;
  if (name == "relation") return MatchMode::kRelation;
  throw ConfigError("unknown match mode '" + name + "'");
}

bool match_relation(const RelationPrediction& prediction, const GroundTruthRelation& gt, MatchMode mode) {
  if (prediction.subject.label != gt.subject_label || prediction.object.label != gt.object_label ||
      prediction.predicate != gt.predicate)
    return false;
  switch (mode) {
    case MatchMode::kPredicate:
      return true;
    case MatchMode::kRelation:
      return iou(prediction.subject.box, gt.subject_box) >= kMatchIou &&
             iou(prediction.object.box, gt.object_box) >= kMatchIou;
    case MatchMode::kPhrase:
      return iou(box_union(prediction.subject.box, prediction.object.box), box_union(gt.subject_box, gt.object_box)) >=
             kMatchIou;
  }
  throw ConfigError("unknown match mode");
}

double match_overlap(const RelationPrediction& prediction, const GroundTruthRelation& gt, MatchMode mode) {
  switch (mode) {
    case MatchMode::kPredicate:
      return 1.0;
    case MatchMode::kRelation:
      return std::min(iou(prediction.subject.box, gt.subject_box), iou(prediction.object.box, gt.object_box));
    case MatchMode::kPhrase:
      return iou(box_union(prediction.subject.box, prediction.object.box), box_union(gt.subject_box, gt.object_box));
  }
  throw ConfigError("unknown match mode");
}

std::optional<double> RecallResult::value() const {
  if (total == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(total);
}

RecallResult recall_at_k(std::span<const ImagePredictions> images, std::span<const GroundTruthRelation> gt,
                         std::size_t k, MatchMode mode) {
  if (k == 0) throw ConfigError("recall@K needs K > 0");
  std::map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t g = 0; g < gt.size(); ++g) by_image[gt[g].image_id].push_back(g);

  RecallResult out{0, gt.size(), std::vector<bool>(gt.size(), false)};
  for (const auto& image : images) {
    const auto it = by_image.find(image.image_id);
    if (it == by_image.end()) continue;
    const std::size_t limit = std::min(k, image.predictions.size());
    for (std::size_t p = 0; p < limit; ++p) {
      std::optional<std::size_t> best;
      double best_overlap = -1.0;
      for (std::size_t g : it->second) {
        if (out.matched[g] || !match_relation(image.predictions[p], gt[g], mode)) continue;
        const double overlap = match_overlap(image.predictions[p], gt[g], mode);
        if (overlap > best_overlap) {
          best = g;
          best_overlap = overlap;
        }
      }
      if (best) {
        out.matched[*best] = true;
        ++out.hits;
      }
    }
  }
  return out;
}

std::array<RecallResult, kPredicateTypeCount> per_type_breakdown(const RecallResult& result,
                                                                 std::span<const GroundTruthRelation> gt,
                                                                 const PredicateTypeTable& table) {
  if (result.matched.size() != gt.size()) throw DimensionError("recall result does not belong to this ground truth");
  std::array<RecallResult, kPredicateTypeCount> out{};
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (gt[g].predicate >= table.size())
      throw ConfigError("predicate " + std::to_string(gt[g].predicate) + " has no type");
    auto& slot = out[static_cast<std::size_t>(table[gt[g].predicate])];
    ++slot.total;
    slot.matched.push_back(result.matched[g]);
    if (result.matched[g]) ++slot.hits;
  }
  return out;
}

std::vector<GroundTruthRelation> zero_shot_filter(std::span<const GroundTruthRelation> train,
                                                  std::span<const GroundTruthRelation> test) {
  std::set<Triplet> seen;
  for (const auto& g : train) seen.insert(triplet_of(g));
  std::vector<GroundTruthRelation> out;
  for (const auto& g : test)
    if (!seen.count(triplet_of(g))) out.push_back(g);
  return out;
}

RetrievalResult retrieval_eval(std::span<const Triplet> queries, std::span<const GalleryImage> gallery,
                               std::size_t classes, std::size_t predicates) {
  RetrievalResult out;
  std::vector<double> ranks;
  std::size_t top5 = 0;
  for (const auto& q : queries) {
    if (q.subject >= classes || q.object >= classes || q.predicate >= predicates)
      throw QueryError("query (" + std::to_string(q.subject) + ", " + std::to_string(q.predicate) + ", " +
                       std::to_string(q.object) + ") is outside the vocabulary");
    QueryResult result{q, {}, gallery.size() + 1};
    for (const auto& image : gallery) {
      RankedImage ranked{image.image_id, std::nullopt, false};
      double total = 0.0;
      std::size_t count = 0;
      for (const auto& p : image.predictions) {
        if (triplet_of(p) != q) continue;
        total += p.score;
        ++count;
        if (!ranked.hit)
          ranked.hit = std::any_of(image.ground_truth.begin(), image.ground_truth.end(), [&](const auto& g) {
            return match_relation(p, g, MatchMode::kRelation);
          });
      }
      if (count > 0) ranked.score = total / static_cast<double>(count);
      result.ranking.push_back(std::move(ranked));
    }
    std::sort(result.ranking.begin(), result.ranking.end(), [](const RankedImage& a, const RankedImage& b) {
      if (a.score.has_value() != b.score.has_value()) return a.score.has_value();
      if (a.score && *a.score != *b.score) return *a.score > *b.score;
      return a.image_id < b.image_id;
    });
    for (std::size_t r = 0; r < result.ranking.size(); ++r)
      if (result.ranking[r].hit) {
        result.first_hit_rank = r + 1;
        break;
      }
    if (result.first_hit_rank <= std::min<std::size_t>(5, result.ranking.size())) ++top5;
    ranks.push_back(static_cast<double>(result.first_hit_rank));
    out.queries.push_back(std::move(result));
  }
  if (!ranks.empty()) {
    out.recall_at_5 = static_cast<double>(top5) / static_cast<double>(ranks.size());
    std::sort(ranks.begin(), ranks.end());
    const std::size_t mid = ranks.size() / 2;
    out.median_rank = ranks.size() % 2 == 1 ? ranks[mid] : 0.5 * (ranks[mid - 1] + ranks[mid]);
  }
  return out;
}

std::vector<Triplet> frequent_triplets(std::span<const GroundTruthRelation> gt, std::size_t limit) {
  std::map<Triplet, std::size_t> counts;
  for (const auto& g : gt) ++counts[triplet_of(g)];
  std::vector<std::pair<Triplet, std::size_t>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<Triplet> out;
  for (std::size_t k = 0; k < sorted.size() && k < limit; ++k) out.push_back(sorted[k].first);
  return out;
}

// ---- prediction drivers ---------------------------------------------------

PairFeatures pair_features(const JointModel& model, const FeatureMap& map, const BoundingBox& subject,
                           const BoundingBox& object) {
  const Vector vs = visual_feature(map, subject, model.dims.grid);
  const Vector vo = visual_feature(map, object, model.dims.grid);
  return {fuse(object_head(model.head, vs), location_feature(subject, object), vs, model.scales),
          fuse(object_head(model.head, vo), location_feature(object, subject), vo, model.scales)};
}

ImagePredictions predicate_task_predictions(const JointModel& model, const ImageRecord& record,
                                            const FeatureMap& map, PredicateScoring scoring) {
  ImagePredictions out{record.id, {}};
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& r : record.relations) pairs.emplace(r.subject, r.object);
  std::vector<Detection> objects;
  for (const auto& o : record.objects) {
    Vector classeme = object_head(model.head, visual_feature(map, o.box, model.dims.grid));
    objects.push_back({o.box, o.label, 1.0, std::move(classeme)});
  }
  for (const auto& [s, o] : pairs) {
    const auto& subj = objects[s];
    const auto& obj = objects[o];
    const Vector xs = fuse(subj.classeme, location_feature(subj.box, obj.box),
                           visual_feature(map, subj.box, model.dims.grid), model.scales);
    const Vector xo = fuse(obj.classeme, location_feature(obj.box, subj.box),
                           visual_feature(map, obj.box, model.dims.grid), model.scales);
    const Vector probs = predicate_probabilities(model.relation, xs, xo, scoring);
    for (std::size_t p = 0; p < probs.size(); ++p)
      out.predictions.push_back({subj, obj, s, o, p, probs[p], relation_score(subj.score, probs[p], obj.score)});
  }
  std::sort(out.predictions.begin(), out.predictions.end(), prediction_before);
  return out;
}

ImagePredictions detect_image(const JointModel& model, const ImageRecord& record, const FeatureMap& map,
                              const DetectionConfig& config, std::size_t top_k) {
  std::vector<Detection> candidates;
  std::vector<BoundingBox> unlabeled;
  if (record.detections.empty()) {
    for (const auto& o : record.objects) unlabeled.push_back(o.box);
  } else {
    for (const auto& d : record.detections) {
      if (d.classeme.empty())
        unlabeled.push_back(d.box);
      else
        candidates.push_back(make_detection(d.box, d.classeme));
    }
  }
  auto classified = classify_proposals(map, unlabeled, model);
  candidates.insert(candidates.end(), classified.begin(), classified.end());
  std::erase_if(candidates, [&](const Detection& d) { return d.label == model.dims.background(); });
  auto kept = nms(candidates, config.nms_threshold);
  if (kept.size() > config.max_detections) kept.resize(config.max_detections);
  return {record.id, detect_relations(map, kept, model, top_k, config.scoring)};
}

std::optional<double> AccuracyResult::value() const {
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

AccuracyResult predicate_accuracy(const JointModel& model, std::span<const ImageRecord> records,
                                  std::span<const FeatureMap> maps, PredicateScoring scoring) {
  if (records.size() != maps.size()) throw DimensionError("one feature map per record expected");
  AccuracyResult out;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& rec = records[k];
    for (const auto& r : rec.relations) {
      const auto f = pair_features(model, maps[k], rec.objects[r.subject].box, rec.objects[r.object].box);
      if (predict_predicate(model.relation, f.subject, f.object, scoring).predicate == r.predicate) ++out.correct;
      ++out.total;
    }
  }
  return out;
}

std::string to_json_line(const MetricRow& row) {
  nlohmann::ordered_json j;
  j["task"] = row.task;
  j["metric"] = row.metric;
  j["k"] = row.k ? nlohmann::ordered_json(*row.k) : nlohmann::ordered_json(nullptr);
  j["subset"] = row.subset;
  j["value"] = row.value ? nlohmann::ordered_json(*row.value) : nlohmann::ordered_json("NA");
  j["hits"] = row.hits;
  j["total"] = row.total;
  return j.dump();
}

}  // namespace vtranse
