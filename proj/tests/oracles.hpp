#pragma once

// Brute-force reference implementations and random instance generators shared
// by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "vtranse/detector.hpp"
#include "vtranse/eval.hpp"
#include "vtranse/features.hpp"
#include "vtranse/model.hpp"

namespace oracle {

using namespace vtranse;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline Vector gaussian(std::mt19937_64& rng, std::size_t n, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Vector v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline BoundingBox random_box(std::mt19937_64& rng, double extent = 10.0) {
  return {uniform(rng, 0.0, extent), uniform(rng, 0.0, extent), uniform(rng, 0.5, extent), uniform(rng, 0.5, extent)};
}

// Boxes snapped to a coarse lattice so overlaps at exactly the thresholds occur.
inline BoundingBox lattice_box(std::mt19937_64& rng) {
  return {static_cast<double>(pick(rng, 4)), static_cast<double>(pick(rng, 4)), static_cast<double>(1 + pick(rng, 3)),
          static_cast<double>(1 + pick(rng, 3))};
}

inline Vector random_classeme(std::mt19937_64& rng, std::size_t n) {
  Vector v(n);
  double total = 0.0;
  for (auto& x : v) total += (x = uniform(rng, 0.05, 1.0));
  for (auto& x : v) x /= total;
  return v;
}

inline FeatureMap random_map(std::mt19937_64& rng, std::size_t w, std::size_t h, std::size_t c, double stride) {
  FeatureMap map(w, h, c, stride);
  for (auto& v : map.values()) v = uniform(rng, -1.0, 1.0);
  return map;
}

// ---- geometry -------------------------------------------------------------

// Interval overlap on each axis.
inline double box_iou(const BoundingBox& a, const BoundingBox& b) {
  const double x0 = std::max(a.x, b.x), x1 = std::min(a.x + a.w, b.x + b.w);
  const double y0 = std::max(a.y, b.y), y1 = std::min(a.y + a.h, b.y + b.h);
  const double inter = (x1 > x0 && y1 > y0) ? (x1 - x0) * (y1 - y0) : 0.0;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

// ---- nms ------------------------------------------------------------------

// Per class: repeatedly take the best remaining detection (highest score,
// lowest index) and delete everything it overlaps; then merge the classes.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double threshold) {
  std::vector<std::size_t> survivors;
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dets.size(); ++i) by_class[dets[i].label].push_back(i);
  for (auto& [label, remaining] : by_class) {
    while (!remaining.empty()) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < remaining.size(); ++k)
        if (dets[remaining[k]].score > dets[remaining[best]].score) best = k;
      const std::size_t keep = remaining[best];
      survivors.push_back(keep);
      std::vector<std::size_t> next;
      for (std::size_t idx : remaining)
        if (idx != keep && box_iou(dets[keep].box, dets[idx].box) <= threshold) next.push_back(idx);
      remaining = next;
    }
  }
  std::sort(survivors.begin(), survivors.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });
  std::vector<Detection> out;
  for (std::size_t i : survivors) out.push_back(dets[i]);
  return out;
}

// ---- zero-shot ------------------------------------------------------------

inline std::vector<GroundTruthRelation> zero_shot(const std::vector<GroundTruthRelation>& train,
                                                  const std::vector<GroundTruthRelation>& test) {
  std::vector<GroundTruthRelation> out;
  for (const auto& t : test) {
    bool seen = false;
    for (const auto& s : train)
      seen = seen || (s.subject_label == t.subject_label && s.predicate == t.predicate &&
                      s.object_label == t.object_label);
    if (!seen) out.push_back(t);
  }
  return out;
}

// ---- matching and recall --------------------------------------------------

inline bool matches(const RelationPrediction& p, const GroundTruthRelation& g, MatchMode mode) {
  if (p.subject.label != g.subject_label || p.object.label != g.object_label || p.predicate != g.predicate)
    return false;
  if (mode == MatchMode::kPredicate) return true;
  if (mode == MatchMode::kRelation) return box_iou(p.subject.box, g.subject_box) >= 0.5 && box_iou(p.object.box, g.object_box) >= 0.5;
  return box_iou(box_union(p.subject.box, p.object.box), box_union(g.subject_box, g.object_box)) >= 0.5;
}

inline double overlap(const RelationPrediction& p, const GroundTruthRelation& g, MatchMode mode) {
  if (mode == MatchMode::kPredicate) return 1.0;
  if (mode == MatchMode::kRelation) return std::min(box_iou(p.subject.box, g.subject_box), box_iou(p.object.box, g.object_box));
  return box_iou(box_union(p.subject.box, p.object.box), box_union(g.subject_box, g.object_box));
}

// Builds the full prediction x ground-truth overlap table per image, then
// walks the top-K rows claiming the best free column.
inline std::vector<bool> recall_matched(const std::vector<ImagePredictions>& images,
                                        const std::vector<GroundTruthRelation>& gt, std::size_t k, MatchMode mode) {
  std::vector<bool> matched(gt.size(), false);
  for (const auto& image : images) {
    const std::size_t rows = std::min(k, image.predictions.size());
    std::vector<std::vector<double>> table(rows, std::vector<double>(gt.size(), -1.0));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t g = 0; g < gt.size(); ++g)
        if (gt[g].image_id == image.image_id && matches(image.predictions[r], gt[g], mode))
          table[r][g] = overlap(image.predictions[r], gt[g], mode);
    for (std::size_t r = 0; r < rows; ++r) {
      std::optional<std::size_t> best;
      for (std::size_t g = 0; g < gt.size(); ++g)
        if (!matched[g] && table[r][g] >= 0.0 && (!best || table[r][g] > table[r][*best])) best = g;
      if (best) matched[*best] = true;
    }
  }
  return matched;
}

// ---- retrieval ------------------------------------------------------------

struct RetrievalOutcome {
  std::vector<std::size_t> first_hit;  // per query
  double recall_at_5 = 0.0;
  double median_rank = 0.0;
};

inline RetrievalOutcome retrieval(const std::vector<Triplet>& queries, const std::vector<GalleryImage>& gallery) {
  RetrievalOutcome out;
  std::vector<double> ranks;
  std::size_t in_top5 = 0;
  for (const auto& q : queries) {
    const std::size_t n = gallery.size();
    std::vector<std::optional<double>> score(n);
    std::vector<bool> hit(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> scores;
      for (const auto& p : gallery[i].predictions) {
        if (p.subject.label != q.subject || p.predicate != q.predicate || p.object.label != q.object) continue;
        scores.push_back(p.score);
        for (const auto& g : gallery[i].ground_truth) hit[i] = hit[i] || matches(p, g, MatchMode::kRelation);
      }
      if (!scores.empty()) {
        double sum = 0.0;
        for (double s : scores) sum += s;
        score[i] = sum / static_cast<double>(scores.size());
      }
    }
    // Rank of image i = 1 + number of images ordered strictly before it.
    auto before = [&](std::size_t a, std::size_t b) {
      if (score[a] && !score[b]) return true;
      if (!score[a] && score[b]) return false;
      if (score[a] && score[b] && *score[a] != *score[b]) return *score[a] > *score[b];
      return gallery[a].image_id < gallery[b].image_id;
    };
    std::size_t first = n + 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (!hit[i]) continue;
      std::size_t rank = 1;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && before(j, i)) ++rank;
      first = std::min(first, rank);
    }
    out.first_hit.push_back(first);
    ranks.push_back(static_cast<double>(first));
    if (first <= std::min<std::size_t>(5, n)) ++in_top5;
  }
  if (!ranks.empty()) {
    out.recall_at_5 = static_cast<double>(in_top5) / static_cast<double>(ranks.size());
    std::sort(ranks.begin(), ranks.end());
    const std::size_t n = ranks.size();
    out.median_rank = n % 2 ? ranks[n / 2] : (ranks[n / 2 - 1] + ranks[n / 2]) / 2.0;
  }
  return out;
}

// ---- relation detection ---------------------------------------------------

// Every (i, j, p) with i != j, then a lexicographic sort on (-S, i, j, p).
inline std::vector<RelationPrediction> detect_relations(const FeatureMap& map, const std::vector<Detection>& dets,
                                                        const JointModel& model, std::size_t top_k) {
  std::vector<std::tuple<double, std::size_t, std::size_t, std::size_t, double>> rows;
  for (std::size_t i = 0; i < dets.size(); ++i)
    for (std::size_t j = 0; j < dets.size(); ++j) {
      if (i == j) continue;
      const Vector vi = bilinear_sample(map, grid_positions(dets[i].box, model.dims.grid, map.stride()));
      const Vector vj = bilinear_sample(map, grid_positions(dets[j].box, model.dims.grid, map.stride()));
      const Vector xs = fuse(dets[i].classeme, location_feature(dets[i].box, dets[j].box), vi, model.scales);
      const Vector xo = fuse(dets[j].classeme, location_feature(dets[j].box, dets[i].box), vj, model.scales);
      const Vector probs = softmax(predicate_logits(model.relation, xs, xo));
      for (std::size_t p = 0; p < probs.size(); ++p)
        rows.emplace_back(-(dets[i].score + probs[p] + dets[j].score), i, j, p, probs[p]);
    }
  std::sort(rows.begin(), rows.end());
  if (top_k > 0 && rows.size() > top_k) rows.resize(top_k);
  std::vector<RelationPrediction> out;
  for (const auto& [neg, i, j, p, prob] : rows) out.push_back({dets[i], dets[j], i, j, p, prob, -neg});
  return out;
}

// ---- random small instances -----------------------------------------------

inline GroundTruthRelation random_gt(std::mt19937_64& rng, const std::string& image, std::size_t classes,
                                     std::size_t predicates) {
  return {image, pick(rng, classes), lattice_box(rng), pick(rng, predicates), pick(rng, classes), lattice_box(rng)};
}

// A prediction that often lands on one of `near` (same labels, jittered boxes).
inline RelationPrediction random_prediction(std::mt19937_64& rng, const std::vector<GroundTruthRelation>& near,
                                            std::size_t classes, std::size_t predicates) {
  RelationPrediction p;
  if (!near.empty() && pick(rng, 3) > 0) {
    const auto& g = near[pick(rng, near.size())];
    p.subject.label = g.subject_label;
    p.object.label = g.object_label;
    p.predicate = pick(rng, 4) > 0 ? g.predicate : pick(rng, predicates);
    p.subject.box = pick(rng, 2) ? g.subject_box : lattice_box(rng);
    p.object.box = pick(rng, 2) ? g.object_box : lattice_box(rng);
  } else {
    p.subject = {lattice_box(rng), pick(rng, classes), 0.0, {}};
    p.object = {lattice_box(rng), pick(rng, classes), 0.0, {}};
    p.predicate = pick(rng, predicates);
  }
  p.score = 0.25 * static_cast<double>(pick(rng, 8));  // coarse, so ties occur
  return p;
}

inline void sort_by_score(std::vector<RelationPrediction>& preds) {
  std::stable_sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
}

struct RecallInstance {
  std::vector<ImagePredictions> images;
  std::vector<GroundTruthRelation> gt;
  std::size_t k = 1;
  MatchMode mode = MatchMode::kRelation;
};

inline RecallInstance random_recall_instance(std::mt19937_64& rng) {
  RecallInstance inst;
  const std::size_t images = 1 + pick(rng, 5), classes = 1 + pick(rng, 2), predicates = 1 + pick(rng, 3);
  for (std::size_t i = 0; i < images; ++i) {
    const std::string id = "im" + std::to_string(i);
    std::vector<GroundTruthRelation> local;
    for (std::size_t g = pick(rng, 4); g > 0; --g) local.push_back(random_gt(rng, id, classes, predicates));
    ImagePredictions ip{id, {}};
    for (std::size_t p = pick(rng, 6); p > 0; --p) ip.predictions.push_back(random_prediction(rng, local, classes, predicates));
    sort_by_score(ip.predictions);
    inst.gt.insert(inst.gt.end(), local.begin(), local.end());
    inst.images.push_back(std::move(ip));
  }
  inst.k = 1 + pick(rng, 5);
  inst.mode = std::vector<MatchMode>{MatchMode::kPredicate, MatchMode::kPhrase, MatchMode::kRelation}[pick(rng, 3)];
  return inst;
}

struct RetrievalInstance {
  std::vector<Triplet> queries;
  std::vector<GalleryImage> gallery;
  std::size_t classes = 1;
  std::size_t predicates = 1;
};

inline RetrievalInstance random_retrieval_instance(std::mt19937_64& rng) {
  RetrievalInstance inst;
  inst.classes = 1 + pick(rng, 2);
  inst.predicates = 1 + pick(rng, 3);
  const std::size_t images = pick(rng, 6);
  for (std::size_t i = 0; i < images; ++i) {
    // ids out of index order so the id tie-break matters
    GalleryImage g{"g" + std::to_string((i * 3) % 7), {}, {}};
    for (std::size_t k = pick(rng, 3); k > 0; --k) g.ground_truth.push_back(random_gt(rng, g.image_id, inst.classes, inst.predicates));
    for (std::size_t k = pick(rng, 5); k > 0; --k)
      g.predictions.push_back(random_prediction(rng, g.ground_truth, inst.classes, inst.predicates));
    sort_by_score(g.predictions);
    inst.gallery.push_back(std::move(g));
  }
  for (std::size_t q = 1 + pick(rng, 4); q > 0; --q)
    inst.queries.push_back({pick(rng, inst.classes), pick(rng, inst.predicates), pick(rng, inst.classes)});
  return inst;
}

inline std::vector<Detection> random_detections(std::mt19937_64& rng, std::size_t n, std::size_t classes) {
  std::vector<Detection> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vector c = random_classeme(rng, classes + 1);
    // coarse scores so ties happen
    Detection d = make_detection(lattice_box(rng), std::move(c));
    d.label = pick(rng, classes);
    d.score = 0.25 * static_cast<double>(1 + pick(rng, 4));
    out.push_back(d);
  }
  return out;
}

inline JointModel small_model(std::mt19937_64& rng, std::size_t classes, std::size_t predicates, std::size_t channels) {
  ModelDims dims{classes, predicates, 3, {2, 2}, channels};
  JointModel model = make_random_model(dims, rng, 0.5);
  model.scales = {1.3, 0.7, 1.1};
  return model;
}

inline std::vector<Detection> model_detections(std::mt19937_64& rng, std::size_t n, std::size_t classes) {
  std::vector<Detection> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_detection(random_box(rng, 6), random_classeme(rng, classes + 1)));
  return out;
}

}  // namespace oracle
