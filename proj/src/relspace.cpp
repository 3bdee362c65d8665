#include "vtranse/relspace.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vtranse/error.hpp"

namespace vtranse {

RelationModel make_relation_model(std::size_t feature_dim, std::size_t embedding_dim, std::size_t predicates) {
  if (feature_dim == 0 || embedding_dim == 0 || predicates == 0)
    throw ConfigError("relation model needs positive feature, embedding and predicate dimensions");
  return {Matrix(embedding_dim, feature_dim), Matrix(embedding_dim, feature_dim), Matrix(predicates, embedding_dim)};
}

void randomize(RelationModel& model, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> gauss(0.0, stddev);
  for (Matrix* m : {&model.subject_projection, &model.object_projection, &model.translations})
    for (double& v : m->values()) v = gauss(rng);
}

void validate(const RelationModel& model) {
  const std::size_t r = model.embedding_dim();
  if (r == 0 || model.predicate_count() == 0 || model.feature_dim() == 0)
    throw ConfigError("relation model has an empty dimension");
  if (model.subject_projection.rows() != r || model.object_projection.rows() != r ||
      model.object_projection.cols() != model.feature_dim())
    throw DimensionError("projection shapes disagree with the embedding dimension");
  for (const Matrix* m : {&model.subject_projection, &model.object_projection, &model.translations})
    require_finite(m->values(), "relation model");
}

Vector project(const Matrix& w, std::span<const double> x) { return matvec(w, x); }

namespace {

// W_o x_o - W_s x_s
Vector relation_offset(const RelationModel& model, std::span<const double> subject, std::span<const double> object) {
  Vector offset = matvec(model.object_projection, object);
  axpy(-1.0, matvec(model.subject_projection, subject), offset);
  return offset;
}

RelationGradients zero_gradients(const RelationModel& model) {
  return {Matrix(model.subject_projection.rows(), model.subject_projection.cols()),
          Matrix(model.object_projection.rows(), model.object_projection.cols()),
          Matrix(model.translations.rows(), model.translations.cols()),
          {},
          {}};
}

void check_predicate(const RelationModel& model, std::size_t predicate) {
  if (predicate >= model.predicate_count())
    throw DimensionError("predicate index " + std::to_string(predicate) + " out of range");
}

}  // namespace

Vector predicate_logits(const RelationModel& model, std::span<const double> subject, std::span<const double> object) {
  return matvec(model.translations, relation_offset(model, subject, object));
}

RelationLoss softmax_loss(const RelationModel& model, std::span<const RelationInstance> batch) {
  if (batch.empty()) throw EmptyBatchError("softmax_loss needs at least one relation");
  RelationLoss out{0.0, zero_gradients(model)};
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& inst : batch) {
    check_predicate(model, inst.predicate);
    const Vector offset = relation_offset(model, inst.subject, inst.object);
    const Vector logits = matvec(model.translations, offset);
    out.value += (log_sum_exp(logits) - logits[inst.predicate]) * inv;

    Vector dlogits = softmax(logits);
    dlogits[inst.predicate] -= 1.0;
    for (double& d : dlogits) d *= inv;

    add_outer(out.grads.translations, dlogits, offset);
    const Vector doffset = matvec_transposed(model.translations, dlogits);
    add_outer(out.grads.object_projection, doffset, inst.object);
    add_outer(out.grads.subject_projection, doffset, inst.subject, -1.0);
    out.grads.object_features.push_back(matvec_transposed(model.object_projection, doffset));
    Vector ds = matvec_transposed(model.subject_projection, doffset);
    for (double& d : ds) d = -d;
    out.grads.subject_features.push_back(std::move(ds));
  }
  return out;
}

std::size_t margin_feature_slots(std::span<const MarginSample> batch) {
  std::size_t n = 0;
  for (const auto& s : batch) n += 1 + s.negatives.size();
  return n;
}

namespace {

// e = W_s x_s + t_p - W_o x_o; distance = |e|^2.
void accumulate_distance_gradient(const RelationModel& model, const RelationInstance& inst, const Vector& residual,
                                  double scale, RelationGradients& grads, Vector& dsubject, Vector& dobject) {
  Vector de(residual.size());
  for (std::size_t k = 0; k < de.size(); ++k) de[k] = 2.0 * scale * residual[k];
  add_outer(grads.subject_projection, de, inst.subject);
  add_outer(grads.object_projection, de, inst.object, -1.0);
  axpy(1.0, de, grads.translations.row(inst.predicate));
  axpy(1.0, matvec_transposed(model.subject_projection, de), dsubject);
  axpy(-1.0, matvec_transposed(model.object_projection, de), dobject);
}

}  // namespace

RelationLoss margin_loss(const RelationModel& model, std::span<const MarginSample> batch, double margin) {
  if (batch.empty()) throw EmptyBatchError("margin_loss needs at least one positive");
  RelationLoss out{0.0, zero_gradients(model)};
  const double inv = 1.0 / static_cast<double>(batch.size());
  const std::size_t m = model.feature_dim();
  for (const auto& sample : batch) {
    if (sample.negatives.empty()) throw EmptyBatchError("every positive needs at least one corrupted triplet");
    check_predicate(model, sample.positive.predicate);
    const Vector pos_res =
        translation_residual(model, sample.positive.subject, sample.positive.predicate, sample.positive.object);
    const double pos_d = dot(pos_res, pos_res);

    Vector pos_ds(m, 0.0), pos_do(m, 0.0);
    double active = 0.0;
    std::vector<Vector> neg_ds, neg_do;
    for (const auto& neg : sample.negatives) {
      check_predicate(model, neg.predicate);
      const Vector neg_res = translation_residual(model, neg.subject, neg.predicate, neg.object);
      const double hinge = pos_d + margin - dot(neg_res, neg_res);
      Vector ds(m, 0.0), dob(m, 0.0);
      if (hinge > 0.0) {
        out.value += hinge * inv;
        active += 1.0;
        accumulate_distance_gradient(model, neg, neg_res, -inv, out.grads, ds, dob);
      }
      neg_ds.push_back(std::move(ds));
      neg_do.push_back(std::move(dob));
    }
    if (active > 0.0)
      accumulate_distance_gradient(model, sample.positive, pos_res, active * inv, out.grads, pos_ds, pos_do);
    out.grads.subject_features.push_back(std::move(pos_ds));
    out.grads.object_features.push_back(std::move(pos_do));
    for (std::size_t k = 0; k < neg_ds.size(); ++k) {
      out.grads.subject_features.push_back(std::move(neg_ds[k]));
      out.grads.object_features.push_back(std::move(neg_do[k]));
    }
  }
  return out;
}

std::string_view to_string(PredicateScoring scoring) {
  return scoring == PredicateScoring::logits ? "logits" : "distance";
}

PredicateScoring parse_predicate_scoring(std::string_view text) {
  if (text == "logits") return PredicateScoring::logits;
  if (text == "distance") return PredicateScoring::distance;
  throw ConfigError("unknown predicate scoring '" + std::string(text) + "' (expected logits or distance)");
}

Vector predicate_scores(const RelationModel& model, std::span<const double> subject, std::span<const double> object,
                        PredicateScoring scoring) {
  if (scoring == PredicateScoring::logits) return predicate_logits(model, subject, object);
  const std::size_t R = model.translations.rows();
  Vector scores(R);
  for (std::size_t p = 0; p < R; ++p) {
    const Vector res = translation_residual(model, subject, p, object);
    scores[p] = -dot(res, res);
  }
  return scores;
}

Vector predicate_probabilities(const RelationModel& model, std::span<const double> subject,
                               std::span<const double> object, PredicateScoring scoring) {
  return softmax(predicate_scores(model, subject, object, scoring));
}

PredicatePrediction predict_predicate(const RelationModel& model, std::span<const double> subject,
                                      std::span<const double> object, PredicateScoring scoring) {
  const Vector probs = predicate_probabilities(model, subject, object, scoring);
  const std::size_t best = argmax(probs);
  return {best, probs[best]};
}

Vector translation_residual(const RelationModel& model, std::span<const double> subject, std::size_t predicate,
                            std::span<const double> object) {
  check_predicate(model, predicate);
  Vector res = matvec(model.subject_projection, subject);
  axpy(1.0, model.translations.row(predicate), res);
  axpy(-1.0, matvec(model.object_projection, object), res);
  return res;
}

std::vector<PredicateNeighbor> predicate_neighbors(const RelationModel& model, std::size_t predicate, std::size_t k) {
  check_predicate(model, predicate);
  const std::size_t count = model.predicate_count();
  if (k >= count) throw ConfigError("neighbour count must be smaller than the predicate count");
  Vector norms(count);
  for (std::size_t p = 0; p < count; ++p) {
    norms[p] = norm(model.translations.row(p));
    if (norms[p] == 0.0) throw NumericError("translation vector " + std::to_string(p) + " has zero norm");
  }
  std::vector<PredicateNeighbor> all;
  for (std::size_t p = 0; p < count; ++p) {
    if (p == predicate) continue;
    all.push_back({p, dot(model.translations.row(predicate), model.translations.row(p)) / (norms[predicate] * norms[p])});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const PredicateNeighbor& a, const PredicateNeighbor& b) { return a.similarity > b.similarity; });
  all.resize(k);
  return all;
}

}  // namespace vtranse
