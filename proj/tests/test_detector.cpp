#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "vtranse/detector.hpp"
#include "vtranse/error.hpp"

using namespace vtranse;

TEST_CASE("iou") {
  const BoundingBox a{0, 0, 2, 2};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, {5, 5, 1, 1}) == 0.0);
  CHECK(iou(a, {2, 0, 1, 1}) == 0.0);
  CHECK(iou(a, {1, 0, 2, 2}) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(iou(a, {0, 0, 0, 1}), DegenerateBoxError);

  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const BoundingBox p = oracle::lattice_box(rng), q = oracle::lattice_box(rng);
    CHECK(iou(p, q) == iou(q, p));
    CHECK((iou(p, q) == 1.0) == (p == q));
    CHECK(iou(p, q) == doctest::Approx(oracle::box_iou(p, q)));
  }
}

TEST_CASE("nms") {
  const Detection a{{0, 0, 2, 2}, 0, 0.9, {0.9, 0.1}};
  const Detection b{{0, 0, 2, 2}, 0, 0.8, {0.8, 0.2}};
  CHECK(nms(std::vector<Detection>{a}, 0.5) == std::vector<Detection>{a});
  CHECK(nms(std::vector<Detection>{b, a}, 0.5) == std::vector<Detection>{a});
  Detection other = b;
  other.label = 1;
  CHECK(nms(std::vector<Detection>{b, a, other}, 0.5).size() == 2);
  CHECK(nms(std::vector<Detection>{}, 0.5).empty());
  CHECK_THROWS_AS(nms(std::vector<Detection>{a}, 1.0), ConfigError);
  CHECK_THROWS_AS(nms(std::vector<Detection>{a}, 0.0), ConfigError);

  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const auto dets = oracle::random_detections(rng, 1 + oracle::pick(rng, 5), 2);
    const double thr = oracle::uniform(rng, 0.1, 0.9);
    const auto kept = nms(dets, thr);
    CHECK(kept == oracle::nms(dets, thr));
    for (std::size_t i = 1; i < kept.size(); ++i) CHECK(kept[i - 1].score >= kept[i].score);
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j)
        if (kept[i].label == kept[j].label) CHECK(iou(kept[i].box, kept[j].box) <= thr);
  }
}

TEST_CASE("pairs and scores") {
  CHECK(enumerate_pairs(0).empty());
  CHECK(enumerate_pairs(1).empty());
  CHECK(enumerate_pairs(2).size() == 2);
  const auto four = enumerate_pairs(4);
  std::set<std::pair<std::size_t, std::size_t>> got(four.begin(), four.end()), expected;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j) expected.emplace(i, j);
  CHECK(four.size() == 12);
  CHECK(got == expected);

  CHECK(relation_score(1, 1, 1) == 3.0);
  CHECK(relation_score(0.9, 0.8, 0.7) == doctest::Approx(2.4));
}

TEST_CASE("object head") {
  ObjectHead head = make_object_head(4, 6);
  const Vector probs = object_head(head, Vector(6, 1.0));
  for (double p : probs) CHECK(p == doctest::Approx(0.25));
  CHECK_THROWS_AS(object_head(head, Vector(5, 1.0)), DimensionError);

  std::mt19937_64 rng(3);
  randomize(head, rng, 1.0);
  double total = 0.0;
  for (double p : object_head(head, oracle::gaussian(rng, 6))) total += p;
  CHECK(total == doctest::Approx(1.0));

  for (int t = 0; t < 25; ++t) CHECK(gradcheck::object_head_error(rng) < 1e-4);
}

TEST_CASE("object head gradient reaches the box") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 25; ++t) {
    const FeatureMap map = oracle::random_map(rng, 6, 6, 2, 2.0);
    ObjectHead head = make_object_head(3, 8);
    randomize(head, rng, 1.0);
    const Vector up = oracle::gaussian(rng, 3);
    BoundingBox box;
    SampleGrid grid;
    do {
      box = {oracle::uniform(rng, 0, 5), oracle::uniform(rng, 0, 5), oracle::uniform(rng, 2, 6), oracle::uniform(rng, 2, 6)};
      grid = grid_positions(box, {2, 2}, 2.0);
    } while (!gradcheck::clear_of_lattice(grid, 0.02));
    auto f = [&](std::span<const double> b) {
      const BoundingBox bb{b[0], b[1], b[2], b[3]};
      return dot(up, object_head(head, visual_feature(map, bb, {2, 2})));
    };
    const Vector visual = visual_feature(map, box, {2, 2});
    ObjectHeadGradients g = zero_gradients(head);
    const Vector dvisual = object_head_backward(head, visual, object_head(head, visual), up, 1.0, g);
    const auto analytic = bilinear_backward(map, grid, dvisual).box;
    const auto arr = box.as_array();
    CHECK(relative_error(analytic, finite_diff_grad(f, arr)) < 1e-4);
  }
}

TEST_CASE("detect relations") {
  std::mt19937_64 rng(5);
  const JointModel model = oracle::small_model(rng, 2, 3, 2);
  const FeatureMap map = oracle::random_map(rng, 5, 5, 2, 2.0);

  CHECK(detect_relations(map, std::vector<Detection>{}, model, 10).empty());

  SUBCASE("one pair with two predicates") {
    const JointModel two = oracle::small_model(rng, 2, 2, 2);
    const auto dets = oracle::model_detections(rng, 2, 2);
    const auto out = detect_relations(map, std::vector<Detection>{dets[0]}, two, 0);
    CHECK(out.empty());
    const auto pair = detect_relations(map, std::vector<Detection>{dets[0], dets[1]}, two, 2);
    REQUIRE(pair.size() == 2);
    CHECK(pair[0].score >= pair[1].score);
    CHECK(pair[0].subject_index == 0);
    CHECK(pair[0].object_index == 1);
  }
  SUBCASE("matches brute force and the predicate probabilities") {
    for (int t = 0; t < 50; ++t) {
      const auto dets = oracle::model_detections(rng, 3, 2);
      const std::size_t k = oracle::pick(rng, 20);
      const auto got = detect_relations(map, dets, model, k);
      const auto want = oracle::detect_relations(map, dets, model, k);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].subject_index == want[i].subject_index);
        CHECK(got[i].object_index == want[i].object_index);
        CHECK(got[i].predicate == want[i].predicate);
        CHECK(got[i].score == want[i].score);
        CHECK(got[i].predicate_score == want[i].predicate_score);
        if (i > 0) CHECK(prediction_before(got[i - 1], got[i]));
      }
      for (const auto& p : got) {
        const auto& s = dets[p.subject_index];
        const auto& o = dets[p.object_index];
        const Vector xs = fuse(s.classeme, location_feature(s.box, o.box), visual_feature(map, s.box, {2, 2}), model.scales);
        const Vector xo = fuse(o.classeme, location_feature(o.box, s.box), visual_feature(map, o.box, {2, 2}), model.scales);
        CHECK(p.predicate_score == softmax(predicate_logits(model.relation, xs, xo))[p.predicate]);
      }
    }
  }
  SUBCASE("ties resolve by subject, object, predicate") {
    JointModel flat = model;
    flat.relation.translations = Matrix(3, 3);
    Detection d = make_detection({1, 1, 2, 2}, {0.5, 0.25, 0.25});
    const std::vector<Detection> dets{d, d, d};
    const auto out = detect_relations(map, dets, flat, 0);
    REQUIRE(out.size() == 18);
    for (std::size_t i = 1; i < out.size(); ++i) {
      const auto& a = out[i - 1];
      const auto& b = out[i];
      CHECK(std::tie(a.subject_index, a.object_index, a.predicate) < std::tie(b.subject_index, b.object_index, b.predicate));
    }
  }
  SUBCASE("distance scoring feeds S_p") {
    const auto dets = oracle::model_detections(rng, 2, 2);
    const auto out = detect_relations(map, dets, model, 0, PredicateScoring::distance);
    const auto& p = out.front();
    const auto& s = dets[p.subject_index];
    const auto& o = dets[p.object_index];
    const Vector xs = fuse(s.classeme, location_feature(s.box, o.box), visual_feature(map, s.box, {2, 2}), model.scales);
    const Vector xo = fuse(o.classeme, location_feature(o.box, s.box), visual_feature(map, o.box, {2, 2}), model.scales);
    CHECK(p.predicate_score == predict_predicate(model.relation, xs, xo, PredicateScoring::distance).probability);
  }
  SUBCASE("inconsistent dimensions") {
    std::vector<Detection> dets = oracle::model_detections(rng, 2, 3);
    CHECK_THROWS_AS(detect_relations(map, dets, model, 0), ConfigError);
    const FeatureMap wrong = oracle::random_map(rng, 5, 5, 3, 2.0);
    CHECK_THROWS_AS(detect_relations(wrong, oracle::model_detections(rng, 2, 2), model, 0), ConfigError);
  }
}

TEST_CASE("proposal classification drops background") {
  std::mt19937_64 rng(6);
  JointModel model = oracle::small_model(rng, 2, 2, 2);
  model.head.weights = Matrix(3, 8);
  model.head.bias = {0.0, 0.0, 5.0};
  const FeatureMap map = oracle::random_map(rng, 5, 5, 2, 1.0);
  const std::vector<BoundingBox> boxes{{0, 0, 2, 2}, {1, 1, 2, 2}};
  CHECK(classify_proposals(map, boxes, model).empty());

  model.head.bias = {5.0, 0.0, 0.0};
  const auto dets = detect_objects(map, boxes, model, {0.3, 1});
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].label == 0);
  CHECK(dets[0].score == dets[0].classeme[0]);
}
