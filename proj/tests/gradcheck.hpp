#pragma once

// Random-instance gradient checks: each returns the relative error between
// the analytic gradient and central differences over every input it touches.

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vtranse/features.hpp"
#include "vtranse/object_head.hpp"
#include "vtranse/relspace.hpp"

namespace gradcheck {

using namespace vtranse;
using oracle::gaussian;
using oracle::pick;
using oracle::uniform;

inline constexpr double kStep = 1e-3;

struct Packer {
  Vector flat;
  void add(std::span<const double> v) { flat.insert(flat.end(), v.begin(), v.end()); }
};

struct Unpacker {
  std::span<const double> flat;
  std::size_t at = 0;
  void take(std::span<double> v) {
    std::copy(flat.begin() + at, flat.begin() + at + v.size(), v.begin());
    at += v.size();
  }
};

inline RelationModel random_relation_model(std::mt19937_64& rng, std::size_t m, std::size_t r, std::size_t R) {
  RelationModel model = make_relation_model(m, r, R);
  randomize(model, rng, 0.5);
  return model;
}

inline double softmax_loss_error(std::mt19937_64& rng) {
  const std::size_t m = 3 + pick(rng, 4), r = 2 + pick(rng, 3), R = 2 + pick(rng, 3), n = 1 + pick(rng, 3);
  RelationModel model = random_relation_model(rng, m, r, R);
  std::vector<RelationInstance> batch;
  for (std::size_t k = 0; k < n; ++k) batch.push_back({gaussian(rng, m), gaussian(rng, m), pick(rng, R)});

  Packer theta;
  theta.add(model.subject_projection.values());
  theta.add(model.object_projection.values());
  theta.add(model.translations.values());
  for (const auto& b : batch) theta.add(b.subject), theta.add(b.object);

  auto f = [&](std::span<const double> t) {
    RelationModel mm = model;
    auto bb = batch;
    Unpacker u{t};
    u.take(mm.subject_projection.values());
    u.take(mm.object_projection.values());
    u.take(mm.translations.values());
    for (auto& b : bb) u.take(b.subject), u.take(b.object);
    return softmax_loss(mm, bb).value;
  };
  const auto loss = softmax_loss(model, batch);
  Packer analytic;
  analytic.add(loss.grads.subject_projection.values());
  analytic.add(loss.grads.object_projection.values());
  analytic.add(loss.grads.translations.values());
  for (std::size_t k = 0; k < n; ++k) analytic.add(loss.grads.subject_features[k]), analytic.add(loss.grads.object_features[k]);
  return relative_error(analytic.flat, finite_diff_grad(f, theta.flat, kStep));
}

// Hinge kinks break finite differences, so instances with any hinge argument
// within `clearance` of zero are redrawn.
inline double margin_loss_error(std::mt19937_64& rng, double clearance = 0.05) {
  const std::size_t m = 3 + pick(rng, 4), r = 2 + pick(rng, 3), R = 2 + pick(rng, 3);
  for (;;) {
    RelationModel model = random_relation_model(rng, m, r, R);
    std::vector<MarginSample> batch;
    const std::size_t n = 1 + pick(rng, 3);
    for (std::size_t k = 0; k < n; ++k) {
      MarginSample s{{gaussian(rng, m, 0.5), gaussian(rng, m, 0.5), pick(rng, R)}, {}};
      const std::size_t negs = 1 + pick(rng, 2);
      for (std::size_t q = 0; q < negs; ++q)
        s.negatives.push_back({gaussian(rng, m, 0.5), gaussian(rng, m, 0.5), pick(rng, R)});
      batch.push_back(std::move(s));
    }
    bool clear = true;
    for (const auto& s : batch) {
      const Vector pr = translation_residual(model, s.positive.subject, s.positive.predicate, s.positive.object);
      for (const auto& neg : s.negatives) {
        const Vector nr = translation_residual(model, neg.subject, neg.predicate, neg.object);
        clear = clear && std::abs(dot(pr, pr) + 1.0 - dot(nr, nr)) > clearance;
      }
    }
    if (!clear) continue;

    auto pack_features = [&](Packer& p, const std::vector<MarginSample>& b) {
      for (const auto& s : b) {
        p.add(s.positive.subject), p.add(s.positive.object);
        for (const auto& neg : s.negatives) p.add(neg.subject), p.add(neg.object);
      }
    };
    Packer theta;
    theta.add(model.subject_projection.values());
    theta.add(model.object_projection.values());
    theta.add(model.translations.values());
    pack_features(theta, batch);

    auto f = [&](std::span<const double> t) {
      RelationModel mm = model;
      auto bb = batch;
      Unpacker u{t};
      u.take(mm.subject_projection.values());
      u.take(mm.object_projection.values());
      u.take(mm.translations.values());
      for (auto& s : bb) {
        u.take(s.positive.subject), u.take(s.positive.object);
        for (auto& neg : s.negatives) u.take(neg.subject), u.take(neg.object);
      }
      return margin_loss(mm, bb).value;
    };
    const auto loss = margin_loss(model, batch);
    Packer analytic;
    analytic.add(loss.grads.subject_projection.values());
    analytic.add(loss.grads.object_projection.values());
    analytic.add(loss.grads.translations.values());
    for (std::size_t k = 0; k < loss.grads.subject_features.size(); ++k)
      analytic.add(loss.grads.subject_features[k]), analytic.add(loss.grads.object_features[k]);
    return relative_error(analytic.flat, finite_diff_grad(f, theta.flat, kStep));
  }
}

// Arbitrary upstream gradient on the probabilities, plus the cross-entropy
// path, over weights, bias and the visual input.
inline double object_head_error(std::mt19937_64& rng) {
  const std::size_t classes = 2 + pick(rng, 4), d = 2 + pick(rng, 6);
  ObjectHead head = make_object_head(classes, d);
  for (auto& w : head.weights.values()) w = uniform(rng, -1.0, 1.0);
  head.bias = gaussian(rng, classes, 0.5);
  const Vector visual = gaussian(rng, d);
  const Vector upstream = gaussian(rng, classes);
  const std::size_t target = pick(rng, classes);

  Packer theta;
  theta.add(head.weights.values());
  theta.add(head.bias);
  theta.add(visual);
  auto unpack = [&](std::span<const double> t, ObjectHead& h, Vector& v) {
    Unpacker u{t};
    u.take(h.weights.values());
    u.take(h.bias);
    u.take(v);
  };
  auto f = [&](std::span<const double> t) {
    ObjectHead h = head;
    Vector v = visual;
    unpack(t, h, v);
    ObjectHeadGradients scratch = zero_gradients(h);
    return dot(upstream, object_head(h, v)) + 0.5 * object_cross_entropy(h, v, target, 1.0, scratch);
  };

  ObjectHeadGradients grads = zero_gradients(head);
  Vector dvisual = object_head_backward(head, visual, object_head(head, visual), upstream, 1.0, grads);
  Vector dce;
  object_cross_entropy(head, visual, target, 0.5, grads, &dce);
  axpy(1.0, dce, dvisual);
  Packer analytic;
  analytic.add(grads.weights.values());
  analytic.add(grads.bias);
  analytic.add(dvisual);
  return relative_error(analytic.flat, finite_diff_grad(f, theta.flat, kStep));
}

inline double fuse_error(std::mt19937_64& rng) {
  const std::size_t n = 2 + pick(rng, 4), d = 1 + pick(rng, 8);
  const Vector classeme = oracle::random_classeme(rng, n), location = gaussian(rng, 4), visual = gaussian(rng, d);
  const FeatureScales scales{uniform(rng, 0.2, 2.0), uniform(rng, 0.2, 2.0), uniform(rng, 0.2, 2.0)};
  const Vector upstream = gaussian(rng, n + 4 + d);

  Packer theta;
  theta.add(classeme), theta.add(location), theta.add(visual), theta.add(scales);
  auto f = [&](std::span<const double> t) {
    Vector c(n), l(4), v(d);
    FeatureScales s{};
    Unpacker u{t};
    u.take(c), u.take(l), u.take(v), u.take(s);
    return dot(upstream, fuse(c, l, v, s));
  };
  const auto g = fuse_backward(classeme, location, visual, scales, upstream);
  Packer analytic;
  analytic.add(g.classeme), analytic.add(g.location), analytic.add(g.visual), analytic.add(g.scales);
  return relative_error(analytic.flat, finite_diff_grad(f, theta.flat, kStep));
}

inline bool clear_of_lattice(const SampleGrid& grid, double clearance) {
  for (const auto& p : grid.positions)
    for (double c : p)
      if (std::abs(c - std::round(c)) < clearance) return false;
  return true;
}

// Gradient with respect to the map values and the four box coordinates; grid
// positions are kept at least `clearance` + step away from integer cells.
inline double bilinear_error(std::mt19937_64& rng, double clearance = 1e-2) {
  const std::size_t w = 3 + pick(rng, 4), h = 3 + pick(rng, 4), c = 1 + pick(rng, 3);
  const double stride = std::vector<double>{1.0, 2.0, 4.0}[pick(rng, 3)];
  const GridSize size{1 + pick(rng, 3), 1 + pick(rng, 3)};
  const FeatureMap map = oracle::random_map(rng, w, h, c, stride);
  BoundingBox box;
  SampleGrid grid;
  do {
    box = {uniform(rng, -0.5, 0.6 * w) * stride, uniform(rng, -0.5, 0.6 * h) * stride, uniform(rng, 0.5, 0.6 * w) * stride,
           uniform(rng, 0.5, 0.6 * h) * stride};
    grid = grid_positions(box, size, stride);
  } while (!clear_of_lattice(grid, clearance + 2.0 * kStep));
  const Vector upstream = gaussian(rng, size.x * size.y * c);

  Packer theta;
  theta.add(map.values());
  theta.add(box.as_array());
  auto f = [&](std::span<const double> t) {
    FeatureMap m = map;
    std::array<double, 4> b{};
    Unpacker u{t};
    u.take(m.values());
    u.take(b);
    return dot(upstream, bilinear_sample(m, grid_positions(BoundingBox::from_array(b), size, stride)));
  };
  const auto g = bilinear_backward(map, grid, upstream);
  Packer analytic;
  analytic.add(g.map);
  analytic.add(g.box);
  return relative_error(analytic.flat, finite_diff_grad(f, theta.flat, kStep));
}

}  // namespace gradcheck
