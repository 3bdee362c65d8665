#include "vtranse/data.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "vtranse/error.hpp"

namespace vtranse {

namespace {

bool contains(const std::vector<std::size_t>& set, std::size_t v) {
  return set.empty() || std::find(set.begin(), set.end(), v) != set.end();
}

bool rule_matches(const PredicateRule& rule, std::size_t subject_class, std::size_t object_class,
                  const std::array<double, 4>& t) {
  if (rule.max_ty && !(t[1] < *rule.max_ty)) return false;
  if (rule.min_ty && !(t[1] > *rule.min_ty)) return false;
  if (rule.max_tx && !(t[0] < *rule.max_tx)) return false;
  if (rule.min_tx && !(t[0] > *rule.min_tx)) return false;
  if (rule.min_th && !(t[3] > *rule.min_th)) return false;
  return contains(rule.subject_classes, subject_class) && contains(rule.object_classes, object_class);
}

PredicateRule named_rule(std::string name, PredicateType type) {
  PredicateRule r;
  r.name = std::move(name);
  r.type = type;
  return r;
}

double overlap_iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih / (a.area() + b.area() - iw * ih);
}

}  // namespace

std::optional<std::size_t> RuleSet::classify(std::size_t subject_class, const BoundingBox& subject,
                                             std::size_t object_class, const BoundingBox& object) const {
  const auto t = location_feature(subject, object);
  for (std::size_t k = 0; k < rules.size(); ++k)
    if (rule_matches(rules[k], subject_class, object_class, t)) return k;
  return std::nullopt;
}

bool RuleSet::near_boundary(const BoundingBox& subject, const BoundingBox& object) const {
  const auto t = location_feature(subject, object);
  auto close = [&](const std::optional<double>& threshold, double value) {
    return threshold && std::abs(value - *threshold) < boundary_margin;
  };
  for (const auto& r : rules)
    if (close(r.max_ty, t[1]) || close(r.min_ty, t[1]) || close(r.max_tx, t[0]) || close(r.min_tx, t[0]) ||
        close(r.min_th, t[3]))
      return true;
  return false;
}

RuleSet default_rules(std::size_t classes, std::size_t predicates) {
  if (classes < 2 || predicates < 2) throw ConfigError("synthetic data needs N >= 2 and R >= 2");
  std::vector<std::size_t> agents, things;
  for (std::size_t c = 0; c < classes; ++c) (c < classes / 2 ? agents : things).push_back(c);

  std::vector<PredicateRule> pool;
  {
    PredicateRule r = named_rule("above", PredicateType::kSpatial);
    r.max_ty = -0.3;
    pool.push_back(r);
  }
  {
    PredicateRule r = named_rule("below", PredicateType::kSpatial);
    r.min_ty = 0.3;
    pool.push_back(r);
  }
  {
    PredicateRule r = named_rule("taller than", PredicateType::kComparative);
    r.min_th = 0.3;
    pool.push_back(r);
  }
  {
    PredicateRule r = named_rule("hold", PredicateType::kVerb);
    r.subject_classes = agents;
    r.object_classes = things;
    pool.push_back(r);
  }
  {
    PredicateRule r = named_rule("left of", PredicateType::kSpatial);
    r.max_tx = -1.0;
    pool.push_back(r);
  }
  {
    PredicateRule r = named_rule("right of", PredicateType::kSpatial);
    r.min_tx = 1.0;
    pool.push_back(r);
  }
  if (predicates > pool.size() + 1)
    throw ConfigError("the default rule set supports at most " + std::to_string(pool.size() + 1) + " predicates");
  RuleSet set;
  set.rules.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(predicates - 1));
  set.rules.push_back(named_rule("with", PredicateType::kPreposition));
  return set;
}

SynthDataset synth_generate(const SynthConfig& config) {
  return synth_generate(config, default_rules(config.classes, config.predicates));
}

SynthDataset synth_generate(const SynthConfig& config, const RuleSet& rules) {
  if (config.classes < 2 || config.predicates < 2) throw ConfigError("synthetic data needs N >= 2 and R >= 2");
  if (rules.rules.size() != config.predicates)
    throw GenerationError("rule set defines " + std::to_string(rules.rules.size()) + " predicates, expected " +
                          std::to_string(config.predicates));
  const std::size_t channels = config.channels == 0 ? config.classes : config.channels;
  if (channels < config.classes) throw ConfigError("synthetic maps need at least one channel per class");
  if (config.min_objects < 2 || config.max_objects < config.min_objects)
    throw ConfigError("synthetic images need 2 <= min_objects <= max_objects");
  if (!(config.stride > 0.0) || config.image_size < 4.0 * config.stride)
    throw ConfigError("image size must span at least four feature cells");

  SynthDataset out;
  out.rules = rules;
  auto& vocab = out.dataset.vocab;
  for (std::size_t c = 0; c < config.classes; ++c) vocab.objects.push_back("class" + std::to_string(c));
  for (const auto& r : rules.rules) {
    vocab.predicates.push_back(r.name);
    vocab.predicate_types.push_back(r.type);
  }
  validate(vocab);

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double size = config.image_size;
  const std::size_t cells = static_cast<std::size_t>(std::floor(size / config.stride));
  const double min_extent = 0.15 * size, max_extent = 0.45 * size;

  auto random_box = [&]() {
    const double w = min_extent + (max_extent - min_extent) * unit(rng);
    const double h = min_extent + (max_extent - min_extent) * unit(rng);
    return BoundingBox{(size - w) * unit(rng), (size - h) * unit(rng), w, h};
  };

  std::vector<std::size_t> predicate_counts(config.predicates, 0);
  for (std::size_t n = 0; n < config.images; ++n) {
    ImageRecord rec;
    std::ostringstream id;
    id << config.id_prefix << std::setw(5) << std::setfill('0') << n;
    rec.id = id.str();
    rec.width = size;
    rec.height = size;

    const std::size_t spread = config.max_objects - config.min_objects + 1;
    const std::size_t count =
        config.min_objects + std::min(spread - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(spread)));
    for (std::size_t attempt = 0; rec.objects.size() < count && attempt < 200; ++attempt) {
      const BoundingBox box = random_box();
      const bool clear = std::all_of(rec.objects.begin(), rec.objects.end(),
                                     [&](const ObjectAnnotation& o) { return overlap_iou(o.box, box) < 0.2; });
      if (!clear) continue;
      const auto label = static_cast<std::size_t>(unit(rng) * static_cast<double>(config.classes)) % config.classes;
      rec.objects.push_back({label, box});
    }

    // Paint class signatures as Gaussian bumps over the box.
    FeatureMap map(cells, cells, channels, config.stride);
    for (double& v : map.values()) v = config.noise * gauss(rng);
    for (const auto& o : rec.objects) {
      const double cx = (o.box.x + 0.5 * o.box.w) / config.stride, cy = (o.box.y + 0.5 * o.box.h) / config.stride;
      const double sx = 0.35 * o.box.w / config.stride, sy = 0.35 * o.box.h / config.stride;
      for (std::size_t i = 0; i < cells; ++i)
        for (std::size_t j = 0; j < cells; ++j) {
          const double di = (static_cast<double>(i) - cx) / sx, dj = (static_cast<double>(j) - cy) / sy;
          const double bump = std::exp(-0.5 * (di * di + dj * dj));
          map.at(i, j, o.label % channels) += bump;
          map.at(i, j, (o.label + 1) % channels) += 0.5 * bump;
        }
    }
    // Values are stored as f32 on disk; keep memory identical to the file.
    for (double& v : map.values()) v = static_cast<double>(static_cast<float>(v));

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t s = 0; s < rec.objects.size(); ++s)
      for (std::size_t o = 0; o < rec.objects.size(); ++o)
        if (s != o) pairs.emplace_back(s, o);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    // Label every eligible pair, then keep the ones whose predicate is rarest
    // so far so that the predicate distribution stays close to balanced.
    std::vector<RelationAnnotation> eligible;
    for (const auto& [s, o] : pairs) {
      const auto& sub = rec.objects[s];
      const auto& obj = rec.objects[o];
      if (rules.near_boundary(sub.box, obj.box)) continue;
      const auto predicate = rules.classify(sub.label, sub.box, obj.label, obj.box);
      if (!predicate)
        throw GenerationError("rule set assigns no predicate to a generated pair in image " + rec.id);
      eligible.push_back({s, *predicate, o});
    }
    while (rec.relations.size() < config.max_relations && !eligible.empty()) {
      const auto pick = std::min_element(eligible.begin(), eligible.end(), [&](const auto& a, const auto& b) {
        return predicate_counts[a.predicate] < predicate_counts[b.predicate];
      });
      ++predicate_counts[pick->predicate];
      rec.relations.push_back(*pick);
      eligible.erase(pick);
    }

    for (const auto& o : rec.objects)
      for (std::size_t k = 0; k < config.proposals_per_object; ++k) {
        const double jx = 0.2 * unit(rng) - 0.1, jy = 0.2 * unit(rng) - 0.1;
        const double sw = std::exp(0.2 * unit(rng) - 0.1), sh = std::exp(0.2 * unit(rng) - 0.1);
        const BoundingBox jittered{o.box.x + jx * o.box.w, o.box.y + jy * o.box.h, o.box.w * sw, o.box.h * sh};
        rec.detections.push_back({clamp_box(jittered, size, size), {}});
      }
    for (std::size_t k = 0, attempt = 0; k < config.background_proposals && attempt < 50; ++attempt) {
      const BoundingBox box = random_box();
      const bool empty = std::all_of(rec.objects.begin(), rec.objects.end(),
                                     [&](const ObjectAnnotation& o) { return overlap_iou(o.box, box) < 0.1; });
      if (!empty) continue;
      rec.detections.push_back({box, {}});
      ++k;
    }

    out.dataset.images.push_back(std::move(rec));
    out.maps.push_back(std::move(map));
  }
  return out;
}

void write_synth_split(const std::filesystem::path& directory, const std::string& split, SynthDataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(directory / "maps", ec);
  if (ec) throw IoError("cannot create " + (directory / "maps").string() + ": " + ec.message());
  for (std::size_t k = 0; k < data.dataset.images.size(); ++k) {
    auto& rec = data.dataset.images[k];
    rec.feature_map = "maps/" + rec.id + ".vtfm";
    save_feature_map(directory / rec.feature_map, data.maps[k]);
  }
  data.dataset.root = directory;
  save_annotations(directory / (split + ".jsonl"), data.dataset.images);
}

}  // namespace vtranse
