#include "vtranse/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "vtranse/error.hpp"

namespace vtranse {

using nlohmann::json;

namespace {

constexpr std::pair<PredicateType, const char*> kTypeNames[] = {
    {PredicateType::kVerb, "verb"},
    {PredicateType::kSpatial, "spatial"},
    {PredicateType::kPreposition, "preposition"},
    {PredicateType::kComparative, "comparative"},
};

}  // namespace

const char* to_string(PredicateType type) {
  for (const auto& [t, name] : kTypeNames)
    if (t == type) return name;
  return "unknown";
}

PredicateType parse_predicate_type(const std::string& name) {
  for (const auto& [t, n] : kTypeNames)
    if (name == n) return t;
  throw ConfigError("unknown predicate type '" + name + "'");
}

std::optional<std::size_t> Vocabulary::object_index(const std::string& name) const {
  const auto it = std::find(objects.begin(), objects.end(), name);
  if (it == objects.end()) return std::nullopt;
  return static_cast<std::size_t>(it - objects.begin());
}

std::optional<std::size_t> Vocabulary::predicate_index(const std::string& name) const {
  const auto it = std::find(predicates.begin(), predicates.end(), name);
  if (it == predicates.end()) return std::nullopt;
  return static_cast<std::size_t>(it - predicates.begin());
}

void validate(const Vocabulary& vocab) {
  std::set<std::string> seen(vocab.objects.begin(), vocab.objects.end());
  if (seen.size() != vocab.objects.size()) throw ConfigError("duplicate object class names");
  if (seen.count(vocab.background)) throw ConfigError("background name collides with an object class");
  std::set<std::string> preds(vocab.predicates.begin(), vocab.predicates.end());
  if (preds.size() != vocab.predicates.size()) throw ConfigError("duplicate predicate names");
  if (vocab.predicate_types.size() != vocab.predicates.size())
    throw ConfigError("every predicate needs exactly one type");
}

// ---- vocabulary -----------------------------------------------------------

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  Vocabulary vocab;
  try {
    vocab.objects = doc.at("objects").get<std::vector<std::string>>();
    if (doc.contains("background")) vocab.background = doc.at("background").get<std::string>();
    for (const auto& p : doc.at("predicates")) {
      vocab.predicates.push_back(p.at("name").get<std::string>());
      vocab.predicate_types.push_back(parse_predicate_type(p.at("type").get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  validate(vocab);
  return vocab;
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  validate(vocab);
  json preds = json::array();
  for (std::size_t p = 0; p < vocab.predicates.size(); ++p)
    preds.push_back({{"name", vocab.predicates[p]}, {"type", to_string(vocab.predicate_types[p])}});
  const json doc = {{"objects", vocab.objects}, {"background", vocab.background}, {"predicates", preds}};
  write_text_file(path, doc.dump(2) + "\n");
}

// ---- annotations ----------------------------------------------------------

namespace {

class LineContext {
 public:
  LineContext(const std::filesystem::path& path, std::size_t line) : path_(path.string()), line_(line) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw ParseError(path_ + ":" + std::to_string(line_) + ": field '" + field + "': " + what);
  }
  [[noreturn]] void integrity(const std::string& what) const {
    throw IntegrityError(path_ + ":" + std::to_string(line_) + ": " + what);
  }

  const json& member(const json& obj, const std::string& key, const std::string& field) const {
    if (!obj.is_object()) fail(field, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) fail(field + key, "missing");
    return *it;
  }

  double number(const json& v, const std::string& field) const {
    if (!v.is_number()) fail(field, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(field, "not finite");
    return d;
  }

  std::size_t index(const json& v, const std::string& field) const {
    if (!v.is_number_integer() || v.get<long long>() < 0) fail(field, "expected a nonnegative integer");
    return static_cast<std::size_t>(v.get<long long>());
  }

  BoundingBox box(const json& v, const std::string& field) const {
    if (!v.is_array() || v.size() != 4) fail(field, "expected [x, y, w, h]");
    return {number(v[0], field), number(v[1], field), number(v[2], field), number(v[3], field)};
  }

  Vector vector(const json& v, const std::string& field) const {
    if (!v.is_array()) fail(field, "expected an array of numbers");
    Vector out;
    for (std::size_t k = 0; k < v.size(); ++k) out.push_back(number(v[k], field));
    return out;
  }

 private:
  std::string path_;
  std::size_t line_;
};

BoundingBox clamp_into_image(const LineContext& ctx, const BoundingBox& box, double width, double height,
                             const std::string& field) {
  const BoundingBox clamped = clamp_box(box, width, height);
  if (!clamped.valid()) ctx.integrity(field + " lies outside the image or is degenerate");
  return clamped;
}

ImageRecord parse_record(const LineContext& ctx, const json& doc, const Vocabulary& vocab) {
  ImageRecord rec;
  const auto& id = ctx.member(doc, "id", "");
  if (!id.is_string() || id.get<std::string>().empty()) ctx.fail("id", "expected a nonempty string");
  rec.id = id.get<std::string>();
  rec.width = ctx.number(ctx.member(doc, "width", ""), "width");
  rec.height = ctx.number(ctx.member(doc, "height", ""), "height");
  if (rec.width <= 0.0 || rec.height <= 0.0) ctx.fail("width", "image extent must be positive");
  if (doc.contains("feature_map")) {
    if (!doc["feature_map"].is_string()) ctx.fail("feature_map", "expected a path string");
    rec.feature_map = doc["feature_map"].get<std::string>();
  }

  const auto& objects = ctx.member(doc, "objects", "");
  if (!objects.is_array()) ctx.fail("objects", "expected an array");
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const std::string f = "objects[" + std::to_string(k) + "].";
    ObjectAnnotation a;
    a.label = ctx.index(ctx.member(objects[k], "label", f), f + "label");
    a.box = clamp_into_image(ctx, ctx.box(ctx.member(objects[k], "box", f), f + "box"), rec.width, rec.height,
                             f + "box");
    if (a.label >= vocab.class_count()) ctx.integrity(f + "label " + std::to_string(a.label) + " out of range");
    rec.objects.push_back(a);
  }

  if (doc.contains("relations")) {
    const auto& relations = doc["relations"];
    if (!relations.is_array()) ctx.fail("relations", "expected an array");
    for (std::size_t k = 0; k < relations.size(); ++k) {
      const std::string f = "relations[" + std::to_string(k) + "].";
      RelationAnnotation r;
      r.subject = ctx.index(ctx.member(relations[k], "subject", f), f + "subject");
      r.predicate = ctx.index(ctx.member(relations[k], "predicate", f), f + "predicate");
      r.object = ctx.index(ctx.member(relations[k], "object", f), f + "object");
      rec.relations.push_back(r);
    }
  }

  if (doc.contains("detections")) {
    const auto& dets = doc["detections"];
    if (!dets.is_array()) ctx.fail("detections", "expected an array");
    for (std::size_t k = 0; k < dets.size(); ++k) {
      const std::string f = "detections[" + std::to_string(k) + "].";
      ExternalDetection d;
      d.box = clamp_into_image(ctx, ctx.box(ctx.member(dets[k], "box", f), f + "box"), rec.width, rec.height,
                               f + "box");
      if (dets[k].contains("classeme")) d.classeme = ctx.vector(dets[k]["classeme"], f + "classeme");
      rec.detections.push_back(std::move(d));
    }
  }
  try {
    validate(rec, vocab);
  } catch (const IntegrityError& e) {
    ctx.integrity(e.what());
  }
  return rec;
}

json record_to_json(const ImageRecord& rec) {
  auto box_json = [](const BoundingBox& b) { return json::array({b.x, b.y, b.w, b.h}); };
  json objects = json::array();
  for (const auto& o : rec.objects) objects.push_back({{"label", o.label}, {"box", box_json(o.box)}});
  json relations = json::array();
  for (const auto& r : rec.relations)
    relations.push_back({{"subject", r.subject}, {"predicate", r.predicate}, {"object", r.object}});
  json doc = {{"id", rec.id}, {"width", rec.width}, {"height", rec.height}};
  if (!rec.feature_map.empty()) doc["feature_map"] = rec.feature_map;
  doc["objects"] = objects;
  doc["relations"] = relations;
  if (!rec.detections.empty()) {
    json dets = json::array();
    for (const auto& d : rec.detections) {
      json item = {{"box", box_json(d.box)}};
      if (!d.classeme.empty()) item["classeme"] = d.classeme;
      dets.push_back(item);
    }
    doc["detections"] = dets;
  }
  return doc;
}

}  // namespace

void validate(const ImageRecord& rec, const Vocabulary& vocab) {
  for (std::size_t k = 0; k < rec.objects.size(); ++k) {
    if (rec.objects[k].label >= vocab.class_count())
      throw IntegrityError("image " + rec.id + ": object " + std::to_string(k) + " has an unknown label");
    require_valid(rec.objects[k].box, "object box");
  }
  for (std::size_t k = 0; k < rec.relations.size(); ++k) {
    const auto& r = rec.relations[k];
    if (r.subject >= rec.objects.size() || r.object >= rec.objects.size())
      throw IntegrityError("image " + rec.id + ": relation " + std::to_string(k) + " references a missing object");
    if (r.subject == r.object)
      throw IntegrityError("image " + rec.id + ": relation " + std::to_string(k) + " relates an object to itself");
    if (r.predicate >= vocab.predicate_count())
      throw IntegrityError("image " + rec.id + ": relation " + std::to_string(k) + " predicate " +
                           std::to_string(r.predicate) + " out of range");
  }
  for (const auto& d : rec.detections) {
    if (!d.classeme.empty() && d.classeme.size() != vocab.class_count() + 1)
      throw IntegrityError("image " + rec.id + ": detection classeme must have N + 1 entries");
  }
}

Dataset load_annotations(const std::filesystem::path& path, const Vocabulary& vocab) {
  validate(vocab);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Dataset ds{vocab, {}, path.parent_path()};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const LineContext ctx(path, line_no);
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      ctx.fail("", e.what());
    }
    ds.images.push_back(parse_record(ctx, doc, vocab));
  }
  std::stable_sort(ds.images.begin(), ds.images.end(),
                   [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
  for (std::size_t k = 1; k < ds.images.size(); ++k)
    if (ds.images[k].id == ds.images[k - 1].id)
      throw IntegrityError(path.string() + ": duplicate image id " + ds.images[k].id);
  return ds;
}

void save_annotations(const std::filesystem::path& path, const std::vector<ImageRecord>& images) {
  std::ostringstream out;
  for (const auto& rec : images) out << record_to_json(rec).dump() << '\n';
  write_text_file(path, out.str());
}

// ---- feature maps ---------------------------------------------------------

namespace {
constexpr char kFeatureMapMagic[] = "VTFM";
}

FeatureMap load_feature_map(const std::filesystem::path& path) {
  const auto data = detail::read_file(path.string());
  detail::ByteReader r(data, path.string());
  if (data.size() < 4 || r.bytes(4) != kFeatureMapMagic)
    throw FormatError(path.string() + ": not a feature map (bad magic)");
  const auto version = r.u32();
  if (version != kFeatureMapVersion)
    throw FormatError(path.string() + ": unsupported feature map version " + std::to_string(version));
  const std::size_t w = r.u32(), h = r.u32(), c = r.u32();
  const double stride = r.f64();
  if (w == 0 || h == 0 || c == 0) throw FormatError(path.string() + ": zero-sized feature map");
  if (!(stride > 0.0) || !std::isfinite(stride)) throw FormatError(path.string() + ": invalid stride");
  const std::size_t count = w * h * c;
  if (r.remaining() != count * 4)
    throw FormatError(path.string() + ": payload holds " + std::to_string(r.remaining()) + " bytes, header declares " +
                      std::to_string(count * 4) + " (truncated or oversized)");
  Vector values(count);
  for (double& v : values) {
    v = static_cast<double>(r.f32());
    if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite value in payload");
  }
  return FeatureMap(w, h, c, stride, std::move(values));
}

void save_feature_map(const std::filesystem::path& path, const FeatureMap& map) {
  detail::ByteWriter w;
  w.bytes(kFeatureMapMagic);
  w.u32(kFeatureMapVersion);
  w.u32(static_cast<std::uint32_t>(map.width()));
  w.u32(static_cast<std::uint32_t>(map.height()));
  w.u32(static_cast<std::uint32_t>(map.channels()));
  w.f64(map.stride());
  for (double v : map.values()) w.f32(static_cast<float>(v));
  detail::write_file(path.string(), w.buffer());
}

FeatureMap load_feature_map(const Dataset& dataset, const ImageRecord& record) {
  if (record.feature_map.empty()) throw IntegrityError("image " + record.id + " has no feature map");
  return load_feature_map(dataset.root / record.feature_map);
}

}  // namespace vtranse
