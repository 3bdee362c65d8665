#include "vtranse/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "vtranse/data.hpp"
#include "vtranse/detector.hpp"
#include "vtranse/error.hpp"
#include "vtranse/eval.hpp"
#include "vtranse/model.hpp"
#include "vtranse/training.hpp"

namespace vtranse::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::string out;
};

struct SynthOptions {
  std::size_t train_images = 500;
  std::size_t test_images = 200;
  std::size_t classes = 6;
  std::size_t predicates = 5;
  std::size_t channels = 0;
};

struct DataOptions {
  std::string data;
  std::string split = "test";
  std::string checkpoint;
};

struct TrainOptions {
  std::string data;
  std::string split = "train";
  std::string metrics;
  std::string loss = "softmax";
  TrainConfig config;
};

struct EvalOptions {
  std::vector<std::string> tasks{"predicate", "phrase", "relation"};
  std::vector<std::size_t> ks{50, 100};
  bool per_type = false;
  bool zero_shot = false;
  std::string train_split = "train";
  std::size_t neighbors = 0;
  double nms = 0.6;
  std::size_t max_detections = 32;
  std::string scoring = "logits";
};

DetectionConfig detection_config(const EvalOptions& eval) {
  return {eval.nms, eval.max_detections, parse_predicate_scoring(eval.scoring)};
}

struct DetectOptions {
  std::size_t top_k = 100;
};

struct RetrieveOptions {
  std::string queries;
  std::size_t top_k = 100;
  std::size_t default_queries = 20;
};

// ---- helpers --------------------------------------------------------------

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is required");
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " '" + path + "' does not exist");
}

void require_directory(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is required");
  if (!fs::is_directory(path)) throw ConfigError(std::string(what) + " '" + path + "' is not a directory");
}

void require_output(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is required (--out)");
  const fs::path parent = fs::absolute(path).parent_path();
  if (!fs::is_directory(parent))
    throw ConfigError(std::string(what) + " directory '" + parent.string() + "' does not exist");
}

struct Split {
  Dataset dataset;
  std::vector<FeatureMap> maps;
};

fs::path split_file(const std::string& data, const std::string& split) { return fs::path(data) / (split + ".jsonl"); }

void validate_split_paths(const std::string& data, const std::string& split) {
  require_directory(data, "dataset");
  require_file((fs::path(data) / "vocab.json").string(), "vocabulary");
  require_file(split_file(data, split).string(), "annotations");
}

Split load_split(const std::string& data, const std::string& split) {
  const Vocabulary vocab = load_vocabulary(fs::path(data) / "vocab.json");
  Split s{load_annotations(split_file(data, split), vocab), {}};
  for (const auto& rec : s.dataset.images) s.maps.push_back(load_feature_map(s.dataset, rec));
  return s;
}

void check_compatible(const JointModel& model, const Split& split) {
  const auto& vocab = split.dataset.vocab;
  if (model.dims.classes != vocab.class_count() || model.dims.predicates != vocab.predicate_count())
    throw ConfigError("checkpoint vocabulary (N=" + std::to_string(model.dims.classes) +
                      ", R=" + std::to_string(model.dims.predicates) + ") does not match the dataset (N=" +
                      std::to_string(vocab.class_count()) + ", R=" + std::to_string(vocab.predicate_count()) + ")");
  for (const auto& m : split.maps)
    if (m.channels() != model.dims.channels)
      throw ConfigError("feature maps carry " + std::to_string(m.channels()) + " channels, checkpoint expects " +
                        std::to_string(model.dims.channels));
}

// Runs fn(i) for i in [0, n) on `jobs` threads; each index is written by one thread.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < jobs; ++t)
    threads.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += jobs) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<ImagePredictions> detect_split(const JointModel& model, const Split& split, const DetectionConfig& config,
                                           std::size_t top_k, std::size_t jobs) {
  std::vector<ImagePredictions> out(split.dataset.images.size());
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    out[i] = detect_image(model, split.dataset.images[i], split.maps[i], config, top_k);
  });
  return out;
}

std::string format_value(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << *v;
  return s.str();
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("write failed for " + path);
}

nlohmann::ordered_json box_json(const BoundingBox& b) { return nlohmann::ordered_json::array({b.x, b.y, b.w, b.h}); }

// ---- subcommands ----------------------------------------------------------

int cmd_synth(const CommonOptions& common, const SynthOptions& opts, std::ostream& out) {
  if (common.out.empty()) throw ConfigError("synth needs an output directory (--out)");
  const fs::path dir(common.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  SynthConfig config;
  config.classes = opts.classes;
  config.predicates = opts.predicates;
  config.channels = opts.channels;

  config.seed = common.seed;
  config.images = opts.train_images;
  config.id_prefix = "train";
  SynthDataset train = synth_generate(config);
  config.seed = common.seed ^ 0x9e3779b97f4a7c15ull;
  config.images = opts.test_images;
  config.id_prefix = "test";
  SynthDataset test = synth_generate(config);

  save_vocabulary(dir / "vocab.json", train.dataset.vocab);
  write_synth_split(dir, "train", train);
  write_synth_split(dir, "test", test);
  out << "wrote " << train.dataset.images.size() << " train and " << test.dataset.images.size()
      << " test images to " << dir.string() << "\n";
  return kSuccess;
}

int cmd_train(const CommonOptions& common, TrainOptions opts, std::ostream& out) {
  opts.config.seed = common.seed;
  opts.config.loss_kind = parse_loss_kind(opts.loss);
  validate(opts.config);
  validate_split_paths(opts.data, opts.split);
  require_output(common.out, "checkpoint");
  const std::string metrics = opts.metrics.empty() ? common.out + ".metrics.jsonl" : opts.metrics;
  require_output(metrics, "metrics log");

  const Split split = load_split(opts.data, opts.split);
  if (split.dataset.images.empty()) throw ConfigError("training split is empty");
  const std::size_t channels = split.maps.front().channels();
  JointModel model =
      initial_model(split.dataset.vocab.class_count(), split.dataset.vocab.predicate_count(), channels, opts.config);
  const TrainResult result = train(std::move(model), split.dataset.images, split.maps, opts.config);

  std::vector<std::string> lines;
  for (const auto& m : result.log) {
    lines.push_back(to_json_line(m));
    out << "epoch " << m.epoch << "  l_obj " << format_value(m.object_loss) << "  l_rel "
        << format_value(m.relation_loss) << "  val_acc " << format_value(m.validation_accuracy) << "\n";
  }
  save_checkpoint(common.out, result.model);
  write_lines(metrics, lines);
  out << "checkpoint written to " << common.out << "\n";
  return kSuccess;
}

int cmd_eval(const CommonOptions& common, const DataOptions& data, const EvalOptions& opts, std::ostream& out) {
  validate_split_paths(data.data, data.split);
  require_file(data.checkpoint, "checkpoint");
  if (opts.zero_shot) require_file(split_file(data.data, opts.train_split).string(), "training annotations");
  if (!common.out.empty()) require_output(common.out, "report");
  if (opts.ks.empty()) throw ConfigError("at least one K is required");
  for (std::size_t k : opts.ks)
    if (k == 0) throw ConfigError("K must be positive");
  std::vector<MatchMode> modes;
  for (const auto& t : opts.tasks) modes.push_back(parse_match_mode(t));

  const JointModel model = load_checkpoint(data.checkpoint);
  const Split split = load_split(data.data, data.split);
  check_compatible(model, split);

  std::vector<GroundTruthRelation> gt = ground_truth(split.dataset.images);
  if (opts.zero_shot) {
    const Dataset train_set = load_annotations(split_file(data.data, opts.train_split), split.dataset.vocab);
    gt = zero_shot_filter(ground_truth(train_set.images), gt);
  }

  const std::size_t max_k = *std::max_element(opts.ks.begin(), opts.ks.end());
  const DetectionConfig det = detection_config(opts);
  const std::string subset_prefix = opts.zero_shot ? "zero_shot" : "all";
  std::vector<MetricRow> rows;

  for (MatchMode mode : modes) {
    std::vector<ImagePredictions> preds;
    const std::string task = to_string(mode);
    if (mode == MatchMode::kPredicate) {
      preds.resize(split.dataset.images.size());
      parallel_for(preds.size(), common.jobs, [&](std::size_t i) {
        preds[i] = predicate_task_predictions(model, split.dataset.images[i], split.maps[i], det.scoring);
      });
      const auto acc = predicate_accuracy(model, split.dataset.images, split.maps, det.scoring);
      rows.push_back({task, "accuracy", std::nullopt, "all", acc.value(), acc.correct, acc.total});
    } else {
      preds = detect_split(model, split, det, max_k, common.jobs);
    }
    for (std::size_t k : opts.ks) {
      const RecallResult r = recall_at_k(preds, gt, k, mode);
      rows.push_back({task, "recall", k, subset_prefix, r.value(), r.hits, r.total});
      if (opts.per_type) {
        const auto types = per_type_breakdown(r, gt, split.dataset.vocab.predicate_types);
        for (std::size_t t = 0; t < kPredicateTypeCount; ++t)
          rows.push_back({task, "recall", k, subset_prefix + ":" + to_string(static_cast<PredicateType>(t)),
                          types[t].value(), types[t].hits, types[t].total});
      }
    }
  }

  std::vector<std::string> lines;
  for (const auto& row : rows) {
    lines.push_back(to_json_line(row));
    out << std::left << std::setw(10) << row.task << std::setw(9) << row.metric << std::setw(6)
        << (row.k ? "@" + std::to_string(*row.k) : std::string("-")) << std::setw(24) << row.subset
        << format_value(row.value) << "  (" << row.hits << "/" << row.total << ")\n";
  }
  if (opts.neighbors > 0) {
    const auto& vocab = split.dataset.vocab;
    for (std::size_t p = 0; p < vocab.predicate_count(); ++p) {
      nlohmann::ordered_json j;
      j["task"] = "predicate_neighbors";
      j["predicate"] = vocab.predicates[p];
      auto list = nlohmann::ordered_json::array();
      out << "neighbors of '" << vocab.predicates[p] << "':";
      for (const auto& n : predicate_neighbors(model.relation, p, opts.neighbors)) {
        list.push_back({{"predicate", vocab.predicates[n.predicate]}, {"similarity", n.similarity}});
        out << " " << vocab.predicates[n.predicate] << " (" << format_value(n.similarity) << ")";
      }
      out << "\n";
      j["neighbors"] = list;
      lines.push_back(j.dump());
    }
  }
  if (!common.out.empty()) write_lines(common.out, lines);
  return kSuccess;
}

int cmd_detect(const CommonOptions& common, const DataOptions& data, const EvalOptions& eval,
               const DetectOptions& opts, std::ostream& out) {
  validate_split_paths(data.data, data.split);
  require_file(data.checkpoint, "checkpoint");
  if (!common.out.empty()) require_output(common.out, "predictions");
  const JointModel model = load_checkpoint(data.checkpoint);
  const Split split = load_split(data.data, data.split);
  check_compatible(model, split);

  const auto preds = detect_split(model, split, detection_config(eval), opts.top_k, common.jobs);
  const auto& vocab = split.dataset.vocab;
  std::vector<std::string> lines;
  for (const auto& image : preds)
    for (const auto& p : image.predictions) {
      nlohmann::ordered_json j;
      j["image"] = image.image_id;
      j["subject"] = {{"class", vocab.objects[p.subject.label]}, {"box", box_json(p.subject.box)}};
      j["predicate"] = vocab.predicates[p.predicate];
      j["object"] = {{"class", vocab.objects[p.object.label]}, {"box", box_json(p.object.box)}};
      j["score"] = p.score;
      lines.push_back(j.dump());
    }
  if (common.out.empty()) {
    for (const auto& l : lines) out << l << "\n";
  } else {
    write_lines(common.out, lines);
    out << "wrote " << lines.size() << " predictions to " << common.out << "\n";
  }
  return kSuccess;
}

std::vector<Triplet> read_queries(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Triplet> queries;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream ss(body);
    std::string part;
    while (std::getline(ss, part, '|')) parts.push_back(trim(part));
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    if (parts.size() != 3) throw QueryError(where + "expected 'subject | predicate | object'");
    const auto s = vocab.object_index(parts[0]);
    const auto p = vocab.predicate_index(parts[1]);
    const auto o = vocab.object_index(parts[2]);
    if (!s || !o) throw QueryError(where + "unknown object class");
    if (!p) throw QueryError(where + "unknown predicate '" + parts[1] + "'");
    queries.push_back({*s, *p, *o});
  }
  return queries;
}

int cmd_retrieve(const CommonOptions& common, const DataOptions& data, const EvalOptions& eval,
                 const RetrieveOptions& opts, std::ostream& out) {
  validate_split_paths(data.data, data.split);
  require_file(data.checkpoint, "checkpoint");
  if (!opts.queries.empty()) require_file(opts.queries, "query file");
  if (!common.out.empty()) require_output(common.out, "ranking");
  const JointModel model = load_checkpoint(data.checkpoint);
  const Split split = load_split(data.data, data.split);
  check_compatible(model, split);
  const auto& vocab = split.dataset.vocab;

  const auto all_gt = ground_truth(split.dataset.images);
  const std::vector<Triplet> queries =
      opts.queries.empty() ? frequent_triplets(all_gt, opts.default_queries) : read_queries(opts.queries, vocab);

  const auto preds = detect_split(model, split, detection_config(eval), opts.top_k, common.jobs);
  std::vector<GalleryImage> gallery;
  for (std::size_t i = 0; i < preds.size(); ++i)
    gallery.push_back({preds[i].image_id, preds[i].predictions, ground_truth(split.dataset.images[i])});
  const RetrievalResult result = retrieval_eval(queries, gallery, vocab.class_count(), vocab.predicate_count());

  std::vector<std::string> lines;
  for (const auto& q : result.queries) {
    const std::string name = vocab.objects[q.query.subject] + " | " + vocab.predicates[q.query.predicate] + " | " +
                             vocab.objects[q.query.object];
    nlohmann::ordered_json j;
    j["query"] = name;
    j["first_hit_rank"] = q.first_hit_rank;
    auto ranking = nlohmann::ordered_json::array();
    for (const auto& r : q.ranking)
      ranking.push_back({{"image", r.image_id},
                         {"score", r.score ? nlohmann::ordered_json(*r.score) : nlohmann::ordered_json(nullptr)},
                         {"hit", r.hit}});
    j["ranking"] = ranking;
    lines.push_back(j.dump());
    out << name << "  first hit at rank " << q.first_hit_rank << "\n";
  }
  out << "Rr@5 " << format_value(result.recall_at_5) << "  Med r " << format_value(result.median_rank) << "\n";
  nlohmann::ordered_json summary;
  summary["task"] = "retrieval";
  summary["queries"] = result.queries.size();
  summary["rr_at_5"] = result.recall_at_5 ? nlohmann::ordered_json(*result.recall_at_5) : nlohmann::ordered_json("NA");
  summary["median_rank"] =
      result.median_rank ? nlohmann::ordered_json(*result.median_rank) : nlohmann::ordered_json("NA");
  lines.push_back(summary.dump());
  if (!common.out.empty()) write_lines(common.out, lines);
  return kSuccess;
}

int exit_code_for(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::kConfig: return kUsageError;
    case ErrorCategory::kData: return kDataError;
    case ErrorCategory::kNumeric: return kNumericError;
  }
  return kUsageError;
}

void add_common(CLI::App* cmd, CommonOptions& common) {
  cmd->add_option("--seed", common.seed, "Seed for every random choice");
  cmd->add_option("--jobs", common.jobs, "Worker threads for per-image work")->check(CLI::PositiveNumber);
  cmd->add_option("--out", common.out, "Output path");
}

void add_data(CLI::App* cmd, DataOptions& data) {
  cmd->add_option("--data", data.data, "Dataset directory (vocab.json, <split>.jsonl)")->required();
  cmd->add_option("--split", data.split, "Annotation split to read");
  cmd->add_option("--checkpoint", data.checkpoint, "Model checkpoint")->required();
}

void add_detection(CLI::App* cmd, EvalOptions& eval) {
  cmd->add_option("--nms", eval.nms, "Per-class NMS IoU threshold");
  cmd->add_option("--max-detections", eval.max_detections, "Detections kept per image after NMS");
  cmd->add_option("--scoring", eval.scoring, "Predicate scoring: logits | distance (use distance for margin-trained models)")
      ->check(CLI::IsMember({"logits", "distance"}));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual relation detection with translation embeddings"};
  app.set_config("--config", "", "TOML/INI configuration file; command-line flags take precedence");
  app.require_subcommand(1);

  CommonOptions common;
  SynthOptions synth;
  TrainOptions train_opts;
  DataOptions data;
  EvalOptions eval;
  DetectOptions detect;
  RetrieveOptions retrieve;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with known ground truth");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--train-images", synth.train_images);
  synth_cmd->add_option("--test-images", synth.test_images);
  synth_cmd->add_option("--classes", synth.classes);
  synth_cmd->add_option("--predicates", synth.predicates);
  synth_cmd->add_option("--channels", synth.channels, "Feature channels (0 = one per class)");

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(train_cmd, common);
  auto& tc = train_opts.config;
  train_cmd->add_option("--data", train_opts.data, "Dataset directory")->required();
  train_cmd->add_option("--split", train_opts.split);
  train_cmd->add_option("--metrics", train_opts.metrics, "Metrics log (default <out>.metrics.jsonl)");
  train_cmd->add_option("--epochs", tc.epochs);
  train_cmd->add_option("--lr", tc.learning_rate);
  train_cmd->add_option("--momentum", tc.momentum);
  train_cmd->add_option("--weight-decay", tc.weight_decay);
  train_cmd->add_option("--rel-weight", tc.rel_loss_weight);
  train_cmd->add_option("--loss", train_opts.loss, "softmax | margin");
  train_cmd->add_option("--embedding", tc.embedding);
  train_cmd->add_option("--grid-x", tc.grid.x);
  train_cmd->add_option("--grid-y", tc.grid.y);
  train_cmd->add_option("--init-std", tc.init_stddev);
  train_cmd->add_option("--negatives", tc.negatives_per_positive);
  train_cmd->add_option("--background", tc.background_per_image);
  train_cmd->add_option("--validation", tc.validation_fraction);

  auto* eval_cmd = app.add_subcommand("eval", "Predicate, phrase and relation detection recall");
  add_common(eval_cmd, common);
  add_data(eval_cmd, data);
  add_detection(eval_cmd, eval);
  eval_cmd->add_option("--tasks", eval.tasks, "predicate, phrase, relation")->delimiter(',');
  eval_cmd->add_option("--k", eval.ks, "Recall cut-offs")->delimiter(',');
  eval_cmd->add_flag("--per-type", eval.per_type, "Break recall down by predicate type");
  eval_cmd->add_flag("--zero-shot", eval.zero_shot, "Keep only triplets unseen in training");
  eval_cmd->add_option("--train-split", eval.train_split, "Split whose triplets count as seen for --zero-shot");
  eval_cmd->add_option("--neighbors", eval.neighbors, "Report nearest predicates by translation vector");

  auto* detect_cmd = app.add_subcommand("detect", "Write ranked relation predictions");
  add_common(detect_cmd, common);
  add_data(detect_cmd, data);
  add_detection(detect_cmd, eval);
  detect_cmd->add_option("--top-k", detect.top_k);

  auto* retrieve_cmd = app.add_subcommand("retrieve", "Relation retrieval: Rr@5 and median rank");
  add_common(retrieve_cmd, common);
  add_data(retrieve_cmd, data);
  add_detection(retrieve_cmd, eval);
  retrieve_cmd->add_option("--queries", retrieve.queries, "Lines of 'subject | predicate | object'");
  retrieve_cmd->add_option("--top-k", retrieve.top_k);
  retrieve_cmd->add_option("--default-queries", retrieve.default_queries,
                           "Most frequent triplets used when no query file is given");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kSuccess;
    }
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(common, synth, out);
    if (train_cmd->parsed()) return cmd_train(common, train_opts, out);
    if (eval_cmd->parsed()) return cmd_eval(common, data, eval, out);
    if (detect_cmd->parsed()) return cmd_detect(common, data, eval, detect, out);
    if (retrieve_cmd->parsed()) return cmd_retrieve(common, data, eval, retrieve, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsageError;
}

}  // namespace vtranse::cli
