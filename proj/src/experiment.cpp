#include "convemo/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <utility>

#include "convemo/errors.hpp"
#include "convemo/hash.hpp"

namespace convemo::experiment {

namespace {

using nlohmann::json;

// ---- strict config parsing ----
// Every section walks its keys through one of these readers; keys nobody
// consumed are reported with their full dotted path.

void read_value(const json& j, bool& out, const std::string& path) {
  if (!j.is_boolean()) throw ValidationError(path + ": expected a boolean");
  out = j.get<bool>();
}

void read_value(const json& j, int& out, const std::string& path) {
  if (!j.is_number_integer())
    throw ValidationError(path + ": expected an integer");
  out = j.get<int>();
}

void read_value(const json& j, std::uint64_t& out, const std::string& path) {
  if (!(j.is_number_unsigned() ||
        (j.is_number_integer() && j.get<std::int64_t>() >= 0)))
    throw ValidationError(path + ": expected a non-negative integer");
  out = j.get<std::uint64_t>();
}

void read_value(const json& j, double& out, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path + ": expected a number");
  out = j.get<double>();
}

void read_value(const json& j, std::string& out, const std::string& path) {
  if (!j.is_string()) throw ValidationError(path + ": expected a string");
  out = j.get<std::string>();
}

void read_value(const json& j, std::vector<double>& out,
                const std::string& path) {
  if (!j.is_array()) throw ValidationError(path + ": expected an array");
  out.clear();
  for (const json& e : j) {
    if (!e.is_number())
      throw ValidationError(path + ": expected an array of numbers");
    out.push_back(e.get<double>());
  }
}

void read_value(const json& j, std::vector<std::string>& out,
                const std::string& path) {
  if (!j.is_array()) throw ValidationError(path + ": expected an array");
  out.clear();
  for (const json& e : j) {
    if (!e.is_string())
      throw ValidationError(path + ": expected an array of strings");
    out.push_back(e.get<std::string>());
  }
}

class Section {
 public:
  Section(const json& j, std::string path)
      : j_(&j), path_(std::move(path)) {
    if (!j_->is_object())
      throw ValidationError(path_ + ": expected an object");
  }

  template <typename T>
  void opt(const char* key, T& target) {
    if (auto it = j_->find(key); it != j_->end()) {
      read_value(*it, target, path_ + "." + key);
      used_.insert(key);
    }
  }

  // Returns the subsection object if present (marking it consumed).
  const json* sub(const char* key) {
    auto it = j_->find(key);
    if (it == j_->end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  // Call after reading everything: leftover keys are schema violations.
  void finish() const {
    for (const auto& item : j_->items())
      if (!used_.count(item.key()))
        throw ValidationError("unknown config key: " + path_ + "." +
                              item.key());
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> used_;
};

std::string mode_of(const ExperimentConfig& cfg) {
  return training::train_mode_name(cfg.train.mode);
}

json seeds_to_json(const training::Seeds& s) {
  return json{
      {"init", s.init}, {"data_order", s.data_order}, {"masking", s.masking}};
}

json provenance_to_json(const training::Provenance& p) {
  return json{{"mode", p.mode},
              {"params_hash", p.params_hash},
              {"config_hash", p.config_hash},
              {"teacher_params_hash", p.teacher_params_hash},
              {"seeds", seeds_to_json(p.seeds)},
              {"epochs_run", p.epochs_run},
              {"best_epoch", p.best_epoch},
              {"best_val_f1", p.best_val_f1}};
}

json trace_to_json(const std::vector<training::EpochTrace>& trace) {
  json out = json::array();
  for (const auto& e : trace)
    out.push_back(json{{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"val_weighted_f1", e.val_weighted_f1}});
  return out;
}

void check_dims(const ExperimentConfig& cfg, const PreparedSplits& splits) {
  for (const auto* split : {&splits.train, &splits.val, &splits.test}) {
    if (split->empty())
      throw ValidationError("experiment: a data split is empty");
    const training::PreparedConv& pc = split->front();
    if (pc.audio.cols() != cfg.model.audio_dim)
      throw ValidationError(
          "experiment: dataset audio dim " + std::to_string(pc.audio.cols()) +
          " does not match model.audio_dim " +
          std::to_string(cfg.model.audio_dim));
    if (pc.video.cols() != cfg.model.video_dim)
      throw ValidationError(
          "experiment: dataset video dim " + std::to_string(pc.video.cols()) +
          " does not match model.video_dim " +
          std::to_string(cfg.model.video_dim));
  }
}

// Availability flags for "evaluate this model with its own modalities".
std::pair<bool, bool> own_modalities(const network::ModelConfig& m) {
  return {m.has_audio(), m.has_video()};
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

ExperimentConfig shifted_seeds(ExperimentConfig cfg, int repeat) {
  cfg.seeds.init += 1000ULL * static_cast<std::uint64_t>(repeat);
  cfg.seeds.data_order += 1000ULL * static_cast<std::uint64_t>(repeat);
  cfg.seeds.masking += 1000ULL * static_cast<std::uint64_t>(repeat);
  return cfg;
}

}  // namespace

// ---- data config ----

void DataConfig::validate() const {
  synth.validate();
  if (val_conversations < 1)
    throw ValidationError("data.val_conversations must be >= 1");
  if (test_conversations < 1)
    throw ValidationError("data.test_conversations must be >= 1");
}

corpus::SynthConfig split_recipe(const DataConfig& data, corpus::Split split) {
  corpus::SynthConfig recipe = data.synth;
  switch (split) {
    case corpus::Split::Train:
      break;
    case corpus::Split::Val:
      recipe.n_conversations = data.val_conversations;
      recipe.seed += 1;
      break;
    case corpus::Split::Test:
      recipe.n_conversations = data.test_conversations;
      recipe.seed += 2;
      break;
    case corpus::Split::None:
      throw ValidationError("split_recipe: split must be train/val/test");
  }
  return recipe;
}

corpus::Dataset make_split(const DataConfig& data, corpus::Split split) {
  corpus::Dataset ds = corpus::generate_synthetic(split_recipe(data, split));
  ds.split = split;
  return ds;
}

// ---- experiment config ----

void ExperimentConfig::validate() const {
  data.validate();
  model.validate();
  graph.validate();
  train.validate(model);
  distill.validate();
  if (model.num_classes != data.synth.num_classes)
    throw ValidationError(
        "model.num_classes does not match data.num_classes");
  if (model.num_speakers != data.synth.num_speakers)
    throw ValidationError(
        "model.num_speakers does not match data.num_speakers");
  if (data.synth.max_len > model.max_conv_len)
    throw ValidationError(
        "data.max_len exceeds model.max_conv_len");
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig cfg;
  Section root(doc, "config");
  root.opt("output_dir", cfg.output_dir);

  if (const json* j = root.sub("seeds")) {
    Section s(*j, "config.seeds");
    s.opt("init", cfg.seeds.init);
    s.opt("data_order", cfg.seeds.data_order);
    s.opt("masking", cfg.seeds.masking);
    s.finish();
  }
  if (const json* j = root.sub("data")) {
    Section s(*j, "config.data");
    s.opt("n_conversations", cfg.data.synth.n_conversations);
    s.opt("min_len", cfg.data.synth.min_len);
    s.opt("max_len", cfg.data.synth.max_len);
    s.opt("num_speakers", cfg.data.synth.num_speakers);
    s.opt("num_classes", cfg.data.synth.num_classes);
    s.opt("audio_frac", cfg.data.synth.audio_frac);
    s.opt("video_frac", cfg.data.synth.video_frac);
    s.opt("noise_scale", cfg.data.synth.noise_scale);
    s.opt("feature_bias", cfg.data.synth.feature_bias);
    s.opt("video_redundancy", cfg.data.synth.video_redundancy);
    s.opt("emotion_persistence", cfg.data.synth.emotion_persistence);
    s.opt("seed", cfg.data.synth.seed);
    s.opt("structure_seed", cfg.data.synth.structure_seed);
    s.opt("val_conversations", cfg.data.val_conversations);
    s.opt("test_conversations", cfg.data.test_conversations);
    s.finish();
  }
  if (const json* j = root.sub("model")) {
    Section s(*j, "config.model");
    s.opt("modalities", cfg.model.modalities);
    s.opt("audio_dim", cfg.model.audio_dim);
    s.opt("video_dim", cfg.model.video_dim);
    s.opt("hidden_dim", cfg.model.hidden_dim);
    s.opt("seq_context_layers", cfg.model.seq_context_layers);
    s.opt("gnn_layers", cfg.model.gnn_layers);
    s.opt("attention_heads", cfg.model.attention_heads);
    s.opt("num_classes", cfg.model.num_classes);
    s.opt("num_speakers", cfg.model.num_speakers);
    s.opt("max_conv_len", cfg.model.max_conv_len);
    s.opt("dropout", cfg.model.dropout);
    s.finish();
  }
  if (const json* j = root.sub("graph")) {
    Section s(*j, "config.graph");
    s.opt("past_window", cfg.graph.past_window);
    s.opt("future_window", cfg.graph.future_window);
    s.opt("disjoint", cfg.graph.disjoint);
    s.finish();
  }
  if (const json* j = root.sub("mask")) {
    Section s(*j, "config.mask");
    s.opt("p_none", cfg.train.scenario_probs.p_none);
    s.opt("p_full_audio", cfg.train.scenario_probs.p_full_audio);
    s.opt("p_full_video", cfg.train.scenario_probs.p_full_video);
    s.opt("p_random", cfg.train.scenario_probs.p_random);
    s.opt("per_sample_start_prob",
          cfg.train.random_mask.per_sample_start_prob);
    s.opt("len_audio", cfg.train.random_mask.len_audio);
    s.opt("len_video", cfg.train.random_mask.len_video);
    s.finish();
  }
  if (const json* j = root.sub("train")) {
    Section s(*j, "config.train");
    std::string mode = training::train_mode_name(cfg.train.mode);
    s.opt("mode", mode);
    cfg.train.mode = training::train_mode_from_name(mode);
    s.opt("epochs", cfg.train.epochs);
    s.opt("patience", cfg.train.patience);
    s.opt("lr", cfg.train.optimizer.lr);
    s.opt("beta1", cfg.train.optimizer.beta1);
    s.opt("beta2", cfg.train.optimizer.beta2);
    s.opt("eps", cfg.train.optimizer.eps);
    s.finish();
  }
  if (const json* j = root.sub("distill")) {
    Section s(*j, "config.distill");
    s.opt("margin", cfg.distill.margin);
    s.opt("p", cfg.distill.p);
    s.opt("alpha1", cfg.distill.alpha1);
    s.opt("alpha2", cfg.distill.alpha2);
    std::string policy = losses::negative_policy_name(cfg.distill.negative_policy);
    s.opt("negative_policy", policy);
    cfg.distill.negative_policy = losses::negative_policy_from_name(policy);
    s.finish();
  }
  root.finish();

  // Seeds own every random stream; mirror init into the model config so a
  // standalone init_params call agrees with training.
  cfg.model.seed = cfg.seeds.init;
  cfg.train.seeds = cfg.seeds;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed JSON: " + e.what());
  }
  return parse_config(doc);
}

json config_to_json(const ExperimentConfig& cfg) {
  json doc;
  // output_dir is deliberately left out: where artifacts land must not
  // change the experiment's identity, and this dump feeds the config hash.
  doc["seeds"] = seeds_to_json(cfg.seeds);
  doc["data"] = json{{"n_conversations", cfg.data.synth.n_conversations},
                     {"min_len", cfg.data.synth.min_len},
                     {"max_len", cfg.data.synth.max_len},
                     {"num_speakers", cfg.data.synth.num_speakers},
                     {"num_classes", cfg.data.synth.num_classes},
                     {"audio_frac", cfg.data.synth.audio_frac},
                     {"video_frac", cfg.data.synth.video_frac},
                     {"noise_scale", cfg.data.synth.noise_scale},
                     {"feature_bias", cfg.data.synth.feature_bias},
                     {"video_redundancy", cfg.data.synth.video_redundancy},
                     {"emotion_persistence", cfg.data.synth.emotion_persistence},
                     {"seed", cfg.data.synth.seed},
                     {"structure_seed", cfg.data.synth.structure_seed},
                     {"val_conversations", cfg.data.val_conversations},
                     {"test_conversations", cfg.data.test_conversations}};
  doc["model"] = json{{"modalities", cfg.model.modalities},
                      {"audio_dim", cfg.model.audio_dim},
                      {"video_dim", cfg.model.video_dim},
                      {"hidden_dim", cfg.model.hidden_dim},
                      {"seq_context_layers", cfg.model.seq_context_layers},
                      {"gnn_layers", cfg.model.gnn_layers},
                      {"attention_heads", cfg.model.attention_heads},
                      {"num_classes", cfg.model.num_classes},
                      {"num_speakers", cfg.model.num_speakers},
                      {"max_conv_len", cfg.model.max_conv_len},
                      {"dropout", cfg.model.dropout}};
  doc["graph"] = json{{"past_window", cfg.graph.past_window},
                      {"future_window", cfg.graph.future_window},
                      {"disjoint", cfg.graph.disjoint}};
  doc["mask"] = json{
      {"p_none", cfg.train.scenario_probs.p_none},
      {"p_full_audio", cfg.train.scenario_probs.p_full_audio},
      {"p_full_video", cfg.train.scenario_probs.p_full_video},
      {"p_random", cfg.train.scenario_probs.p_random},
      {"per_sample_start_prob", cfg.train.random_mask.per_sample_start_prob},
      {"len_audio", cfg.train.random_mask.len_audio},
      {"len_video", cfg.train.random_mask.len_video}};
  doc["train"] = json{{"mode", mode_of(cfg)},
                      {"epochs", cfg.train.epochs},
                      {"patience", cfg.train.patience},
                      {"lr", cfg.train.optimizer.lr},
                      {"beta1", cfg.train.optimizer.beta1},
                      {"beta2", cfg.train.optimizer.beta2},
                      {"eps", cfg.train.optimizer.eps}};
  doc["distill"] =
      json{{"margin", cfg.distill.margin},
           {"p", cfg.distill.p},
           {"alpha1", cfg.distill.alpha1},
           {"alpha2", cfg.distill.alpha2},
           {"negative_policy",
            losses::negative_policy_name(cfg.distill.negative_policy)}};
  return doc;
}

std::string config_hash(const ExperimentConfig& cfg) {
  return fnv1a_hex(config_to_json(cfg).dump());
}

// ---- prepared data ----

PreparedSplits prepare_splits(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedSplits out;
  out.train = training::prepare_conversations(
      make_split(cfg.data, corpus::Split::Train), cfg.graph);
  out.val = training::prepare_conversations(
      make_split(cfg.data, corpus::Split::Val), cfg.graph);
  out.test = training::prepare_conversations(
      make_split(cfg.data, corpus::Split::Test), cfg.graph);
  return out;
}

PreparedSplits load_splits(const ExperimentConfig& cfg,
                           const std::filesystem::path& dir) {
  auto load_one = [&](const char* name) {
    const corpus::Dataset ds = corpus::read_dataset(dir / name);
    const auto violations = corpus::validate(ds);
    if (!violations.empty()) {
      const corpus::Violation& v = violations.front();
      throw ValidationError(std::string(name) + ": invalid dataset: " +
                            v.conv_id + " utterance " +
                            std::to_string(v.utterance_index) + " " + v.field +
                            ": " + v.message);
    }
    return training::prepare_conversations(ds, cfg.graph);
  };
  PreparedSplits out;
  out.train = load_one("train.jsonl");
  out.val = load_one("val.jsonl");
  out.test = load_one("test.jsonl");
  return out;
}

// ---- runners ----

json eval_to_json(const training::EvalResult& result) {
  json per_class = json::array();
  for (size_t c = 0; c < result.per_class.size(); ++c) {
    const metrics::ClassScores& s = result.per_class[c];
    per_class.push_back(json{{"label", c},
                             {"precision", s.precision},
                             {"recall", s.recall},
                             {"f1", s.f1},
                             {"support", s.support}});
  }
  json confusion = json::array();
  for (const auto& row : result.confusion.counts) confusion.push_back(row);
  return json{{"weighted_f1", result.weighted_f1},
              {"accuracy", result.accuracy},
              {"per_class", std::move(per_class)},
              {"confusion", std::move(confusion)}};
}

TrainOutcome run_train(const ExperimentConfig& cfg,
                       const PreparedSplits& splits) {
  cfg.validate();
  check_dims(cfg, splits);
  TrainOutcome out;
  // cfg.seeds is authoritative even if cfg was mutated after parsing, so
  // copy it into the training section rather than trusting the mirror.
  training::TrainConfig train_cfg = cfg.train;
  train_cfg.seeds = cfg.seeds;
  out.model = training::train(cfg.model, cfg.graph, train_cfg, splits.train,
                              splits.val);
  out.model.provenance.config_hash = config_hash(cfg);

  json report;
  report["command"] = "train";
  report["config_hash"] = out.model.provenance.config_hash;
  report["seeds"] = seeds_to_json(cfg.seeds);
  report["mode"] = mode_of(cfg);
  report["provenance"] = provenance_to_json(out.model.provenance);
  report["trace"] = trace_to_json(out.model.trace);
  const bool multimodal = cfg.model.has_audio() && cfg.model.has_video();
  report["inference"]["av"] =
      multimodal ? eval_to_json(training::evaluate(out.model, splits.test,
                                                   true, true))
                 : json(nullptr);
  report["inference"]["audio"] = eval_to_json(
      training::evaluate(out.model, splits.test, true, false));
  out.report = std::move(report);
  return out;
}

TrainOutcome run_distill(const ExperimentConfig& cfg,
                         const training::TrainedModel& teacher,
                         const PreparedSplits& splits) {
  cfg.validate();
  check_dims(cfg, splits);
  // The student may only rely on a subset of what the teacher saw.
  std::set<std::string> teacher_mods(teacher.model.modalities.begin(),
                                     teacher.model.modalities.end());
  for (const std::string& m : cfg.model.modalities)
    if (!teacher_mods.count(m))
      throw ValidationError(
          "distill: student modality \"" + m +
          "\" is not among the teacher's modalities");

  TrainOutcome out;
  training::TrainConfig train_cfg = cfg.train;
  train_cfg.seeds = cfg.seeds;
  out.model = training::distill(cfg.model, cfg.graph, train_cfg, cfg.distill,
                                teacher, splits.train, splits.val);
  out.model.provenance.config_hash = config_hash(cfg);

  auto teacher_copy = teacher;  // evaluate() needs its own binding anyway
  const auto [t_audio, t_video] = own_modalities(teacher.model);
  const auto teacher_eval =
      training::evaluate(teacher_copy, splits.test, t_audio, t_video);
  const auto [s_audio, s_video] = own_modalities(cfg.model);
  const auto student_eval =
      training::evaluate(out.model, splits.test, s_audio, s_video);

  auto depth_label = [](const network::ModelConfig& m) {
    std::string mods;
    for (const std::string& mod : m.modalities)
      mods += mods.empty() ? mod : "+" + mod;
    return mods + " [SeqContext:" + std::to_string(m.seq_context_layers) +
           ", GNN:" + std::to_string(m.gnn_layers) + "]";
  };

  json report;
  report["command"] = "distill";
  report["config_hash"] = out.model.provenance.config_hash;
  report["seeds"] = seeds_to_json(cfg.seeds);
  report["no_distillation_signal"] = (cfg.distill.alpha1 == 0.0);
  report["teacher"] = json{{"label", "teacher " + depth_label(teacher.model)},
                           {"params_hash", teacher.provenance.params_hash},
                           {"evaluation", eval_to_json(teacher_eval)}};
  report["student"] = json{{"label", "student " + depth_label(cfg.model)},
                           {"provenance",
                            provenance_to_json(out.model.provenance)},
                           {"trace", trace_to_json(out.model.trace)},
                           {"evaluation", eval_to_json(student_eval)}};
  out.report = std::move(report);
  return out;
}

// ---- ablation grids ----

namespace {

json run_train_cell(const ExperimentConfig& cell,
                    const PreparedSplits& splits, const std::string& label) {
  json run;
  run["label"] = label;
  run["config_hash"] = config_hash(cell);
  try {
    TrainOutcome outcome = run_train(cell, splits);
    const json& inference = outcome.report.at("inference");
    run["f1_av"] = inference.at("av").is_null()
                       ? json(nullptr)
                       : json(inference.at("av").at("weighted_f1"));
    run["f1_audio"] = inference.at("audio").at("weighted_f1");
    run["report"] = std::move(outcome.report);
  } catch (const std::exception& e) {
    run["error"] = e.what();
  }
  return run;
}

// Rows of the masking table: audio-only baseline, AV baseline, masked AV.
// `disjoint` additionally appends the audio-only masked row (the
// {none, random} scenario mix is the only one a single modality admits).
std::vector<std::pair<std::string, ExperimentConfig>> masking_cells(
    const ExperimentConfig& base, bool with_audio_masked) {
  std::vector<std::pair<std::string, ExperimentConfig>> cells;
  ExperimentConfig audio = base;
  audio.model.modalities = {"audio"};
  audio.train.mode = training::TrainMode::Baseline;
  cells.emplace_back("audio-baseline", audio);

  ExperimentConfig av = base;
  av.model.modalities = {"audio", "video"};
  av.train.mode = training::TrainMode::Baseline;
  cells.emplace_back("av-baseline", av);

  ExperimentConfig masked = base;
  masked.model.modalities = {"audio", "video"};
  masked.train.mode = training::TrainMode::Masked;
  cells.emplace_back("masked", masked);

  if (with_audio_masked) {
    ExperimentConfig audio_masked = base;
    audio_masked.model.modalities = {"audio"};
    audio_masked.train.mode = training::TrainMode::MaskedUni;
    cells.emplace_back("audio-masked", audio_masked);
  }
  return cells;
}

json ablate_masking(const ExperimentConfig& base, int repeats,
                    bool disjoint) {
  ExperimentConfig grid_base = base;
  grid_base.graph.disjoint = disjoint;
  const PreparedSplits splits = prepare_splits(grid_base);

  const auto cells = masking_cells(grid_base, /*with_audio_masked=*/disjoint);
  json rows = json::array();
  for (const auto& [label, cell] : cells) {
    json runs = json::array();
    std::vector<double> f1_av, f1_audio;
    for (int r = 0; r < repeats; ++r) {
      const ExperimentConfig seeded = shifted_seeds(cell, r);
      json run = run_train_cell(seeded, splits, label);
      if (!run.contains("error")) {
        if (!run.at("f1_av").is_null())
          f1_av.push_back(run.at("f1_av").get<double>());
        f1_audio.push_back(run.at("f1_audio").get<double>());
      }
      runs.push_back(std::move(run));
    }
    rows.push_back(json{{"label", label},
                        {"runs", std::move(runs)},
                        {"mean_f1_av", f1_av.empty() ? json(nullptr)
                                                     : json(mean_of(f1_av))},
                        {"mean_f1_audio", f1_audio.empty()
                                              ? json(nullptr)
                                              : json(mean_of(f1_audio))}});
  }
  return rows;
}

json ablate_depth(const ExperimentConfig& base, int repeats) {
  const PreparedSplits splits = prepare_splits(base);

  // One AV teacher per repeat, shared by all three student pairs. A failed
  // teacher poisons only its own repeat's cells.
  std::vector<std::optional<TrainOutcome>> teachers;
  std::vector<std::string> teacher_errors(static_cast<size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    ExperimentConfig teacher_cfg = shifted_seeds(base, r);
    teacher_cfg.model.modalities = {"audio", "video"};
    teacher_cfg.train.mode = training::TrainMode::Baseline;
    try {
      teachers.emplace_back(run_train(teacher_cfg, splits));
    } catch (const std::exception& e) {
      teachers.emplace_back(std::nullopt);
      teacher_errors[static_cast<size_t>(r)] =
          std::string("teacher: ") + e.what();
    }
  }

  // Student depth variants relative to the configured model: the configured
  // pair, a shallower context stack, and a shallower graph stack.
  const int sc = base.model.seq_context_layers;
  const int gnn = base.model.gnn_layers;
  const std::vector<std::pair<int, int>> student_depths = {
      {sc, gnn}, {2, gnn}, {sc, 3}};

  json rows = json::array();
  for (const auto& [s_sc, s_gnn] : student_depths) {
    const std::string label = "SeqContext:" + std::to_string(s_sc) +
                              ", GNN:" + std::to_string(s_gnn);
    json runs = json::array();
    std::vector<double> teacher_f1, student_f1;
    for (int r = 0; r < repeats; ++r) {
      json run;
      run["label"] = label;
      try {
        if (!teachers[static_cast<size_t>(r)])
          throw ValidationError(teacher_errors[static_cast<size_t>(r)]);
        const TrainOutcome& teacher = *teachers[static_cast<size_t>(r)];

        ExperimentConfig student_cfg = shifted_seeds(base, r);
        student_cfg.model.modalities = {"audio"};
        student_cfg.model.seq_context_layers = s_sc;
        student_cfg.model.gnn_layers = s_gnn;
        student_cfg.train.mode = training::TrainMode::Baseline;
        run["config_hash"] = config_hash(student_cfg);

        TrainOutcome student = run_distill(student_cfg, teacher.model, splits);
        const double t_f1 = teacher.report.at("inference").at("av")
                                .at("weighted_f1").get<double>();
        const double s_f1 = student.report.at("student").at("evaluation")
                                .at("weighted_f1").get<double>();
        run["teacher_f1"] = t_f1;
        run["student_f1"] = s_f1;
        run["report"] = std::move(student.report);
        teacher_f1.push_back(t_f1);
        student_f1.push_back(s_f1);
      } catch (const std::exception& e) {
        run["error"] = e.what();
      }
      runs.push_back(std::move(run));
    }
    rows.push_back(
        json{{"label", label},
             {"runs", std::move(runs)},
             {"mean_teacher_f1", teacher_f1.empty()
                                     ? json(nullptr)
                                     : json(mean_of(teacher_f1))},
             {"mean_student_f1", student_f1.empty()
                                     ? json(nullptr)
                                     : json(mean_of(student_f1))}});
  }
  return rows;
}

}  // namespace

json run_ablation(const ExperimentConfig& cfg, const std::string& grid,
                  int repeats) {
  cfg.validate();
  if (repeats < 1) throw ValidationError("ablate: repeats must be >= 1");
  json report;
  report["command"] = "ablate";
  report["grid"] = grid;
  report["config_hash"] = config_hash(cfg);
  report["seeds"] = seeds_to_json(cfg.seeds);
  report["repeats"] = repeats;
  // Record the graph contract the grid actually ran on: the masking and
  // disjoint grids pin `disjoint` themselves regardless of the config.
  graph::GraphConfig effective = cfg.graph;
  if (grid == "masking") effective.disjoint = false;
  if (grid == "disjoint") effective.disjoint = true;
  report["graph"] = json{{"past_window", effective.past_window},
                         {"future_window", effective.future_window},
                         {"disjoint", effective.disjoint}};
  if (grid == "depth") {
    report["rows"] = ablate_depth(cfg, repeats);
  } else if (grid == "masking") {
    report["rows"] = ablate_masking(cfg, repeats, /*disjoint=*/false);
  } else if (grid == "disjoint") {
    report["rows"] = ablate_masking(cfg, repeats, /*disjoint=*/true);
  } else if (grid.empty()) {
    throw ValidationError("ablate: grid name must not be empty");
  } else {
    throw ValidationError("ablate: unknown grid \"" + grid +
                          "\" (expected depth, masking, or disjoint)");
  }
  return report;
}

// ---- report output ----

std::string render_confusion_csv(const metrics::Confusion& confusion) {
  std::ostringstream out;
  out << "true\\pred";
  for (int c = 0; c < confusion.num_classes; ++c) out << "," << c;
  out << "\n";
  for (int r = 0; r < confusion.num_classes; ++r) {
    out << r;
    for (int c = 0; c < confusion.num_classes; ++c)
      out << "," << confusion.counts[static_cast<size_t>(r)][static_cast<size_t>(c)];
    out << "\n";
  }
  return out.str();
}

void write_report(json report, const std::filesystem::path& path) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  report["timestamp"] = buf;

  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << report.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

std::string fmt_f1(const json& v) {
  if (v.is_null()) return "-";
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.4f", v.get<double>());
  return buf;
}

}  // namespace

std::string render_report_text(const json& report) {
  std::ostringstream out;
  const std::string command = report.value("command", "");
  if (command == "train") {
    out << "mode: " << report.at("mode").get<std::string>() << "\n";
    out << "model                | F1 (AV inference) | F1 (audio inference)\n";
    const json& inf = report.at("inference");
    out << "trained model        | " << fmt_f1(inf.at("av").is_null()
                                                   ? json(nullptr)
                                                   : inf.at("av").at("weighted_f1"))
        << "            | "
        << fmt_f1(inf.at("audio").at("weighted_f1")) << "\n";
  } else if (command == "distill") {
    out << "model | F1 (own-modality inference)\n";
    out << report.at("teacher").at("label").get<std::string>() << " | "
        << fmt_f1(report.at("teacher").at("evaluation").at("weighted_f1"))
        << "\n";
    out << report.at("student").at("label").get<std::string>() << " | "
        << fmt_f1(report.at("student").at("evaluation").at("weighted_f1"))
        << "\n";
    if (report.value("no_distillation_signal", false))
      out << "note: alpha1 = 0 — no distillation signal\n";
  } else if (command == "ablate") {
    const std::string grid = report.at("grid").get<std::string>();
    out << "grid: " << grid << "\n";
    if (grid == "depth") {
      out << "pair | teacher F1 | student F1\n";
      for (const json& row : report.at("rows"))
        out << row.at("label").get<std::string>() << " | "
            << fmt_f1(row.at("mean_teacher_f1")) << " | "
            << fmt_f1(row.at("mean_student_f1")) << "\n";
    } else {
      out << "model | F1 (AV inference) | F1 (audio inference)\n";
      for (const json& row : report.at("rows"))
        out << row.at("label").get<std::string>() << " | "
            << fmt_f1(row.at("mean_f1_av")) << " | "
            << fmt_f1(row.at("mean_f1_audio")) << "\n";
    }
    for (const json& row : report.at("rows"))
      for (const json& run : row.at("runs"))
        if (run.contains("error"))
          out << "error in " << row.at("label").get<std::string>() << ": "
              << run.at("error").get<std::string>() << "\n";
  } else if (command == "evaluate") {
    out << "weighted F1: " << fmt_f1(report.at("evaluation").at("weighted_f1"))
        << "\naccuracy:    " << fmt_f1(report.at("evaluation").at("accuracy"))
        << "\n";
  } else {
    out << report.dump(2) << "\n";
  }
  return out.str();
}

}  // namespace convemo::experiment
