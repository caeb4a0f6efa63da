// Command-line experiment runner: generates corpora, trains/distills
// models, evaluates checkpoints, and runs the ablation grids, emitting
// deterministic JSON reports plus human-readable tables.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "convemo/checkpoint.hpp"
#include "convemo/corpus.hpp"
#include "convemo/errors.hpp"
#include "convemo/experiment.hpp"
#include "convemo/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace convemo;

namespace {

struct Options {
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::string teacher_path;
  std::string ckpt_path;
  std::string modalities = "audio,video";
  std::string grid;
  std::string report_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool force = false;
  int repeats = 1;
};

experiment::ExperimentConfig load_config(const Options& opt) {
  experiment::ExperimentConfig cfg =
      opt.config_path.empty()
          ? experiment::default_config()
          : experiment::load_config_file(opt.config_path);
  if (opt.seed_set) {
    cfg.seeds.init = opt.seed;
    cfg.seeds.data_order = opt.seed + 1;
    cfg.seeds.masking = opt.seed + 2;
    cfg.model.seed = cfg.seeds.init;
    cfg.train.seeds = cfg.seeds;
  }
  cfg.validate();
  return cfg;
}

// Output directory: --out flag beats the config's output_dir (which gets a
// per-command subdirectory so one config can drive the whole pipeline
// without commands clobbering each other) beats
// $CONVEMO_OUT_ROOT/<verb>-<confighash>.
fs::path resolve_out_dir(const Options& opt,
                         const experiment::ExperimentConfig& cfg,
                         const std::string& verb) {
  if (!opt.out_dir.empty()) return opt.out_dir;
  if (!cfg.output_dir.empty()) return fs::path(cfg.output_dir) / verb;
  const char* root = std::getenv("CONVEMO_OUT_ROOT");
  const fs::path base = (root != nullptr && *root != '\0') ? root : ".";
  return base / (verb + "-" + experiment::config_hash(cfg).substr(0, 8));
}

experiment::PreparedSplits get_splits(const Options& opt,
                                      const experiment::ExperimentConfig& cfg) {
  if (!opt.data_dir.empty()) return experiment::load_splits(cfg, opt.data_dir);
  return experiment::prepare_splits(cfg);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

metrics::Confusion confusion_from_json(const json& eval_block) {
  const json& rows = eval_block.at("confusion");
  metrics::Confusion confusion(static_cast<int>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c)
      confusion.counts[r][c] = rows[r][c].get<std::int64_t>();
  return confusion;
}

int cmd_generate(const Options& opt) {
  const auto cfg = load_config(opt);
  const fs::path out = resolve_out_dir(opt, cfg, "data");
  fs::create_directories(out);

  const std::map<std::string, corpus::Split> files = {
      {"train.jsonl", corpus::Split::Train},
      {"val.jsonl", corpus::Split::Val},
      {"test.jsonl", corpus::Split::Test}};
  if (!opt.force)
    for (const auto& [name, split] : files)
      if (fs::exists(out / name))
        throw IoError((out / name).string() +
                      " already exists; pass --force to overwrite");

  for (const auto& [name, split] : files) {
    const corpus::Dataset ds = experiment::make_split(cfg.data, split);
    corpus::write_dataset(ds, out / name);
    std::vector<std::int64_t> balance(
        static_cast<size_t>(ds.header.num_classes), 0);
    for (const auto& conv : ds.conversations)
      for (const auto& u : conv.utterances)
        ++balance[static_cast<size_t>(u.label)];
    std::cout << name << ": " << ds.conversations.size() << " conversations, "
              << ds.total_utterances() << " utterances, audio dim "
              << ds.header.audio_dim << ", video dim " << ds.header.video_dim
              << ", class balance [";
    for (size_t c = 0; c < balance.size(); ++c)
      std::cout << (c ? " " : "") << balance[c];
    std::cout << "]\n";
  }
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_train(const Options& opt) {
  const auto cfg = load_config(opt);
  const fs::path out = resolve_out_dir(opt, cfg, "train");
  fs::create_directories(out);
  const auto splits = get_splits(opt, cfg);

  experiment::TrainOutcome outcome = experiment::run_train(cfg, splits);
  checkpoint::save(outcome.model, out / "checkpoint.json");
  experiment::write_report(outcome.report, out / "metrics.json");

  const json& inference = outcome.report.at("inference");
  if (!inference.at("av").is_null())
    write_text(out / "confusion_av.csv",
               experiment::render_confusion_csv(
                   confusion_from_json(inference.at("av"))));
  write_text(out / "confusion_audio.csv",
             experiment::render_confusion_csv(
                 confusion_from_json(inference.at("audio"))));

  std::cout << experiment::render_report_text(outcome.report);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_distill(const Options& opt) {
  const auto cfg = load_config(opt);
  if (opt.teacher_path.empty())
    throw ValidationError("distill: --teacher CHECKPOINT is required");
  const training::TrainedModel teacher = checkpoint::load(opt.teacher_path);

  const fs::path out = resolve_out_dir(opt, cfg, "distill");
  fs::create_directories(out);
  const auto splits = get_splits(opt, cfg);

  experiment::TrainOutcome outcome =
      experiment::run_distill(cfg, teacher, splits);
  checkpoint::save(outcome.model, out / "student.json");
  experiment::write_report(outcome.report, out / "metrics.json");
  write_text(out / "confusion_teacher.csv",
             experiment::render_confusion_csv(confusion_from_json(
                 outcome.report.at("teacher").at("evaluation"))));
  write_text(out / "confusion_student.csv",
             experiment::render_confusion_csv(confusion_from_json(
                 outcome.report.at("student").at("evaluation"))));

  std::cout << experiment::render_report_text(outcome.report);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(const Options& opt) {
  if (opt.ckpt_path.empty())
    throw ValidationError("evaluate: --ckpt CHECKPOINT is required");
  const training::TrainedModel model = checkpoint::load(opt.ckpt_path);

  bool audio = false, video = false;
  std::stringstream mods(opt.modalities);
  std::string tok;
  while (std::getline(mods, tok, ',')) {
    if (tok == "audio") audio = true;
    else if (tok == "video") video = true;
    else if (!tok.empty())
      throw ValidationError("evaluate: unsupported modality \"" + tok + "\"");
  }
  if (!audio && !video)
    throw ValidationError("evaluate: --modalities must name audio or video");

  // Test data comes from --data when given, otherwise from the config's
  // corpus recipe; the conversation graphs always follow the checkpoint.
  auto cfg = load_config(opt);
  cfg.graph = model.graph;
  std::vector<training::PreparedConv> test;
  if (!opt.data_dir.empty()) {
    test = experiment::load_splits(cfg, opt.data_dir).test;
  } else {
    test = training::prepare_conversations(
        experiment::make_split(cfg.data, corpus::Split::Test), cfg.graph);
  }

  const training::EvalResult result =
      training::evaluate(model, test, audio, video);
  json report;
  report["command"] = "evaluate";
  report["config_hash"] = model.provenance.config_hash;
  report["params_hash"] = model.provenance.params_hash;
  report["seeds"] = json{{"init", model.provenance.seeds.init},
                         {"data_order", model.provenance.seeds.data_order},
                         {"masking", model.provenance.seeds.masking}};
  json mod_list = json::array();
  if (audio) mod_list.push_back("audio");
  if (video) mod_list.push_back("video");
  report["modalities"] = std::move(mod_list);
  report["evaluation"] = experiment::eval_to_json(result);

  if (!opt.out_dir.empty() || !cfg.output_dir.empty()) {
    const fs::path out = resolve_out_dir(opt, cfg, "evaluate");
    fs::create_directories(out);
    experiment::write_report(report, out / "metrics.json");
    write_text(out / "confusion.csv",
               experiment::render_confusion_csv(result.confusion));
    std::cout << "wrote " << out.string() << "\n";
  }
  std::cout << experiment::render_report_text(report);
  return 0;
}

int cmd_ablate(const Options& opt) {
  const auto cfg = load_config(opt);
  const fs::path out = resolve_out_dir(opt, cfg, "ablate-" + opt.grid);
  fs::create_directories(out);

  const json report = experiment::run_ablation(cfg, opt.grid, opt.repeats);
  experiment::write_report(report, out / "ablation.json");
  std::cout << experiment::render_report_text(report);
  std::cout << "wrote " << out.string() << "\n";

  // A grid whose every cell failed is a failed command.
  bool any_ok = false;
  for (const json& row : report.at("rows"))
    for (const json& run : row.at("runs"))
      if (!run.contains("error")) any_ok = true;
  if (!any_ok) throw NumericError("ablate: every grid cell failed");
  return 0;
}

int cmd_report(const Options& opt) {
  if (opt.report_path.empty())
    throw ValidationError("report: --in REPORT.json is required");
  std::ifstream in(opt.report_path);
  if (!in) throw IoError("cannot open " + opt.report_path);
  json report;
  try {
    in >> report;
  } catch (const json::exception& e) {
    throw IoError(opt.report_path + ": malformed report: " + e.what());
  }
  std::cout << experiment::render_report_text(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conversational emotion recognition experiment runner"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&opt](CLI::App* cmd) {
    cmd->add_option("--config", opt.config_path,
                    "experiment config JSON (defaults apply when omitted)");
    cmd->add_option("--out", opt.out_dir, "output directory");
    cmd->add_option("--seed", opt.seed,
                    "override seeds (init=N, data_order=N+1, masking=N+2)")
        ->each([&opt](const std::string&) { opt.seed_set = true; });
  };

  CLI::App* generate = app.add_subcommand(
      "generate", "write train/val/test synthetic corpus files");
  add_common(generate);
  generate->add_flag("--force", opt.force, "overwrite existing files");

  CLI::App* train = app.add_subcommand(
      "train", "train a model and report AV + audio-only inference");
  add_common(train);
  train->add_option("--data", opt.data_dir,
                    "read corpus files from this directory instead of "
                    "generating them");

  CLI::App* distill = app.add_subcommand(
      "distill", "distill a student from a frozen teacher checkpoint");
  add_common(distill);
  distill->add_option("--teacher", opt.teacher_path, "teacher checkpoint");
  distill->add_option("--data", opt.data_dir,
                      "read corpus files from this directory");

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "evaluate a checkpoint under an inference condition");
  add_common(evaluate);
  evaluate->add_option("--ckpt", opt.ckpt_path, "model checkpoint");
  evaluate->add_option("--data", opt.data_dir,
                       "read corpus files from this directory");
  evaluate->add_option("--modalities", opt.modalities,
                       "comma-separated modalities available at inference "
                       "(audio, video)");

  CLI::App* ablate =
      app.add_subcommand("ablate", "run a named experiment grid");
  add_common(ablate);
  ablate->add_option("--grid", opt.grid, "depth | masking | disjoint")
      ->required();
  ablate->add_option("--repeats", opt.repeats,
                     "seeded repeats per grid cell (reported individually "
                     "plus mean)");

  CLI::App* report =
      app.add_subcommand("report", "render a stored report as a table");
  report->add_option("--in", opt.report_path, "report JSON file");

  try {
    app.parse(argc, argv);
    if (generate->parsed()) return cmd_generate(opt);
    if (train->parsed()) return cmd_train(opt);
    if (distill->parsed()) return cmd_distill(opt);
    if (evaluate->parsed()) return cmd_evaluate(opt);
    if (ablate->parsed()) return cmd_ablate(opt);
    if (report->parsed()) return cmd_report(opt);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // bad arguments are validation errors
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
