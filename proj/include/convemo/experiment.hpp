#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "convemo/checkpoint.hpp"
#include "convemo/corpus.hpp"
#include "convemo/graph.hpp"
#include "convemo/losses.hpp"
#include "convemo/masking.hpp"
#include "convemo/network.hpp"
#include "convemo/training.hpp"

namespace convemo::experiment {

// Data section of the experiment config: the synthetic-corpus recipe for the
// training split plus the sibling split sizes. Val/test splits reuse the
// same class geometry (structure_seed) with per-utterance seeds offset by
// +1/+2, so they are fresh draws from the same distribution.
struct DataConfig {
  corpus::SynthConfig synth;  // synth.n_conversations = training split size
  int val_conversations = 100;
  int test_conversations = 200;

  void validate() const;
};

corpus::SynthConfig split_recipe(const DataConfig& data, corpus::Split split);
corpus::Dataset make_split(const DataConfig& data, corpus::Split split);

// Aggregated, schema-checked experiment description. One file drives every
// command; unknown keys anywhere in the document are rejected with their
// full path so a typo cannot silently fall back to a default.
struct ExperimentConfig {
  std::string output_dir;  // optional; CLI flags and env var can override
  training::Seeds seeds;
  DataConfig data;
  network::ModelConfig model;
  graph::GraphConfig graph;
  training::TrainConfig train;  // scenario/random-mask settings live here
  losses::DistillConfig distill;

  void validate() const;
};

ExperimentConfig default_config();

// Strict parse: every section and key is checked; unknown keys raise
// ValidationError naming the full dotted path. Absent keys keep defaults.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Canonical serialization (sorted keys, every field explicit except
// output_dir, which names where artifacts land and is not part of the
// experiment's identity). The config hash embedded in reports is the 64-bit
// FNV-1a of this dump.
nlohmann::json config_to_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

// ---- prepared data ----

struct PreparedSplits {
  std::vector<training::PreparedConv> train;
  std::vector<training::PreparedConv> val;
  std::vector<training::PreparedConv> test;
};

// Generates all three splits in memory from the config recipe.
PreparedSplits prepare_splits(const ExperimentConfig& cfg);

// Reads train/val/test JSONL files from a directory written by cmd_generate.
PreparedSplits load_splits(const ExperimentConfig& cfg,
                           const std::filesystem::path& dir);

// ---- runners ----

// Evaluation block for one inference condition; "available" modalities are
// zero-filled when absent.
nlohmann::json eval_to_json(const training::EvalResult& result);

struct TrainOutcome {
  training::TrainedModel model;
  nlohmann::json report;  // deterministic: no timestamp inside
};

// Trains per the config and evaluates the result on the test split under
// both inference conditions (AV and audio-only). For a single-modality
// model the AV block is null (reports render it as "-").
TrainOutcome run_train(const ExperimentConfig& cfg,
                       const PreparedSplits& splits);

// Distills an audio(-subset) student from the frozen teacher and reports
// teacher vs. student side by side with both confusion matrices.
TrainOutcome run_distill(const ExperimentConfig& cfg,
                         const training::TrainedModel& teacher,
                         const PreparedSplits& splits);

// Named ablation grids mirroring the experiment tables:
//   depth    — three teacher/student pairs (full, SeqContext 2, GNN 3)
//   masking  — audio baseline / AV baseline / masked, AV+A inference
//   disjoint — the masking grid re-run on self-loop-only graphs, plus an
//              audio-only masked row
// Per-cell failures are recorded in the cell and the grid continues.
nlohmann::json run_ablation(const ExperimentConfig& cfg,
                            const std::string& grid, int repeats = 1);

// ---- report output ----

std::string render_confusion_csv(const metrics::Confusion& confusion);

// Writes `report` plus a "timestamp" field. Everything except the timestamp
// is byte-deterministic for fixed config+seeds.
void write_report(nlohmann::json report, const std::filesystem::path& path);

// Human-readable one-table rendering of any report this module emits.
std::string render_report_text(const nlohmann::json& report);

}  // namespace convemo::experiment
