#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "convemo/corpus.hpp"
#include "convemo/graph.hpp"
#include "convemo/losses.hpp"
#include "convemo/masking.hpp"
#include "convemo/metrics.hpp"
#include "convemo/network.hpp"
#include "convemo/types.hpp"

namespace convemo::training {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Baseline trains on the inputs as-is. Masked draws a blanking scenario per
// conversation per step. MaskedUni restricts the scenario distribution to
// {None, Random} (renormalized), for runs whose inputs carry one modality.
enum class TrainMode { Baseline, Masked, MaskedUni };

std::string train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

// Every consumer of randomness pulls from its own named stream so enabling
// one feature never shifts another's draws: parameter init + dropout derive
// from `init`, epoch shuffling from `data_order`, scenario/span draws and
// distillation negative picks from `masking`.
struct Seeds {
  std::uint64_t init = 1;
  std::uint64_t data_order = 2;
  std::uint64_t masking = 3;
};

struct TrainConfig {
  TrainMode mode = TrainMode::Baseline;
  int epochs = 50;
  int patience = 10;  // consecutive epochs without val improvement tolerated
  OptimizerConfig optimizer;
  masking::ScenarioProbs scenario_probs;
  masking::RandomMaskConfig random_mask;
  Seeds seeds;

  void validate(const network::ModelConfig& model) const;

  // Scenario distribution actually used per step. Masked keeps
  // scenario_probs; MaskedUni zeroes the full-modality scenarios and
  // renormalizes None/Random.
  masking::ScenarioProbs effective_probs() const;
};

struct EpochTrace {
  int epoch = 0;              // 1-based
  double train_loss = 0.0;    // mean per-conversation loss
  double val_weighted_f1 = 0.0;
};

struct Provenance {
  std::string mode;
  std::string params_hash;          // hash of the returned parameters
  std::string config_hash;          // filled in by the experiment layer
  std::string teacher_params_hash;  // empty unless distilled
  Seeds seeds;
  int epochs_run = 0;
  int best_epoch = 0;  // 1-based epoch the returned parameters come from
  double best_val_f1 = 0.0;
};

struct TrainedModel {
  network::ModelConfig model;
  graph::GraphConfig graph;
  network::Params<real_t> params;
  Provenance provenance;
  std::vector<EpochTrace> trace;
};

// One conversation with its features assembled into row-per-utterance
// matrices and its relation graph prebuilt; training/eval never re-derive
// either.
struct PreparedConv {
  std::string conv_id;
  MatR audio;
  MatR video;
  std::vector<int> labels;
  network::PreparedGraph<real_t> graph;
};

std::vector<PreparedConv> prepare_conversations(const corpus::Dataset& data,
                                                const graph::GraphConfig& gc);

// Adam with bias correction; slot layout follows collect_params order.
struct AdamState {
  std::vector<MatR> m;
  std::vector<MatR> v;
  long step = 0;
};

void adam_step(std::vector<network::NamedParam<real_t>>& params,
               const std::vector<MatR>& grads, AdamState& state,
               const OptimizerConfig& opt);

// Cross-entropy training. Batch = one conversation; epoch order is
// reshuffled each epoch; early-stops on validation weighted F1 and returns
// the parameters from the best validation epoch.
TrainedModel train(const network::ModelConfig& model,
                   const graph::GraphConfig& gc, const TrainConfig& cfg,
                   const std::vector<PreparedConv>& train_set,
                   const std::vector<PreparedConv>& val_set);

// Teacher-student training: the frozen teacher runs a plain (unmasked,
// eval-mode) forward per conversation, and the student loss adds a triplet
// term pulling the student's per-utterance embeddings toward the teacher's
// for the same utterance and away from the teacher's for a sampled
// different-label utterance of the same conversation.
TrainedModel distill(const network::ModelConfig& student,
                     const graph::GraphConfig& gc, const TrainConfig& cfg,
                     const losses::DistillConfig& distill_cfg,
                     const TrainedModel& teacher,
                     const std::vector<PreparedConv>& train_set,
                     const std::vector<PreparedConv>& val_set);

struct EvalResult {
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  metrics::Confusion confusion{1};
  std::vector<metrics::ClassScores> per_class;
};

// Per-utterance argmax predictions (first max wins on ties). Modalities
// unavailable at inference are zero-filled through the same plan/apply path
// training-time masking uses.
std::vector<int> predict(const TrainedModel& model, const PreparedConv& conv,
                         bool audio_available, bool video_available);

EvalResult evaluate(const TrainedModel& model,
                    const std::vector<PreparedConv>& data,
                    bool audio_available = true, bool video_available = true);

}  // namespace convemo::training
