#include "convemo/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "convemo/errors.hpp"

namespace convemo::training {

namespace {

using Tape = ad::Tape<real_t>;
using Var = Tape::Var;

// Fisher-Yates driven by the order stream; one shuffle per epoch.
void shuffle_order(std::vector<size_t>& order, RandomStream& rng) {
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
}

int argmax_row(const MatR& m, Eigen::Index row) {
  int best = 0;
  for (Eigen::Index j = 1; j < m.cols(); ++j)
    if (m(row, j) > m(row, best)) best = static_cast<int>(j);
  return best;
}

// Everything a per-conversation loss builder needs. The engine owns tape,
// masking, optimizer, and early stopping; the builder decides what loss to
// put on the tape.
struct StepEnv {
  Tape& t;
  const network::ModelConfig& cfg;
  const network::ParamVars<real_t>& pv;
  const PreparedConv& pc;
  const MatR& audio;  // after any masking
  const MatR& video;
  RandomStream* dropout_rng;
};

using StepLossFn = std::function<Var(StepEnv&)>;

std::vector<int> predict_with(const network::ModelConfig& cfg,
                              network::Params<real_t>& params,
                              const PreparedConv& pc, bool audio_available,
                              bool video_available) {
  const auto plan = masking::plan_for_active_modalities(
      static_cast<size_t>(pc.audio.rows()), audio_available, video_available);
  const auto [audio, video] = masking::apply_mask(pc.audio, pc.video, plan);
  Tape t;
  auto pv = network::bind_params(t, params, /*trainable=*/false);
  const auto out = network::forward(t, cfg, pv, audio, video, pc.graph);
  const MatR& logits = t.value(out.logits);
  std::vector<int> preds(static_cast<size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    preds[static_cast<size_t>(i)] = argmax_row(logits, i);
  return preds;
}

double val_weighted_f1(const network::ModelConfig& cfg,
                       network::Params<real_t>& params,
                       const std::vector<PreparedConv>& val_set) {
  metrics::Confusion confusion(cfg.num_classes);
  for (const PreparedConv& pc : val_set) {
    const auto preds = predict_with(cfg, params, pc, true, true);
    for (size_t i = 0; i < preds.size(); ++i)
      confusion.add(pc.labels[i], preds[i]);
  }
  return metrics::weighted_f1(confusion);
}

// Shared training engine: epoch loop, per-epoch shuffle, per-conversation
// masking, backward + Adam, validation-F1 early stopping, best-epoch
// parameter snapshot.
TrainedModel run_loop(const network::ModelConfig& model,
                      const graph::GraphConfig& gc, const TrainConfig& cfg,
                      const std::vector<PreparedConv>& train_set,
                      const std::vector<PreparedConv>& val_set,
                      const StepLossFn& make_loss) {
  model.validate();
  gc.validate();
  cfg.validate(model);
  if (train_set.empty()) throw ValidationError("train: empty training set");
  if (val_set.empty()) throw ValidationError("train: empty validation set");

  network::ModelConfig init_cfg = model;
  init_cfg.seed = cfg.seeds.init;  // parameter init is owned by seeds.init
  auto params = network::init_params<real_t>(init_cfg);
  auto named = network::collect_params(params);

  RandomStream order_rng(cfg.seeds.data_order, 0);
  RandomStream mask_rng(cfg.seeds.masking, 0);
  RandomStream dropout_rng(cfg.seeds.init, 1);
  const bool masking_on = cfg.mode != TrainMode::Baseline;
  const masking::ScenarioProbs probs = cfg.effective_probs();

  AdamState adam;
  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainedModel result;
  result.model = init_cfg;
  result.graph = gc;
  result.provenance.mode = train_mode_name(cfg.mode);
  result.provenance.seeds = cfg.seeds;

  network::Params<real_t> best = params;
  double best_f1 = -1.0;
  int best_epoch = 0;
  int stale_epochs = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_order(order, order_rng);
    double loss_sum = 0.0;
    for (size_t step = 0; step < order.size(); ++step) {
      const PreparedConv& pc = train_set[order[step]];
      MatR audio = pc.audio;
      MatR video = pc.video;
      if (masking_on) {
        const auto scenario = masking::sample_scenario(probs, mask_rng);
        const auto plan = masking::build_mask(
            scenario, static_cast<size_t>(pc.audio.rows()), cfg.random_mask,
            mask_rng);
        std::tie(audio, video) = masking::apply_mask(audio, video, plan);
      }

      double loss_value = 0.0;
      try {
        Tape t;
        auto pv = network::bind_params(t, params);
        StepEnv env{t, init_cfg, pv, pc, audio, video, &dropout_rng};
        Var loss = make_loss(env);
        loss_value = static_cast<double>(t.value(loss)(0, 0));
        if (!std::isfinite(loss_value))
          throw NumericError("non-finite loss");
        t.backward(loss);
        std::vector<MatR> grads;
        grads.reserve(pv.vars.size());
        for (Var v : pv.vars) grads.push_back(t.grad(v));
        adam_step(named, grads, adam, cfg.optimizer);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " +
                           std::to_string(epoch) + ", step " +
                           std::to_string(step + 1) + ", conversation " +
                           pc.conv_id + ")");
      }
      loss_sum += loss_value;
    }

    const double f1 = val_weighted_f1(init_cfg, params, val_set);
    result.trace.push_back(
        {epoch, loss_sum / static_cast<double>(order.size()), f1});
    result.provenance.epochs_run = epoch;

    if (f1 > best_f1) {
      best_f1 = f1;
      best_epoch = epoch;
      best = params;
      stale_epochs = 0;
    } else if (++stale_epochs >= cfg.patience) {
      break;
    }
  }

  result.params = std::move(best);
  result.provenance.best_epoch = best_epoch;
  result.provenance.best_val_f1 = best_f1;
  result.provenance.params_hash = network::params_hash(result.params);
  return result;
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(lr > 0)) throw ValidationError("optimizer.lr must be > 0");
  if (beta1 < 0 || beta1 >= 1)
    throw ValidationError("optimizer.beta1 must be in [0, 1)");
  if (beta2 < 0 || beta2 >= 1)
    throw ValidationError("optimizer.beta2 must be in [0, 1)");
  if (!(eps > 0)) throw ValidationError("optimizer.eps must be > 0");
}

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::Baseline: return "baseline";
    case TrainMode::Masked: return "masked";
    case TrainMode::MaskedUni: return "masked_uni";
  }
  throw ValidationError("unknown train mode");
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "baseline") return TrainMode::Baseline;
  if (name == "masked") return TrainMode::Masked;
  if (name == "masked_uni") return TrainMode::MaskedUni;
  throw ValidationError("unknown train mode: " + name);
}

void TrainConfig::validate(const network::ModelConfig& model) const {
  if (epochs < 1) throw ValidationError("train.epochs must be >= 1");
  if (patience < 1) throw ValidationError("train.patience must be >= 1");
  optimizer.validate();
  if (mode == TrainMode::Baseline) return;
  scenario_probs.validate();
  random_mask.validate();
  if (mode == TrainMode::Masked && !(model.has_audio() && model.has_video()))
    throw ValidationError(
        "train.mode=masked requires both audio and video modalities");
  if (mode == TrainMode::MaskedUni &&
      scenario_probs.p_none + scenario_probs.p_random <= 0)
    throw ValidationError(
        "train.mode=masked_uni needs p_none + p_random > 0");
}

masking::ScenarioProbs TrainConfig::effective_probs() const {
  if (mode != TrainMode::MaskedUni) return scenario_probs;
  const double total = scenario_probs.p_none + scenario_probs.p_random;
  return {scenario_probs.p_none / total, 0.0, 0.0,
          scenario_probs.p_random / total};
}

std::vector<PreparedConv> prepare_conversations(const corpus::Dataset& data,
                                                const graph::GraphConfig& gc) {
  gc.validate();
  std::vector<PreparedConv> out;
  out.reserve(data.conversations.size());
  for (const corpus::Conversation& conv : data.conversations) {
    PreparedConv pc;
    pc.conv_id = conv.conv_id;
    const Eigen::Index n = static_cast<Eigen::Index>(conv.utterances.size());
    pc.audio.resize(n, data.header.audio_dim);
    pc.video.resize(n, data.header.video_dim);
    pc.labels.reserve(conv.utterances.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const corpus::Utterance& u = conv.utterances[static_cast<size_t>(i)];
      for (int j = 0; j < data.header.audio_dim; ++j)
        pc.audio(i, j) = static_cast<real_t>(u.audio[static_cast<size_t>(j)]);
      for (int j = 0; j < data.header.video_dim; ++j)
        pc.video(i, j) = static_cast<real_t>(u.video[static_cast<size_t>(j)]);
      pc.labels.push_back(u.label);
    }
    pc.graph = network::prepare_graph<real_t>(graph::build_graph(conv, gc));
    out.push_back(std::move(pc));
  }
  return out;
}

void adam_step(std::vector<network::NamedParam<real_t>>& params,
               const std::vector<MatR>& grads, AdamState& state,
               const OptimizerConfig& opt) {
  if (params.size() != grads.size())
    throw ValidationError("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& np : params) {
      state.m.push_back(MatR::Zero(np.mat->rows(), np.mat->cols()));
      state.v.push_back(MatR::Zero(np.mat->rows(), np.mat->cols()));
    }
  }
  ++state.step;
  const real_t b1 = static_cast<real_t>(opt.beta1);
  const real_t b2 = static_cast<real_t>(opt.beta2);
  const real_t correction1 =
      static_cast<real_t>(1.0 - std::pow(opt.beta1, state.step));
  const real_t correction2 =
      static_cast<real_t>(1.0 - std::pow(opt.beta2, state.step));
  const real_t lr = static_cast<real_t>(opt.lr);
  const real_t eps = static_cast<real_t>(opt.eps);

  for (size_t k = 0; k < params.size(); ++k) {
    const MatR& g = grads[k];
    MatR& m = state.m[k];
    MatR& v = state.v[k];
    if (g.rows() != m.rows() || g.cols() != m.cols())
      throw ValidationError("adam_step: gradient shape mismatch at " +
                            params[k].name);
    m = b1 * m + (real_t(1) - b1) * g;
    v = b2 * v + (real_t(1) - b2) * g.cwiseProduct(g);
    const MatR m_hat = m / correction1;
    const MatR v_hat = v / correction2;
    *params[k].mat -=
        lr * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + eps).matrix());
  }
}

TrainedModel train(const network::ModelConfig& model,
                   const graph::GraphConfig& gc, const TrainConfig& cfg,
                   const std::vector<PreparedConv>& train_set,
                   const std::vector<PreparedConv>& val_set) {
  return run_loop(model, gc, cfg, train_set, val_set, [](StepEnv& env) {
    const auto out = network::forward(env.t, env.cfg, env.pv, env.audio,
                                      env.video, env.pc.graph,
                                      /*train=*/true, env.dropout_rng);
    return env.t.cross_entropy_mean(out.logits, env.pc.labels);
  });
}

TrainedModel distill(const network::ModelConfig& student,
                     const graph::GraphConfig& gc, const TrainConfig& cfg,
                     const losses::DistillConfig& distill_cfg,
                     const TrainedModel& teacher,
                     const std::vector<PreparedConv>& train_set,
                     const std::vector<PreparedConv>& val_set) {
  distill_cfg.validate();
  teacher.model.validate();
  if (teacher.model.hidden_dim != student.hidden_dim)
    throw ValidationError(
        "distill: teacher and student hidden widths must match");
  if (teacher.model.num_classes != student.num_classes)
    throw ValidationError(
        "distill: teacher and student class counts must match");

  // The teacher stays frozen: a private copy is bound as constants each
  // step, so no gradient can reach it even by accident.
  network::Params<real_t> teacher_params = teacher.params;
  const std::string teacher_hash = network::params_hash(teacher_params);
  const network::ModelConfig teacher_cfg = teacher.model;
  RandomStream neg_rng(cfg.seeds.masking, 3);

  auto make_loss = [&](StepEnv& env) -> Var {
    // Teacher embeddings: eval-mode forward on the clean (unmasked) inputs.
    MatR teacher_tap;
    {
      Tape tt;
      auto tpv = network::bind_params(tt, teacher_params, /*trainable=*/false);
      const auto tout = network::forward(tt, teacher_cfg, tpv, env.pc.audio,
                                         env.pc.video, env.pc.graph);
      teacher_tap = tt.value(tout.tap);
    }

    const auto out = network::forward(env.t, env.cfg, env.pv, env.audio,
                                      env.video, env.pc.graph,
                                      /*train=*/true, env.dropout_rng);
    Var ce = env.t.cross_entropy_mean(out.logits, env.pc.labels);

    const size_t n = env.pc.labels.size();
    if (n < 2) {
      // No negative exists inside a one-utterance conversation; the
      // triplet term contributes nothing.
      return env.t.scale(ce, static_cast<real_t>(distill_cfg.alpha2));
    }
    MatR neg(teacher_tap.rows(), teacher_tap.cols());
    for (size_t i = 0; i < n; ++i) {
      const size_t j = losses::sample_negative(
          i, env.pc.labels, distill_cfg.negative_policy, neg_rng);
      neg.row(static_cast<Eigen::Index>(i)) =
          teacher_tap.row(static_cast<Eigen::Index>(j));
    }
    Var tri = env.t.triplet_mean(out.tap, teacher_tap, neg,
                                 static_cast<real_t>(distill_cfg.margin),
                                 distill_cfg.p);
    return env.t.add(env.t.scale(tri, static_cast<real_t>(distill_cfg.alpha1)),
                     env.t.scale(ce, static_cast<real_t>(distill_cfg.alpha2)));
  };

  TrainedModel result = run_loop(student, gc, cfg, train_set, val_set,
                                 make_loss);
  result.provenance.teacher_params_hash = teacher_hash;
  if (network::params_hash(teacher_params) != teacher_hash)
    throw NumericError("distill: teacher parameters changed during training");
  return result;
}

std::vector<int> predict(const TrainedModel& model, const PreparedConv& conv,
                         bool audio_available, bool video_available) {
  network::Params<real_t> params = model.params;
  return predict_with(model.model, params, conv, audio_available,
                      video_available);
}

EvalResult evaluate(const TrainedModel& model,
                    const std::vector<PreparedConv>& data,
                    bool audio_available, bool video_available) {
  network::Params<real_t> params = model.params;
  EvalResult res;
  res.confusion = metrics::Confusion(model.model.num_classes);
  for (const PreparedConv& pc : data) {
    const auto preds = predict_with(model.model, params, pc, audio_available,
                                    video_available);
    for (size_t i = 0; i < preds.size(); ++i)
      res.confusion.add(pc.labels[i], preds[i]);
  }
  res.weighted_f1 = metrics::weighted_f1(res.confusion);
  res.accuracy = metrics::accuracy(res.confusion);
  for (int c = 0; c < model.model.num_classes; ++c)
    res.per_class.push_back(metrics::class_scores(res.confusion, c));
  return res;
}

}  // namespace convemo::training
