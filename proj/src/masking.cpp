#include "convemo/masking.hpp"

#include <algorithm>
#include <cmath>

#include "convemo/errors.hpp"

namespace convemo::masking {

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::None: return "none";
    case Scenario::FullAudio: return "full_audio";
    case Scenario::FullVideo: return "full_video";
    case Scenario::Random: return "random";
  }
  throw ValidationError("unknown scenario");
}

void ScenarioProbs::validate() const {
  for (double p : {p_none, p_full_audio, p_full_video, p_random}) {
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError("scenario probabilities must lie in [0, 1]");
  }
  const double sum = p_none + p_full_audio + p_full_video + p_random;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("scenario probabilities must sum to 1");
}

void RandomMaskConfig::validate() const {
  if (!(per_sample_start_prob >= 0.0 && per_sample_start_prob <= 1.0))
    throw ValidationError("mask.per_sample_start_prob must be in [0, 1]");
  if (len_audio < 1) throw ValidationError("mask.len_audio must be >= 1");
  if (len_video < 1) throw ValidationError("mask.len_video must be >= 1");
}

bool MaskPlan::any() const {
  return std::find(drop_audio.begin(), drop_audio.end(), true) !=
             drop_audio.end() ||
         std::find(drop_video.begin(), drop_video.end(), true) !=
             drop_video.end();
}

Scenario sample_scenario(const ScenarioProbs& probs, RandomStream& rng) {
  probs.validate();
  const double u = rng.u01();
  double acc = probs.p_none;
  if (u < acc) return Scenario::None;
  acc += probs.p_full_audio;
  if (u < acc) return Scenario::FullAudio;
  acc += probs.p_full_video;
  if (u < acc) return Scenario::FullVideo;
  return Scenario::Random;
}

MaskPlan plan_none(size_t n) {
  return {Scenario::None, std::vector<bool>(n, false),
          std::vector<bool>(n, false)};
}

MaskPlan plan_full_audio(size_t n) {
  return {Scenario::FullAudio, std::vector<bool>(n, true),
          std::vector<bool>(n, false)};
}

MaskPlan plan_full_video(size_t n) {
  return {Scenario::FullVideo, std::vector<bool>(n, false),
          std::vector<bool>(n, true)};
}

namespace {

std::vector<bool> random_spans(size_t n, double start_prob, int len,
                               RandomStream& rng) {
  std::vector<bool> drop(n, false);
  for (size_t t = 0; t < n; ++t) {
    if (!rng.bernoulli(start_prob)) continue;
    const size_t end = std::min(n, t + static_cast<size_t>(len));
    for (size_t k = t; k < end; ++k) drop[k] = true;
  }
  return drop;
}

}  // namespace

MaskPlan plan_random(size_t n, const RandomMaskConfig& config,
                     RandomStream& rng) {
  config.validate();
  MaskPlan plan;
  plan.scenario = Scenario::Random;
  plan.drop_audio =
      random_spans(n, config.per_sample_start_prob, config.len_audio, rng);
  plan.drop_video =
      random_spans(n, config.per_sample_start_prob, config.len_video, rng);
  return plan;
}

MaskPlan build_mask(Scenario scenario, size_t n, const RandomMaskConfig& config,
                    RandomStream& rng) {
  switch (scenario) {
    case Scenario::None: return plan_none(n);
    case Scenario::FullAudio: return plan_full_audio(n);
    case Scenario::FullVideo: return plan_full_video(n);
    case Scenario::Random: return plan_random(n, config, rng);
  }
  throw ValidationError("unknown scenario");
}

std::pair<MatR, MatR> apply_mask(const MatR& audio, const MatR& video,
                                 const MaskPlan& plan) {
  const size_t n = plan.size();
  if (static_cast<size_t>(audio.rows()) != n ||
      static_cast<size_t>(video.rows()) != n ||
      plan.drop_video.size() != n)
    throw ValidationError("apply_mask: plan length does not match features");
  MatR out_audio = audio;
  MatR out_video = video;
  for (size_t t = 0; t < n; ++t) {
    if (plan.drop_audio[t])
      out_audio.row(static_cast<Eigen::Index>(t)).setZero();
    if (plan.drop_video[t])
      out_video.row(static_cast<Eigen::Index>(t)).setZero();
  }
  return {std::move(out_audio), std::move(out_video)};
}

MaskPlan plan_for_active_modalities(size_t n, bool audio_active,
                                    bool video_active) {
  if (!audio_active && !video_active)
    throw ValidationError("at least one modality must stay active");
  if (!audio_active) return plan_full_audio(n);
  if (!video_active) return plan_full_video(n);
  return plan_none(n);
}

}  // namespace convemo::masking
