#pragma once

#include <string>
#include <utility>
#include <vector>

#include "convemo/rng.hpp"
#include "convemo/types.hpp"

namespace convemo::masking {

// Scenario drawn once per conversation per training step. "None" leaves the
// inputs untouched; "FullAudio"/"FullVideo" blank that modality for every
// utterance; "Random" blanks short utterance spans independently per modality.
enum class Scenario { None, FullAudio, FullVideo, Random };

std::string scenario_name(Scenario s);

struct ScenarioProbs {
  double p_none = 0.1;
  double p_full_audio = 0.3;
  double p_full_video = 0.3;
  double p_random = 0.3;

  // Probabilities must be non-negative and sum to 1 (within 1e-9).
  void validate() const;
};

struct RandomMaskConfig {
  double per_sample_start_prob = 0.2;
  int len_audio = 1;
  int len_video = 1;

  void validate() const;
};

// Per-utterance blanking decisions for one conversation. drop_*[t] == true
// means utterance t loses that modality (its features become zeros).
struct MaskPlan {
  Scenario scenario = Scenario::None;
  std::vector<bool> drop_audio;
  std::vector<bool> drop_video;

  size_t size() const { return drop_audio.size(); }
  bool any() const;
};

// Consumes exactly one uniform draw from `rng`.
Scenario sample_scenario(const ScenarioProbs& probs, RandomStream& rng);

MaskPlan plan_none(size_t n);
MaskPlan plan_full_audio(size_t n);
MaskPlan plan_full_video(size_t n);
// Audio pass first (one Bernoulli per utterance), then the video pass.
// A hit at position t blanks [t, t+len) clipped to the conversation; spans
// from separate hits union together.
MaskPlan plan_random(size_t n, const RandomMaskConfig& config,
                     RandomStream& rng);
MaskPlan build_mask(Scenario scenario, size_t n, const RandomMaskConfig& config,
                    RandomStream& rng);

// Returns copies of the per-utterance feature matrices (rows = utterances)
// with dropped rows zeroed; kept rows are bit-identical. Inputs stay
// untouched.
std::pair<MatR, MatR> apply_mask(const MatR& audio, const MatR& video,
                                 const MaskPlan& plan);

// Deployment-style plan: blank every modality that is not active. Evaluation
// routes inactive modalities through this so they hit the exact zero-fill
// path training-time masking uses.
MaskPlan plan_for_active_modalities(size_t n, bool audio_active,
                                    bool video_active);

}  // namespace convemo::masking
