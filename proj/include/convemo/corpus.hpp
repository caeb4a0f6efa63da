#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace convemo::corpus {

// One speaker turn. Emotion classes for the default 4-class setup:
// 0=neutral, 1=happy, 2=sad, 3=angry.
struct Utterance {
  int index = 0;
  int speaker = 0;
  int label = 0;
  std::vector<double> audio;
  std::vector<double> video;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Conversation {
  std::string conv_id;
  int num_speakers = 1;
  std::vector<Utterance> utterances;

  int length() const { return static_cast<int>(utterances.size()); }

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

struct DatasetHeader {
  int audio_dim = 100;
  int video_dim = 512;
  int num_classes = 4;
  int num_speakers = 2;

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

enum class Split { None, Train, Val, Test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct Dataset {
  DatasetHeader header;
  Split split = Split::None;
  std::vector<Conversation> conversations;

  std::size_t total_utterances() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Synthetic corpus generator configuration. The generated corpus mimics the
// dataset schema of a conversational audio+video emotion corpus:
//  - per-class mean directions, split across modalities by the signal
//    fractions below (video carries more evidence than audio by default),
//  - a class-independent baseline offset per modality (feature_bias), so an
//    all-zeros vector sits off the data manifold the way a zero-imputed
//    real feature stream would,
//  - optional cross-modal redundancy (video_redundancy): part of the video
//    stream re-expresses the audio evidence through a fixed linear map
//    instead of adding an independent view, the way face and voice express
//    the same underlying affect,
//  - additive Gaussian noise (noise_scale),
//  - first-order Markov label persistence within a conversation, so that
//    temporal context is informative.
// `seed` drives all per-utterance randomness; `structure_seed` drives the
// per-class mean directions, so several splits generated with different
// seeds but the same structure_seed share the same class geometry.
struct SynthConfig {
  int n_conversations = 600;
  int min_len = 5;
  int max_len = 15;
  int num_speakers = 2;
  int num_classes = 4;
  std::vector<double> audio_frac = {0.5, 0.5, 0.5, 0.5};
  std::vector<double> video_frac = {0.65, 0.65, 0.65, 0.65};
  double noise_scale = 1.0;
  // Norm of the per-modality baseline offset, in the same units as a class
  // signal fraction of 1.0; carries no label information.
  double feature_bias = 0.25;
  // Fraction of the video vector that is a re-expression of the audio
  // evidence (signal and noise transported through a fixed linear map)
  // rather than an independent view. At 1.0, video is individually
  // informative but adds no information beyond audio.
  double video_redundancy = 0.0;
  double emotion_persistence = 0.75;
  std::uint64_t seed = 42;
  std::uint64_t structure_seed = 42;

  void validate() const;  // throws ValidationError naming the bad field
};

Dataset generate_synthetic(const SynthConfig& config);

// Line-delimited JSON, one conversation per line, preceded by one header
// line. See README for the exact schema.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

struct Violation {
  std::string conv_id;
  int utterance_index = -1;  // -1 for conversation-level violations
  std::string field;
  std::string message;
};

std::vector<Violation> validate(const Dataset& dataset);

// Linear projection used to reduce learned 1024-dim audio embeddings to the
// corpus audio feature size: out = raw * W + b (row-vector convention).
inline constexpr int kProjectionSourceDim = 1024;

struct ProjectionMatrix {
  Eigen::MatrixXd weights;  // (source_dim, target_dim)
  Eigen::VectorXd bias;     // (target_dim)
};

Eigen::VectorXd project_features(const Eigen::VectorXd& raw,
                                 const ProjectionMatrix& proj);

}  // namespace convemo::corpus
