#include "convemo/corpus.hpp"

#include <fstream>
#include <sstream>

#include "convemo/errors.hpp"
#include "convemo/rng.hpp"
#include "json.hpp"

namespace convemo::corpus {

using nlohmann::json;

namespace {

// Overall scale of the class-mean vectors; the per-class signal fractions
// and noise_scale are the tuning knobs, this just sets the unit.
constexpr double kSignalScale = 3.0;

// Stream ids, fixed so that generated corpora are stable across versions.
enum StreamId : std::uint64_t {
  kLengthStream = 0,
  kLabelStream = 1,
  kSpeakerStream = 2,
  kNoiseStream = 3,
  kStructureStream = 100,
};

std::vector<double> unit_direction(int dim, RandomStream& rng) {
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

void check_fraction_list(const std::vector<double>& fracs, int num_classes,
                         const std::string& field) {
  if (static_cast<int>(fracs.size()) != num_classes) {
    throw ValidationError("synth." + field + " must have one entry per class (" +
                          std::to_string(num_classes) + "), got " +
                          std::to_string(fracs.size()));
  }
  for (double f : fracs) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ValidationError("synth." + field + " entries must lie in [0,1]");
    }
  }
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::None: break;
  }
  return "none";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  if (name == "none" || name.empty()) return Split::None;
  throw ValidationError("unknown split tag: " + name);
}

std::size_t Dataset::total_utterances() const {
  std::size_t n = 0;
  for (const auto& c : conversations) n += c.utterances.size();
  return n;
}

void SynthConfig::validate() const {
  if (n_conversations < 0)
    throw ValidationError("synth.n_conversations must be >= 0");
  if (min_len < 1) throw ValidationError("synth.min_len must be >= 1");
  if (max_len < min_len)
    throw ValidationError("synth.max_len must be >= synth.min_len");
  if (num_speakers < 1) throw ValidationError("synth.num_speakers must be >= 1");
  if (num_classes < 2) throw ValidationError("synth.num_classes must be >= 2");
  check_fraction_list(audio_frac, num_classes, "audio_frac");
  check_fraction_list(video_frac, num_classes, "video_frac");
  if (!(noise_scale >= 0.0)) throw ValidationError("synth.noise_scale must be >= 0");
  if (!(feature_bias >= 0.0)) throw ValidationError("synth.feature_bias must be >= 0");
  if (!(video_redundancy >= 0.0 && video_redundancy <= 1.0))
    throw ValidationError("synth.video_redundancy must lie in [0,1]");
  if (!(emotion_persistence >= 0.0 && emotion_persistence <= 1.0))
    throw ValidationError("synth.emotion_persistence must lie in [0,1]");
}

Dataset generate_synthetic(const SynthConfig& config) {
  config.validate();

  Dataset ds;
  ds.header.num_classes = config.num_classes;
  ds.header.num_speakers = config.num_speakers;

  const int audio_dim = ds.header.audio_dim;
  const int video_dim = ds.header.video_dim;

  // Class geometry depends on structure_seed only, so splits generated with
  // different seeds share the same class means.
  RandomStream structure(config.structure_seed, kStructureStream);
  std::vector<std::vector<double>> audio_dir(config.num_classes);
  std::vector<std::vector<double>> video_dir(config.num_classes);
  for (int c = 0; c < config.num_classes; ++c) {
    audio_dir[c] = unit_direction(audio_dim, structure);
    video_dir[c] = unit_direction(video_dim, structure);
  }
  // The baseline offset points along the first class's direction: a resting
  // level that resembles one class's signature, the way a neutral face or
  // silence resembles the neutral emotion. It is added to every utterance
  // regardless of label, so it carries no label information and leaves
  // pairwise class separations unchanged — but a model that never saw the
  // modality zeroed has calibrated this constant away and misreads its
  // absence as class evidence.
  const std::vector<double>& audio_bias = audio_dir[0];
  const std::vector<double>& video_bias = video_dir[0];
  const double bias_scale = config.feature_bias * kSignalScale;

  // Cross-modal transport: a fixed map from audio space to video space,
  // scaled so each video dimension has the same variance as the audio it
  // re-expresses (a higher-dimensional modality is then louder in total,
  // the way a long video embedding dominates the energy of a fused input).
  // The redundant part of the video vector is this map applied to the audio
  // vector (minus the audio baseline), carrying audio's signal *and* noise,
  // so it is individually informative yet adds nothing beyond audio. Drawn
  // after the class directions, so corpora with video_redundancy == 0 are
  // unchanged by it.
  const double rho = config.video_redundancy;
  std::vector<std::vector<double>> transport;
  double transport_gain = 0.0;
  if (rho > 0.0) {
    transport.assign(static_cast<size_t>(video_dim),
                     std::vector<double>(static_cast<size_t>(audio_dim)));
    const double col_scale = 1.0 / std::sqrt(static_cast<double>(audio_dim));
    for (auto& row : transport)
      for (auto& x : row) x = col_scale * structure.normal();
    double frac_a = 0.0, frac_v = 0.0;
    for (double f : config.audio_frac) frac_a += f;
    for (double f : config.video_frac) frac_v += f;
    // Keep video_frac meaningful under full redundancy: it sets the gain of
    // the transported view relative to the audio it re-expresses.
    transport_gain = frac_v / std::max(frac_a, 1e-12);
  }

  RandomStream lengths(config.seed, kLengthStream);
  RandomStream labels(config.seed, kLabelStream);
  RandomStream speakers(config.seed, kSpeakerStream);
  RandomStream noise(config.seed, kNoiseStream);

  std::vector<double> audio_core(static_cast<size_t>(audio_dim));

  ds.conversations.reserve(config.n_conversations);
  for (int k = 0; k < config.n_conversations; ++k) {
    Conversation conv;
    conv.conv_id = "conv-" + std::to_string(k);
    conv.num_speakers = config.num_speakers;

    const int len =
        config.min_len +
        static_cast<int>(lengths.uniform_index(config.max_len - config.min_len + 1));

    int label = static_cast<int>(labels.uniform_index(config.num_classes));
    conv.utterances.reserve(len);
    for (int t = 0; t < len; ++t) {
      if (t > 0 && !labels.bernoulli(config.emotion_persistence)) {
        label = static_cast<int>(labels.uniform_index(config.num_classes));
      }
      Utterance u;
      u.index = t;
      u.speaker = static_cast<int>(speakers.uniform_index(config.num_speakers));
      u.label = label;
      u.audio.resize(audio_dim);
      const double sa = config.audio_frac[label] * kSignalScale;
      for (int d = 0; d < audio_dim; ++d) {
        audio_core[static_cast<size_t>(d)] =
            sa * audio_dir[label][d] + config.noise_scale * noise.normal();
        u.audio[d] = audio_core[static_cast<size_t>(d)] + bias_scale * audio_bias[d];
      }
      u.video.resize(video_dim);
      const double sv = config.video_frac[label] * kSignalScale;
      for (int d = 0; d < video_dim; ++d) {
        const double indep =
            sv * video_dir[label][d] + config.noise_scale * noise.normal();
        double x = (1.0 - rho) * indep + bias_scale * video_bias[d];
        if (rho > 0.0) {
          const auto& row = transport[static_cast<size_t>(d)];
          double t = 0.0;
          for (int j = 0; j < audio_dim; ++j)
            t += row[static_cast<size_t>(j)] * audio_core[static_cast<size_t>(j)];
          x += rho * transport_gain * t;
        }
        u.video[d] = x;
      }
      conv.utterances.push_back(std::move(u));
    }
    ds.conversations.push_back(std::move(conv));
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());

  json header = {
      {"audio_dim", dataset.header.audio_dim},
      {"video_dim", dataset.header.video_dim},
      {"num_classes", dataset.header.num_classes},
      {"num_speakers", dataset.header.num_speakers},
  };
  if (dataset.split != Split::None) header["split"] = split_name(dataset.split);
  out << header.dump() << "\n";

  for (const auto& conv : dataset.conversations) {
    json utterances = json::array();
    for (const auto& u : conv.utterances) {
      utterances.push_back({{"index", u.index},
                            {"speaker", u.speaker},
                            {"label", u.label},
                            {"audio", u.audio},
                            {"video", u.video}});
    }
    json line = {{"conv_id", conv.conv_id}, {"utterances", std::move(utterances)}};
    out << line.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

[[noreturn]] void parse_fail(const std::filesystem::path& path, int line_no,
                             const std::string& what) {
  throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());

  Dataset ds;
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line)) {
    throw IoError(path.string() + ": empty file, expected header line");
  }
  ++line_no;
  json header;
  try {
    header = json::parse(line);
    ds.header.audio_dim = header.at("audio_dim").get<int>();
    ds.header.video_dim = header.at("video_dim").get<int>();
    ds.header.num_classes = header.at("num_classes").get<int>();
    ds.header.num_speakers = header.at("num_speakers").get<int>();
    if (header.contains("split")) {
      ds.split = split_from_name(header.at("split").get<std::string>());
    }
  } catch (const json::exception& e) {
    parse_fail(path, line_no, std::string("malformed header: ") + e.what());
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Conversation conv;
    conv.num_speakers = ds.header.num_speakers;
    try {
      json j = json::parse(line);
      conv.conv_id = j.at("conv_id").get<std::string>();
      const json& utts = j.at("utterances");
      conv.utterances.reserve(utts.size());
      for (const json& ju : utts) {
        Utterance u;
        u.index = ju.at("index").get<int>();
        u.speaker = ju.at("speaker").get<int>();
        u.label = ju.at("label").get<int>();
        u.audio = ju.at("audio").get<std::vector<double>>();
        u.video = ju.at("video").get<std::vector<double>>();
        conv.utterances.push_back(std::move(u));
      }
    } catch (const json::exception& e) {
      parse_fail(path, line_no, std::string("malformed record: ") + e.what());
    }
    for (const auto& u : conv.utterances) {
      if (static_cast<int>(u.audio.size()) != ds.header.audio_dim) {
        parse_fail(path, line_no,
                   "conversation " + conv.conv_id + " utterance " +
                       std::to_string(u.index) + ": audio length " +
                       std::to_string(u.audio.size()) + " != header audio_dim " +
                       std::to_string(ds.header.audio_dim));
      }
      if (static_cast<int>(u.video.size()) != ds.header.video_dim) {
        parse_fail(path, line_no,
                   "conversation " + conv.conv_id + " utterance " +
                       std::to_string(u.index) + ": video length " +
                       std::to_string(u.video.size()) + " != header video_dim " +
                       std::to_string(ds.header.video_dim));
      }
      if (u.label < 0 || u.label >= ds.header.num_classes) {
        parse_fail(path, line_no,
                   "conversation " + conv.conv_id + " utterance " +
                       std::to_string(u.index) + ": label " +
                       std::to_string(u.label) + " out of range");
      }
    }
    ds.conversations.push_back(std::move(conv));
  }
  return ds;
}

std::vector<Violation> validate(const Dataset& dataset) {
  std::vector<Violation> out;
  const auto& h = dataset.header;
  for (const auto& conv : dataset.conversations) {
    if (conv.utterances.empty()) {
      out.push_back({conv.conv_id, -1, "utterances", "conversation is empty"});
      continue;
    }
    if (conv.num_speakers != h.num_speakers) {
      out.push_back({conv.conv_id, -1, "num_speakers",
                     "conversation num_speakers " + std::to_string(conv.num_speakers) +
                         " != header num_speakers " + std::to_string(h.num_speakers)});
    }
    for (std::size_t t = 0; t < conv.utterances.size(); ++t) {
      const auto& u = conv.utterances[t];
      if (u.index != static_cast<int>(t)) {
        out.push_back({conv.conv_id, static_cast<int>(t), "index",
                       "expected index " + std::to_string(t) + ", got " +
                           std::to_string(u.index)});
      }
      if (u.speaker < 0 || u.speaker >= conv.num_speakers) {
        out.push_back({conv.conv_id, u.index, "speaker",
                       "speaker " + std::to_string(u.speaker) + " out of range [0," +
                           std::to_string(conv.num_speakers) + ")"});
      }
      if (u.label < 0 || u.label >= h.num_classes) {
        out.push_back({conv.conv_id, u.index, "label",
                       "label " + std::to_string(u.label) + " out of range [0," +
                           std::to_string(h.num_classes) + ")"});
      }
      if (static_cast<int>(u.audio.size()) != h.audio_dim) {
        out.push_back({conv.conv_id, u.index, "audio",
                       "audio length " + std::to_string(u.audio.size()) +
                           " != audio_dim " + std::to_string(h.audio_dim)});
      }
      if (static_cast<int>(u.video.size()) != h.video_dim) {
        out.push_back({conv.conv_id, u.index, "video",
                       "video length " + std::to_string(u.video.size()) +
                           " != video_dim " + std::to_string(h.video_dim)});
      }
    }
  }
  return out;
}

Eigen::VectorXd project_features(const Eigen::VectorXd& raw,
                                 const ProjectionMatrix& proj) {
  if (proj.weights.rows() != kProjectionSourceDim) {
    throw ValidationError("projection weights must have " +
                          std::to_string(kProjectionSourceDim) + " rows, got " +
                          std::to_string(proj.weights.rows()));
  }
  if (proj.bias.size() != proj.weights.cols()) {
    throw ValidationError("projection bias length " + std::to_string(proj.bias.size()) +
                          " != weights cols " + std::to_string(proj.weights.cols()));
  }
  if (raw.size() != proj.weights.rows()) {
    throw ValidationError("projection input length " + std::to_string(raw.size()) +
                          " != " + std::to_string(proj.weights.rows()));
  }
  return proj.weights.transpose() * raw + proj.bias;
}

}  // namespace convemo::corpus
