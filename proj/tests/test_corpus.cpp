#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "convemo/corpus.hpp"
#include "convemo/errors.hpp"

namespace fs = std::filesystem;
using namespace convemo;
using namespace convemo::corpus;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.n_conversations = 20;
  cfg.seed = 42;
  cfg.structure_seed = 42;
  return cfg;
}

fs::path temp_file(const std::string& stem) {
  return fs::temp_directory_path() / (stem + "-" + std::to_string(::getpid()) +
                                      ".jsonl");
}

// Pools every utterance of a dataset into a feature matrix (optionally
// audio-only) plus labels.
void pool(const Dataset& ds, bool audio_only, Eigen::MatrixXd& x,
          std::vector<int>& labels) {
  const int da = ds.header.audio_dim;
  const int dv = audio_only ? 0 : ds.header.video_dim;
  x.resize(static_cast<Eigen::Index>(ds.total_utterances()), da + dv + 1);
  labels.clear();
  Eigen::Index row = 0;
  for (const auto& conv : ds.conversations) {
    for (const auto& utt : conv.utterances) {
      for (int j = 0; j < da; ++j) x(row, j) = utt.audio[(size_t)j];
      for (int j = 0; j < dv; ++j) x(row, da + j) = utt.video[(size_t)j];
      x(row, da + dv) = 1.0;  // bias column
      labels.push_back(utt.label);
      ++row;
    }
  }
}

// Independent oracle for "how much class signal do these features carry":
// a one-vs-rest ridge-regression probe fit in closed form, ignoring all
// temporal structure.
double ridge_probe_accuracy(const Dataset& train, const Dataset& test,
                            bool audio_only) {
  Eigen::MatrixXd xtr, xte;
  std::vector<int> ytr, yte;
  pool(train, audio_only, xtr, ytr);
  pool(test, audio_only, xte, yte);
  const int classes = train.header.num_classes;
  Eigen::MatrixXd onehot =
      Eigen::MatrixXd::Zero(xtr.rows(), classes);
  for (Eigen::Index i = 0; i < xtr.rows(); ++i)
    onehot(i, ytr[(size_t)i]) = 1.0;
  const Eigen::Index d = xtr.cols();
  Eigen::MatrixXd gram = xtr.transpose() * xtr +
                         1.0 * Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd w = gram.ldlt().solve(xtr.transpose() * onehot);
  Eigen::MatrixXd scores = xte * w;
  int correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best;
    scores.row(i).maxCoeff(&best);
    if (static_cast<int>(best) == yte[(size_t)i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

}  // namespace

TEST_CASE("generation is deterministic in the config") {
  const SynthConfig cfg = small_config();
  const Dataset a = generate_synthetic(cfg);
  const Dataset b = generate_synthetic(cfg);
  CHECK(a == b);
}

TEST_CASE("different seeds change features, different structure seeds change geometry") {
  SynthConfig cfg = small_config();
  const Dataset a = generate_synthetic(cfg);
  cfg.seed = 43;
  const Dataset b = generate_synthetic(cfg);
  CHECK_FALSE(a == b);
}

TEST_CASE("generated dataset respects its own schema") {
  SynthConfig cfg = small_config();
  cfg.n_conversations = 50;
  const Dataset ds = generate_synthetic(cfg);
  CHECK(ds.conversations.size() == 50);
  CHECK(validate(ds).empty());
  for (const auto& conv : ds.conversations) {
    CHECK(conv.length() >= cfg.min_len);
    CHECK(conv.length() <= cfg.max_len);
    CHECK(conv.num_speakers == cfg.num_speakers);
    for (const auto& utt : conv.utterances) {
      CHECK(utt.speaker >= 0);
      CHECK(utt.speaker < cfg.num_speakers);
      CHECK(utt.label >= 0);
      CHECK(utt.label < cfg.num_classes);
      CHECK(utt.audio.size() == 100);
      CHECK(utt.video.size() == 512);
    }
  }
}

TEST_CASE("conversation lengths span the configured range") {
  SynthConfig cfg = small_config();
  cfg.n_conversations = 300;
  const Dataset ds = generate_synthetic(cfg);
  int lo = cfg.max_len, hi = cfg.min_len;
  for (const auto& conv : ds.conversations) {
    lo = std::min(lo, conv.length());
    hi = std::max(hi, conv.length());
  }
  CHECK(lo == cfg.min_len);
  CHECK(hi == cfg.max_len);
}

TEST_CASE("labels follow the configured persistence") {
  // With persistence p and C classes, consecutive labels agree with
  // probability p + (1-p)/C (a redraw can land on the same class).
  SynthConfig cfg = small_config();
  cfg.n_conversations = 2000;
  cfg.emotion_persistence = 0.75;
  const Dataset ds = generate_synthetic(cfg);
  int same = 0, pairs = 0;
  for (const auto& conv : ds.conversations)
    for (size_t t = 1; t < conv.utterances.size(); ++t) {
      ++pairs;
      if (conv.utterances[t].label == conv.utterances[t - 1].label) ++same;
    }
  const double expected = 0.75 + 0.25 / 4.0;
  CHECK(static_cast<double>(same) / pairs ==
        doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("all classes appear with roughly equal frequency") {
  SynthConfig cfg = small_config();
  cfg.n_conversations = 1000;
  const Dataset ds = generate_synthetic(cfg);
  std::vector<int> counts(4, 0);
  for (const auto& conv : ds.conversations)
    for (const auto& utt : conv.utterances) ++counts[(size_t)utt.label];
  const double total = static_cast<double>(ds.total_utterances());
  for (int c = 0; c < 4; ++c)
    CHECK(counts[(size_t)c] / total == doctest::Approx(0.25).epsilon(0.15));
}

TEST_CASE("audio+video features separate classes better than audio alone") {
  // The corpus is built so video carries more of the class signal than
  // audio; a closed-form ridge probe (independent of the model under test)
  // must therefore score the fused features above audio-only features.
  SynthConfig cfg;
  cfg.n_conversations = 200;
  cfg.seed = 42;
  const Dataset train = generate_synthetic(cfg);
  cfg.seed = 1042;
  const Dataset test = generate_synthetic(cfg);

  const double acc_av = ridge_probe_accuracy(train, test, false);
  const double acc_a = ridge_probe_accuracy(train, test, true);
  INFO("probe accuracy av=", acc_av, " audio=", acc_a);
  CHECK(acc_a > 0.5);            // audio alone is well above 4-class chance
  CHECK(acc_av > acc_a + 0.03);  // but fused features are clearly stronger
}

TEST_CASE("shared structure seed keeps class geometry across corpora") {
  // Two corpora drawn with different utterance seeds but the same
  // structure seed must agree on where the classes live: per-class mean
  // audio vectors should be nearly parallel.
  SynthConfig cfg = small_config();
  cfg.n_conversations = 400;
  cfg.seed = 1;
  const Dataset a = generate_synthetic(cfg);
  cfg.seed = 2;
  const Dataset b = generate_synthetic(cfg);

  auto class_mean = [](const Dataset& ds, int label) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(100);
    int n = 0;
    for (const auto& conv : ds.conversations)
      for (const auto& utt : conv.utterances)
        if (utt.label == label) {
          for (int j = 0; j < 100; ++j) m(j) += utt.audio[(size_t)j];
          ++n;
        }
    return Eigen::VectorXd(m / std::max(1, n));
  };
  for (int c = 0; c < 4; ++c) {
    const Eigen::VectorXd ma = class_mean(a, c);
    const Eigen::VectorXd mb = class_mean(b, c);
    const double cos = ma.dot(mb) / (ma.norm() * mb.norm());
    CHECK(cos > 0.9);
  }

  // And with a different structure seed the geometry moves.
  cfg.structure_seed = 777;
  const Dataset c2 = generate_synthetic(cfg);
  const Eigen::VectorXd ma = class_mean(a, 0);
  const Eigen::VectorXd mc = class_mean(c2, 0);
  CHECK(ma.dot(mc) / (ma.norm() * mc.norm()) < 0.5);
}

TEST_CASE("write/read round trip preserves the dataset exactly") {
  SynthConfig cfg = small_config();
  Dataset ds = generate_synthetic(cfg);
  ds.split = Split::Val;
  const fs::path path = temp_file("convemo-roundtrip");
  write_dataset(ds, path);
  const Dataset back = read_dataset(path);
  CHECK(back == ds);
  fs::remove(path);
}

TEST_CASE("reading a malformed line reports the line number") {
  const fs::path path = temp_file("convemo-malformed");
  {
    std::ofstream out(path);
    out << R"({"audio_dim":100,"video_dim":512,"num_classes":4,"num_speakers":2})"
        << "\n";
    out << "this is not json\n";
  }
  bool threw = false;
  try {
    read_dataset(path);
  } catch (const IoError& e) {
    threw = true;
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  CHECK(threw);
  fs::remove(path);
}

TEST_CASE("reading a missing file is an io error") {
  CHECK_THROWS_AS(read_dataset("/nonexistent/convemo-nope.jsonl"), IoError);
}

TEST_CASE("validate pinpoints a dimension violation") {
  Dataset ds = generate_synthetic(small_config());
  ds.conversations[3].utterances[2].audio.resize(7);
  const auto violations = validate(ds);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].conv_id == ds.conversations[3].conv_id);
  CHECK(violations[0].utterance_index == 2);
  CHECK(violations[0].field == "audio");
}

TEST_CASE("validate pinpoints a label violation") {
  Dataset ds = generate_synthetic(small_config());
  ds.conversations[0].utterances[0].label = 9;
  const auto violations = validate(ds);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].field == "label");
  CHECK(violations[0].utterance_index == 0);
}

TEST_CASE("validate pinpoints a speaker violation") {
  Dataset ds = generate_synthetic(small_config());
  ds.conversations[1].utterances[1].speaker = 5;
  const auto violations = validate(ds);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].field == "speaker");
}

TEST_CASE("synth config validation rejects bad fields") {
  SynthConfig cfg = small_config();
  cfg.min_len = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.max_len = 3;  // < min_len
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.audio_frac = {0.5};  // wrong length
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.emotion_persistence = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.feature_bias = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.video_redundancy = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.video_redundancy = -0.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("video redundancy leaves the audio stream untouched") {
  SynthConfig cfg = small_config();
  cfg.video_redundancy = 0.0;
  const Dataset indep = generate_synthetic(cfg);
  cfg.video_redundancy = 1.0;
  const Dataset redund = generate_synthetic(cfg);
  REQUIRE(indep.conversations.size() == redund.conversations.size());
  bool video_differs = false;
  for (size_t k = 0; k < indep.conversations.size(); ++k) {
    const auto& ca = indep.conversations[k].utterances;
    const auto& cb = redund.conversations[k].utterances;
    REQUIRE(ca.size() == cb.size());
    for (size_t t = 0; t < ca.size(); ++t) {
      CHECK(ca[t].audio == cb[t].audio);
      CHECK(ca[t].label == cb[t].label);
      if (ca[t].video != cb[t].video) video_differs = true;
    }
  }
  CHECK(video_differs);
}

TEST_CASE("fully redundant video is an affine function of audio") {
  // With video_redundancy = 1 every video vector must equal a fixed linear
  // map of its audio vector plus a constant. Fit that map by least squares
  // across utterances and check the residual is numerically zero — and that
  // the same fit on an independent-video corpus leaves noise-sized residual.
  SynthConfig cfg = small_config();
  cfg.n_conversations = 40;  // ~400 utterances >> audio_dim + 1 unknowns
  auto max_residual = [](const Dataset& ds) {
    Eigen::MatrixXd x;  // audio + bias column
    std::vector<int> labels;
    pool(ds, true, x, labels);
    Eigen::MatrixXd v(x.rows(), ds.header.video_dim);
    Eigen::Index row = 0;
    for (const auto& conv : ds.conversations)
      for (const auto& utt : conv.utterances) {
        for (int j = 0; j < ds.header.video_dim; ++j)
          v(row, j) = utt.video[(size_t)j];
        ++row;
      }
    const Eigen::MatrixXd w =
        (x.transpose() * x).ldlt().solve(x.transpose() * v);
    return (x * w - v).cwiseAbs().maxCoeff();
  };

  cfg.video_redundancy = 1.0;
  CHECK(max_residual(generate_synthetic(cfg)) < 1e-8);
  cfg.video_redundancy = 0.0;
  CHECK(max_residual(generate_synthetic(cfg)) > 0.5);
}

TEST_CASE("fully redundant video adds no probe accuracy over audio") {
  SynthConfig cfg;
  cfg.n_conversations = 200;
  cfg.video_redundancy = 1.0;
  cfg.seed = 42;
  const Dataset train = generate_synthetic(cfg);
  cfg.seed = 1042;
  const Dataset test = generate_synthetic(cfg);
  const double acc_av = ridge_probe_accuracy(train, test, false);
  const double acc_a = ridge_probe_accuracy(train, test, true);
  INFO("probe accuracy av=", acc_av, " audio=", acc_a);
  CHECK(acc_a > 0.5);
  CHECK(acc_av <= acc_a + 0.02);
}

TEST_CASE("split names round trip") {
  for (Split s : {Split::None, Split::Train, Split::Val, Split::Test})
    CHECK(split_from_name(split_name(s)) == s);
  CHECK_THROWS_AS(split_from_name("bogus"), ValidationError);
}

TEST_CASE("project_features matches a scalar triple-loop oracle") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int target = 16;
  ProjectionMatrix proj;
  proj.weights.resize(kProjectionSourceDim, target);
  proj.bias.resize(target);
  for (int i = 0; i < kProjectionSourceDim; ++i)
    for (int j = 0; j < target; ++j) proj.weights(i, j) = gauss(gen);
  for (int j = 0; j < target; ++j) proj.bias(j) = gauss(gen);
  Eigen::VectorXd raw(kProjectionSourceDim);
  for (int i = 0; i < kProjectionSourceDim; ++i) raw(i) = gauss(gen);

  const Eigen::VectorXd out = project_features(raw, proj);
  REQUIRE(out.size() == target);
  for (int j = 0; j < target; ++j) {
    double acc = proj.bias(j);
    for (int i = 0; i < kProjectionSourceDim; ++i)
      acc += raw(i) * proj.weights(i, j);
    CHECK(out(j) == doctest::Approx(acc).epsilon(1e-6));
  }
}

TEST_CASE("project_features is affine") {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ProjectionMatrix proj;
  proj.weights = Eigen::MatrixXd::NullaryExpr(
      kProjectionSourceDim, 8, [&]() { return gauss(gen); });
  proj.bias = Eigen::VectorXd::NullaryExpr(8, [&]() { return gauss(gen); });
  Eigen::VectorXd u = Eigen::VectorXd::NullaryExpr(
      kProjectionSourceDim, [&]() { return gauss(gen); });
  Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(
      kProjectionSourceDim, [&]() { return gauss(gen); });

  // f(u+v) - f(0) = (f(u) - f(0)) + (f(v) - f(0)) for an affine map.
  const Eigen::VectorXd f0 =
      project_features(Eigen::VectorXd::Zero(kProjectionSourceDim), proj);
  const Eigen::VectorXd lhs = project_features(u + v, proj) - f0;
  const Eigen::VectorXd rhs =
      (project_features(u, proj) - f0) + (project_features(v, proj) - f0);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("project_features rejects wrong dimensions") {
  ProjectionMatrix proj;
  proj.weights = Eigen::MatrixXd::Zero(kProjectionSourceDim, 8);
  proj.bias = Eigen::VectorXd::Zero(8);
  CHECK_THROWS_AS(project_features(Eigen::VectorXd::Zero(10), proj),
                  ValidationError);
  proj.bias = Eigen::VectorXd::Zero(9);
  CHECK_THROWS_AS(
      project_features(Eigen::VectorXd::Zero(kProjectionSourceDim), proj),
      ValidationError);
}
