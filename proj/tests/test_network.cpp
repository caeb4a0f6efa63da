#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "convemo/autodiff.hpp"
#include "convemo/graph.hpp"
#include "convemo/network.hpp"
#include "convemo/rng.hpp"

using namespace convemo;
using namespace convemo::network;

namespace {

using Mat = Eigen::MatrixXd;
using TapeD = ad::Tape<double>;

std::mt19937_64 g_gen(202406);

Mat random_mat(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = gauss(g_gen);
  return m;
}

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.modalities = {"audio", "video"};
  cfg.audio_dim = 5;
  cfg.video_dim = 7;
  cfg.hidden_dim = 8;
  cfg.seq_context_layers = 1;
  cfg.gnn_layers = 1;
  cfg.attention_heads = 2;
  cfg.num_classes = 4;
  cfg.num_speakers = 2;
  cfg.max_conv_len = 8;
  cfg.dropout = 0.0;
  cfg.seed = 5;
  return cfg;
}

corpus::Conversation skeleton(const std::vector<int>& speakers) {
  corpus::Conversation conv;
  conv.conv_id = "t";
  conv.num_speakers = 2;
  for (size_t i = 0; i < speakers.size(); ++i) {
    corpus::Utterance u;
    u.index = static_cast<int>(i);
    u.speaker = speakers[i];
    conv.utterances.push_back(u);
  }
  return conv;
}

struct ToyInputs {
  Mat audio;
  Mat video;
  PreparedGraph<double> pg;
  std::vector<int> labels;
};

ToyInputs toy_inputs(const ModelConfig& cfg, bool disjoint = false) {
  ToyInputs in;
  in.audio = random_mat(3, cfg.audio_dim);
  in.video = random_mat(3, cfg.video_dim);
  in.labels = {1, 0, 2};
  const auto g = graph::build_graph(skeleton({0, 1, 0}), {5, 5, disjoint});
  in.pg = prepare_graph<double>(g);
  return in;
}

}  // namespace

TEST_CASE("init_params is deterministic and seed-sensitive") {
  ModelConfig cfg;  // defaults: hidden 100, 4+7 layers, 4 heads
  auto a = init_params<float>(cfg);
  auto b = init_params<float>(cfg);
  CHECK(params_hash(a) == params_hash(b));
  cfg.seed = 2;
  auto c = init_params<float>(cfg);
  CHECK(params_hash(a) != params_hash(c));
}

TEST_CASE("default config shapes: classifier is hidden x classes") {
  ModelConfig cfg;
  auto p = init_params<float>(cfg);
  CHECK(p.classifier.weight.rows() == 100);
  CHECK(p.classifier.weight.cols() == 4);
  CHECK(p.fusion.weight.rows() == 612);  // audio 100 + video 512
  CHECK(p.fusion.weight.cols() == 100);
  CHECK(p.positional.rows() == cfg.max_conv_len);
  CHECK(p.rgcn.rel.size() == 9);  // two speakers: 2*4+1 relations
  CHECK(p.seq.size() == 4);
  CHECK(p.graph.size() == 7);
}

TEST_CASE("layer norm and bias parameters initialize to identity/zero") {
  auto p = init_params<double>(toy_config());
  CHECK(p.seq[0].ln1.gamma.isOnes());
  CHECK(p.seq[0].ln1.beta.isZero());
  CHECK(p.final_ln.gamma.isOnes());
  CHECK(p.fusion.bias.isZero());
  CHECK(p.classifier.bias.isZero());
  CHECK(p.rgcn.bias.isZero());
}

TEST_CASE("config validation rejects bad configurations") {
  ModelConfig cfg = toy_config();
  cfg.modalities = {};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = toy_config();
  cfg.modalities = {"audio", "audio"};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = toy_config();
  cfg.modalities = {"text"};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = toy_config();
  cfg.hidden_dim = 9;  // not divisible by 2 heads
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = toy_config();
  cfg.seq_context_layers = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = toy_config();
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("forward produces one logits/tap row per utterance, all finite") {
  const ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  const ToyInputs in = toy_inputs(cfg);

  TapeD t;
  auto pv = bind_params(t, params);
  const auto out = forward(t, cfg, pv, in.audio, in.video, in.pg);
  CHECK(t.value(out.logits).rows() == 3);
  CHECK(t.value(out.logits).cols() == 4);
  CHECK(t.value(out.tap).rows() == 3);
  CHECK(t.value(out.tap).cols() == 8);
  CHECK(t.value(out.logits).allFinite());
  CHECK(t.value(out.tap).allFinite());
}

TEST_CASE("fusion matches a scalar concatenate-then-affine oracle") {
  const ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  const Mat audio = random_mat(3, cfg.audio_dim);
  const Mat video = random_mat(3, cfg.video_dim);

  TapeD t;
  auto pv = bind_params(t, params);
  detail::BoundParams<double> bp{&cfg, &pv.vars, 0};
  const auto fused = fuse_modalities(t, cfg, bp, audio, video);
  const Mat& got = t.value(fused);

  for (int i = 0; i < 3; ++i)
    for (int o = 0; o < cfg.hidden_dim; ++o) {
      double acc = params.fusion.bias(0, o);
      for (int j = 0; j < cfg.audio_dim; ++j)
        acc += audio(i, j) * params.fusion.weight(j, o);
      for (int j = 0; j < cfg.video_dim; ++j)
        acc += video(i, j) * params.fusion.weight(cfg.audio_dim + j, o);
      CHECK(got(i, o) == doctest::Approx(acc).epsilon(1e-6));
    }
}

TEST_CASE("zero-filled video equals dropping the video block of the fusion") {
  // With video rows zeroed, the fused output must equal bias + audio part
  // alone — the zero-fill mask semantics and the concat are interchangeable.
  const ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  const Mat audio = random_mat(4, cfg.audio_dim);
  const Mat video = Mat::Zero(4, cfg.video_dim);

  TapeD t;
  auto pv = bind_params(t, params);
  detail::BoundParams<double> bp{&cfg, &pv.vars, 0};
  const Mat got = t.value(fuse_modalities(t, cfg, bp, audio, video));

  const Mat audio_block = params.fusion.weight.topRows(cfg.audio_dim);
  Mat expect = audio * audio_block;
  expect.rowwise() += params.fusion.bias.row(0);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("audio-only config ignores the video features entirely") {
  ModelConfig cfg = toy_config();
  cfg.modalities = {"audio"};
  auto params = init_params<double>(cfg);
  const ToyInputs in = toy_inputs(cfg);

  TapeD t1;
  auto pv1 = bind_params(t1, params);
  const auto out1 = forward(t1, cfg, pv1, in.audio, in.video, in.pg);

  TapeD t2;
  auto pv2 = bind_params(t2, params);
  const Mat other_video = random_mat(3, cfg.video_dim);
  const auto out2 = forward(t2, cfg, pv2, in.audio, other_video, in.pg);

  CHECK(t1.value(out1.logits).isApprox(t2.value(out2.logits)));
}

TEST_CASE("eval-mode forward is a pure function") {
  const ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  const ToyInputs in = toy_inputs(cfg);

  auto run = [&] {
    TapeD t;
    auto pv = bind_params(t, params);
    const auto out = forward(t, cfg, pv, in.audio, in.video, in.pg);
    return Mat(t.value(out.logits));
  };
  CHECK(run().isApprox(run()));
}

TEST_CASE("dropout draws do not change eval outputs but do change train outputs") {
  ModelConfig cfg = toy_config();
  cfg.dropout = 0.3;
  auto params = init_params<double>(cfg);
  const ToyInputs in = toy_inputs(cfg);

  RandomStream rng1(5, 1);
  TapeD t1;
  auto pv1 = bind_params(t1, params);
  const auto train_out =
      forward(t1, cfg, pv1, in.audio, in.video, in.pg, true, &rng1);

  TapeD t2;
  auto pv2 = bind_params(t2, params);
  const auto eval_out = forward(t2, cfg, pv2, in.audio, in.video, in.pg);

  CHECK_FALSE(t1.value(train_out.logits).isApprox(t2.value(eval_out.logits)));
}

TEST_CASE("conversations are processed independently of each other") {
  // Forward for conversation A does not read anything from conversation B:
  // running A alone and A after B gives bit-identical outputs.
  const ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  const ToyInputs a = toy_inputs(cfg);
  const ToyInputs b = toy_inputs(cfg);

  auto run_a = [&] {
    TapeD t;
    auto pv = bind_params(t, params);
    return Mat(t.value(forward(t, cfg, pv, a.audio, a.video, a.pg).logits));
  };
  const Mat alone = run_a();
  {
    TapeD t;
    auto pv = bind_params(t, params);
    forward(t, cfg, pv, b.audio, b.video, b.pg);
  }
  const Mat after_b = run_a();
  CHECK(alone == after_b);
}

TEST_CASE("prepare_graph normalizes per-relation rows and masks non-edges") {
  const auto g = graph::build_graph(skeleton({0, 1, 0, 1}), {1, 0, false});
  const auto pg = prepare_graph<double>(g);
  CHECK(pg.num_nodes == 4);

  // Attention mask: row v allows column u iff edge (u -> v) exists.
  // Edges here: self-loops + (u, u-1) for u in 1..3.
  for (int v = 0; v < 4; ++v)
    for (int u = 0; u < 4; ++u) {
      const bool edge = (u == v) || (v == u - 1);
      if (edge)
        CHECK(pg.attn_mask(v, u) == 0.0);
      else
        CHECK(std::isinf(pg.attn_mask(v, u)));
    }

  // Each relation's adjacency rows (for destinations with any in-edge of
  // that relation) sum to exactly 1.
  for (const auto& [r, adj] : pg.rel_adj) {
    for (int v = 0; v < 4; ++v) {
      const double s = adj.row(v).sum();
      if (s != 0.0) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("disjoint graph makes node embeddings independent of other rows") {
  const ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  const auto g = graph::build_graph(skeleton({0, 1, 0, 1}), {5, 5, true});
  const auto pg = prepare_graph<double>(g);

  Mat x = random_mat(4, cfg.hidden_dim);
  auto tap_of = [&](const Mat& features) {
    TapeD t;
    auto pv = bind_params(t, params);
    auto tap = run_graph_stage(t, cfg, pv, t.leaf(features), pg);
    return Mat(t.value(tap));
  };
  const Mat base = tap_of(x);
  Mat perturbed = x;
  perturbed.row(2).array() += 3.0;
  const Mat after = tap_of(perturbed);
  // Row 2 changes, every other row is untouched.
  CHECK_FALSE(after.row(2).isApprox(base.row(2)));
  for (int i : {0, 1, 3})
    CHECK(after.row(i).isApprox(base.row(i), 1e-12));
}

TEST_CASE("connected graph propagates perturbations to neighbors") {
  const ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  const auto g = graph::build_graph(skeleton({0, 1, 0, 1}), {5, 5, false});
  const auto pg = prepare_graph<double>(g);

  Mat x = random_mat(4, cfg.hidden_dim);
  auto tap_of = [&](const Mat& features) {
    TapeD t;
    auto pv = bind_params(t, params);
    auto tap = run_graph_stage(t, cfg, pv, t.leaf(features), pg);
    return Mat(t.value(tap));
  };
  const Mat base = tap_of(x);
  Mat perturbed = x;
  perturbed.row(2).array() += 3.0;
  const Mat after = tap_of(perturbed);
  CHECK_FALSE(after.row(0).isApprox(base.row(0), 1e-9));
}

TEST_CASE("single utterance with a disjoint graph still works") {
  ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  const auto g = graph::build_graph(skeleton({0}), {5, 5, true});
  const auto pg = prepare_graph<double>(g);

  TapeD t;
  auto pv = bind_params(t, params);
  const auto out = forward(t, cfg, pv, random_mat(1, cfg.audio_dim),
                           random_mat(1, cfg.video_dim), pg);
  CHECK(t.value(out.logits).rows() == 1);
  CHECK(t.value(out.logits).allFinite());
}

TEST_CASE("graph stage offset lines up with the parameter layout") {
  const ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  auto named = collect_params(params);
  const size_t off = graph_stage_param_offset(cfg);
  REQUIRE(off < named.size());
  CHECK(named[off].name == "rgcn.rel.0.weight");
  CHECK(named[2].name == "positional");
}

TEST_CASE("mismatched graph size is rejected") {
  const ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  const auto g = graph::build_graph(skeleton({0, 1}), {5, 5, false});
  const auto pg = prepare_graph<double>(g);
  TapeD t;
  auto pv = bind_params(t, params);
  CHECK_THROWS_AS(forward(t, cfg, pv, random_mat(3, cfg.audio_dim),
                          random_mat(3, cfg.video_dim), pg),
                  ValidationError);
}

TEST_CASE("conversations beyond max_conv_len are rejected") {
  ModelConfig cfg = toy_config();
  cfg.max_conv_len = 2;
  auto params = init_params<double>(cfg);
  const ToyInputs in = toy_inputs(cfg);
  TapeD t;
  auto pv = bind_params(t, params);
  CHECK_THROWS_AS(forward(t, cfg, pv, in.audio, in.video, in.pg),
                  ValidationError);
}

TEST_CASE("non-finite parameters fail fast with a numeric error") {
  const ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  params.classifier.weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const ToyInputs in = toy_inputs(cfg);
  TapeD t;
  auto pv = bind_params(t, params);
  CHECK_THROWS_AS(forward(t, cfg, pv, in.audio, in.video, in.pg),
                  NumericError);
}

// ---- gradient correctness against central finite differences ----

namespace {

// Full-model loss for the finite-difference harness: CE plus the triplet
// term so every tap-path gradient is exercised too.
double loss_value(const ModelConfig& cfg, Params<double>& params,
                  const ToyInputs& in, const Mat& pos, const Mat& neg) {
  TapeD t;
  auto pv = bind_params(t, params);
  const auto out = forward(t, cfg, pv, in.audio, in.video, in.pg);
  auto ce = t.cross_entropy_mean(out.logits, in.labels);
  auto tri = t.triplet_mean(out.tap, pos, neg, 1.0, 2.0);
  return t.value(t.add(ce, tri))(0, 0);
}

}  // namespace

TEST_CASE("analytic gradients match finite differences for every layer kind") {
  const ModelConfig cfg = toy_config();
  auto params = init_params<double>(cfg);
  const ToyInputs in = toy_inputs(cfg);
  const Mat pos = random_mat(3, cfg.hidden_dim);
  const Mat neg = random_mat(3, cfg.hidden_dim);

  // Analytic pass.
  TapeD t;
  auto pv = bind_params(t, params);
  const auto out = forward(t, cfg, pv, in.audio, in.video, in.pg);
  auto ce = t.cross_entropy_mean(out.logits, in.labels);
  auto tri = t.triplet_mean(out.tap, pos, neg, 1.0, 2.0);
  auto loss = t.add(ce, tri);
  t.backward(loss);

  auto named = collect_params(params);
  REQUIRE(named.size() == pv.vars.size());

  // Sample up to 50 parameters per layer kind (all of them when a kind has
  // fewer), evenly covering every matrix of that kind.
  std::map<ParamKind, std::vector<std::tuple<size_t, Eigen::Index, Eigen::Index>>>
      pool;
  for (size_t k = 0; k < named.size(); ++k)
    for (Eigen::Index i = 0; i < named[k].mat->rows(); ++i)
      for (Eigen::Index j = 0; j < named[k].mat->cols(); ++j)
        pool[named[k].kind].push_back({k, i, j});

  std::mt19937_64 sampler(99);
  const double h = 1e-4;  // central-difference step
  int checked_kinds = 0;
  for (auto& [kind, entries] : pool) {
    ++checked_kinds;
    std::shuffle(entries.begin(), entries.end(), sampler);
    const size_t n_check = std::min<size_t>(50, entries.size());
    for (size_t e = 0; e < n_check; ++e) {
      const auto [k, i, j] = entries[e];
      const double analytic = t.grad(pv.vars[k])(i, j);

      double& slot = (*named[k].mat)(i, j);
      const double saved = slot;
      slot = saved + h;
      const double up = loss_value(cfg, params, in, pos, neg);
      slot = saved - h;
      const double down = loss_value(cfg, params, in, pos, neg);
      slot = saved;

      const double fd = (up - down) / (2.0 * h);
      const double err = std::abs(analytic - fd);
      const double rel = err / std::max(std::abs(analytic), std::abs(fd));
      INFO("kind=", param_kind_name(kind), " param=", named[k].name, " (", i,
           ",", j, ") analytic=", analytic, " fd=", fd);
      // Relative tolerance 1e-4 with an absolute floor for near-zero
      // gradients, where the quotient is dominated by truncation error.
      const bool ok = err <= 1e-7 || rel <= 1e-4;
      CHECK(ok);
    }
  }
  CHECK(checked_kinds == 9);  // every ParamKind appears in the toy model
}
