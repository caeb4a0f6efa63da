#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "convemo/autodiff.hpp"
#include "convemo/errors.hpp"
#include "convemo/graph.hpp"
#include "convemo/hash.hpp"
#include "convemo/rng.hpp"
#include "convemo/types.hpp"

namespace convemo::network {

// Fusion -> positional embeddings -> transformer context extractor over the
// conversation -> relational graph convolution -> graph transformer whose
// attention is restricted to graph edges -> tap -> linear classifier. The
// "tap" (per-utterance embedding after the graph block, before the
// classifier) is what distillation compares between teacher and student.
struct ModelConfig {
  std::vector<std::string> modalities = {"audio", "video"};
  int audio_dim = 100;
  int video_dim = 512;
  int hidden_dim = 100;
  int seq_context_layers = 4;
  int gnn_layers = 7;
  int attention_heads = 4;
  int num_classes = 4;
  int num_speakers = 2;
  int max_conv_len = 256;
  double dropout = 0.1;
  std::uint64_t seed = 1;

  bool has_audio() const;
  bool has_video() const;
  int fused_input_dim() const;
  void validate() const;
};

// ---- parameter containers ----
// Templated on the scalar so gradient-check tests can instantiate double.

template <typename S>
struct LinearP {
  MatX<S> weight;  // in×out
  MatX<S> bias;    // 1×out
};

template <typename S>
struct LayerNormP {
  MatX<S> gamma;  // 1×c
  MatX<S> beta;   // 1×c
};

template <typename S>
struct EncoderLayerP {
  LayerNormP<S> ln1;
  LinearP<S> q, k, v, o;
  LayerNormP<S> ln2;
  LinearP<S> ff1, ff2;
};

template <typename S>
struct RgcnP {
  std::vector<MatX<S>> rel;  // one hidden×hidden map per relation id
  MatX<S> bias;              // 1×hidden
  LayerNormP<S> ln;
};

template <typename S>
struct Params {
  LinearP<S> fusion;
  MatX<S> positional;  // max_conv_len×hidden
  std::vector<EncoderLayerP<S>> seq;
  RgcnP<S> rgcn;
  std::vector<EncoderLayerP<S>> graph;
  LayerNormP<S> final_ln;
  LinearP<S> classifier;
};

// Coarse grouping used by gradient checks and reporting.
enum class ParamKind {
  Fusion,
  Positional,
  SeqAttention,
  SeqFfn,
  Rgcn,
  GraphAttention,
  GraphFfn,
  LayerNorm,
  Classifier,
};

std::string param_kind_name(ParamKind kind);

template <typename S>
struct NamedParam {
  std::string name;
  ParamKind kind;
  MatX<S>* mat;
};

// Enumerates every parameter matrix in a fixed, documented order. This order
// defines initialization draws, checkpoint layout, and the tape binding
// below — all three must stay in lockstep.
template <typename S>
std::vector<NamedParam<S>> collect_params(Params<S>& params) {
  std::vector<NamedParam<S>> out;
  auto add = [&out](const std::string& name, ParamKind kind, MatX<S>& m) {
    out.push_back({name, kind, &m});
  };
  auto add_linear = [&](const std::string& prefix, ParamKind kind,
                        LinearP<S>& lin) {
    add(prefix + ".weight", kind, lin.weight);
    add(prefix + ".bias", kind, lin.bias);
  };
  auto add_ln = [&](const std::string& prefix, LayerNormP<S>& ln) {
    add(prefix + ".gamma", ParamKind::LayerNorm, ln.gamma);
    add(prefix + ".beta", ParamKind::LayerNorm, ln.beta);
  };
  auto add_encoder = [&](const std::string& prefix, ParamKind attn_kind,
                         ParamKind ffn_kind, EncoderLayerP<S>& layer) {
    add_ln(prefix + ".ln1", layer.ln1);
    add_linear(prefix + ".attn.q", attn_kind, layer.q);
    add_linear(prefix + ".attn.k", attn_kind, layer.k);
    add_linear(prefix + ".attn.v", attn_kind, layer.v);
    add_linear(prefix + ".attn.o", attn_kind, layer.o);
    add_ln(prefix + ".ln2", layer.ln2);
    add_linear(prefix + ".ffn.1", ffn_kind, layer.ff1);
    add_linear(prefix + ".ffn.2", ffn_kind, layer.ff2);
  };

  add_linear("fusion", ParamKind::Fusion, params.fusion);
  add("positional", ParamKind::Positional, params.positional);
  for (size_t i = 0; i < params.seq.size(); ++i)
    add_encoder("seq." + std::to_string(i), ParamKind::SeqAttention,
                ParamKind::SeqFfn, params.seq[i]);
  for (size_t r = 0; r < params.rgcn.rel.size(); ++r)
    add("rgcn.rel." + std::to_string(r) + ".weight", ParamKind::Rgcn,
        params.rgcn.rel[r]);
  add("rgcn.bias", ParamKind::Rgcn, params.rgcn.bias);
  add_ln("rgcn.ln", params.rgcn.ln);
  for (size_t i = 0; i < params.graph.size(); ++i)
    add_encoder("graph." + std::to_string(i), ParamKind::GraphAttention,
                ParamKind::GraphFfn, params.graph[i]);
  add_ln("final_ln", params.final_ln);
  add_linear("classifier", ParamKind::Classifier, params.classifier);
  return out;
}

// Allocates parameter shapes for the config and fills them: weight matrices
// get scaled-uniform (Glorot) draws, positional embeddings U(-0.05, 0.05),
// layer-norm gains 1 / shifts 0, biases 0. Deterministic in config.seed;
// element draws happen in collect_params order, row-major within a matrix.
template <typename S>
Params<S> init_params(const ModelConfig& config) {
  config.validate();
  const int h = config.hidden_dim;
  const int f = h;  // feed-forward inner width matches the hidden width

  Params<S> p;
  auto linear = [](int in, int out) {
    return LinearP<S>{MatX<S>(in, out), MatX<S>::Zero(1, out)};
  };
  auto ln = [h](int) {
    return LayerNormP<S>{MatX<S>::Ones(1, h), MatX<S>::Zero(1, h)};
  };
  auto encoder = [&]() {
    EncoderLayerP<S> l;
    l.ln1 = ln(h);
    l.q = linear(h, h);
    l.k = linear(h, h);
    l.v = linear(h, h);
    l.o = linear(h, h);
    l.ln2 = ln(h);
    l.ff1 = linear(h, f);
    l.ff2 = linear(f, h);
    return l;
  };

  p.fusion = linear(config.fused_input_dim(), h);
  p.positional = MatX<S>(config.max_conv_len, h);
  p.seq.resize(static_cast<size_t>(config.seq_context_layers));
  for (auto& l : p.seq) l = encoder();
  const int relations = graph::num_relation_ids(config.num_speakers);
  p.rgcn.rel.assign(static_cast<size_t>(relations), MatX<S>(h, h));
  p.rgcn.bias = MatX<S>::Zero(1, h);
  p.rgcn.ln = ln(h);
  p.graph.resize(static_cast<size_t>(config.gnn_layers));
  for (auto& l : p.graph) l = encoder();
  p.final_ln = ln(h);
  p.classifier = linear(h, config.num_classes);

  RandomStream rng(config.seed, 0);
  auto fill_glorot = [&rng](MatX<S>& m) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        m(i, j) = static_cast<S>((2.0 * rng.u01() - 1.0) * limit);
  };
  auto fill_uniform = [&rng](MatX<S>& m, double lo, double hi) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        m(i, j) = static_cast<S>(lo + (hi - lo) * rng.u01());
  };

  for (const NamedParam<S>& np : collect_params(p)) {
    const std::string& name = np.name;
    if (np.kind == ParamKind::Positional) {
      fill_uniform(*np.mat, -0.05, 0.05);
    } else if (name.ends_with(".weight")) {
      fill_glorot(*np.mat);
    }
    // biases stay zero, layer-norm params keep their 1/0 fill
  }
  return p;
}

// FNV-1a over every parameter's bytes in collect_params order; used to prove
// a frozen teacher stayed bit-identical and that two runs produced the same
// model.
template <typename S>
std::string params_hash(Params<S>& params) {
  Fnv1a64 h;
  for (const NamedParam<S>& np : collect_params(params)) {
    h.update(np.name);
    for (Eigen::Index i = 0; i < np.mat->rows(); ++i)
      for (Eigen::Index j = 0; j < np.mat->cols(); ++j) {
        const S v = (*np.mat)(i, j);
        h.update(&v, sizeof(S));
      }
  }
  return h.hex();
}

// ---- tape binding ----

template <typename S>
struct ParamVars {
  std::vector<typename ad::Tape<S>::Var> vars;
};

// Leafs every parameter onto the tape (or, when trainable=false, records
// them as constants — used for the frozen teacher). Order matches
// collect_params.
template <typename S>
ParamVars<S> bind_params(ad::Tape<S>& tape, Params<S>& params,
                         bool trainable = true) {
  ParamVars<S> pv;
  for (const NamedParam<S>& np : collect_params(params))
    pv.vars.push_back(trainable ? tape.leaf(*np.mat) : tape.constant(*np.mat));
  return pv;
}

// ---- graph preparation ----

template <typename S>
struct PreparedGraph {
  int num_nodes = 0;
  // (relation id, row-normalized adjacency): adj(dst, src) = 1/indeg_r(dst)
  // for each edge of that relation. Only relations with edges appear.
  std::vector<std::pair<int, MatX<S>>> rel_adj;
  // Additive attention mask: 0 where an edge (src -> dst, row = dst) exists,
  // -inf elsewhere. Self-loops guarantee no fully-masked row.
  MatX<S> attn_mask;
};

template <typename S>
PreparedGraph<S> prepare_graph(const graph::ConversationGraph& g) {
  const int n = g.num_nodes;
  PreparedGraph<S> pg;
  pg.num_nodes = n;
  const S neg_inf = -std::numeric_limits<S>::infinity();
  pg.attn_mask = MatX<S>::Constant(n, n, neg_inf);

  std::vector<MatX<S>> adj(static_cast<size_t>(g.num_relations));
  std::vector<std::vector<int>> indeg(static_cast<size_t>(g.num_relations));
  for (const graph::Edge& e : g.edges) {
    auto& a = adj[static_cast<size_t>(e.relation)];
    if (a.size() == 0) {
      a = MatX<S>::Zero(n, n);
      indeg[static_cast<size_t>(e.relation)].assign(static_cast<size_t>(n), 0);
    }
    a(e.dst, e.src) += S(1);
    ++indeg[static_cast<size_t>(e.relation)][static_cast<size_t>(e.dst)];
    pg.attn_mask(e.dst, e.src) = S(0);
  }
  for (int r = 0; r < g.num_relations; ++r) {
    auto& a = adj[static_cast<size_t>(r)];
    if (a.size() == 0) continue;
    for (int dst = 0; dst < n; ++dst) {
      const int d = indeg[static_cast<size_t>(r)][static_cast<size_t>(dst)];
      if (d > 0) a.row(dst) /= S(d);
    }
    pg.rel_adj.emplace_back(r, std::move(a));
  }
  return pg;
}

// ---- forward ----

template <typename S>
struct ForwardOutput {
  typename ad::Tape<S>::Var logits;
  typename ad::Tape<S>::Var tap;  // per-utterance embeddings, n×hidden
};

namespace detail {

template <typename S>
using Var = typename ad::Tape<S>::Var;

template <typename S>
struct BoundParams {
  const ModelConfig* cfg;
  const std::vector<Var<S>>* vars;
  size_t cursor = 0;

  Var<S> next() { return (*vars)[cursor++]; }
};

template <typename S>
Var<S> linear(ad::Tape<S>& t, BoundParams<S>& bp, Var<S> x) {
  Var<S> w = bp.next();
  Var<S> b = bp.next();
  return t.add_row_bias(t.matmul(x, w), b);
}

template <typename S>
Var<S> layer_norm(ad::Tape<S>& t, BoundParams<S>& bp, Var<S> x) {
  Var<S> gamma = bp.next();
  Var<S> beta = bp.next();
  return t.layer_norm(x, gamma, beta, S(1e-5));
}

// Multi-head self-attention; `mask` (optional) is an additive n×n constant.
template <typename S>
Var<S> attention(ad::Tape<S>& t, BoundParams<S>& bp, Var<S> x,
                 const MatX<S>* mask) {
  const int h = bp.cfg->hidden_dim;
  const int heads = bp.cfg->attention_heads;
  const int d = h / heads;
  Var<S> q = linear(t, bp, x);
  Var<S> k = linear(t, bp, x);
  Var<S> v = linear(t, bp, x);
  Var<S> mask_var;
  if (mask != nullptr) mask_var = t.constant(*mask);
  Var<S> merged;
  for (int i = 0; i < heads; ++i) {
    Var<S> qi = t.slice_cols(q, static_cast<Eigen::Index>(i) * d, d);
    Var<S> ki = t.slice_cols(k, static_cast<Eigen::Index>(i) * d, d);
    Var<S> vi = t.slice_cols(v, static_cast<Eigen::Index>(i) * d, d);
    Var<S> scores =
        t.scale(t.matmul_nt(qi, ki), S(1.0 / std::sqrt(double(d))));
    if (mask != nullptr) scores = t.add(scores, mask_var);
    Var<S> ctx = t.matmul(t.softmax_rows(scores), vi);
    merged = i == 0 ? ctx : t.concat_cols(merged, ctx);
  }
  return linear(t, bp, merged);  // output projection
}

// Pre-norm transformer layer: x + drop(attn(ln1 x)), then x + drop(ffn(ln2 x)).
template <typename S>
Var<S> encoder_layer(ad::Tape<S>& t, BoundParams<S>& bp, Var<S> x,
                     const MatX<S>* mask, bool train, RandomStream* rng) {
  const double rate = bp.cfg->dropout;
  Var<S> normed = layer_norm(t, bp, x);
  Var<S> att = attention(t, bp, normed, mask);
  x = t.add(x, t.dropout(att, rate, rng, train));
  Var<S> normed2 = layer_norm(t, bp, x);
  Var<S> ff = linear(t, bp, normed2);
  ff = linear(t, bp, t.relu(ff));
  return t.add(x, t.dropout(ff, rate, rng, train));
}

}  // namespace detail

// Fusion of per-utterance modality features: concatenate active modalities
// column-wise (audio first), then one learned linear map to hidden_dim.
// Inactive modalities contribute no columns; a masked-out modality instead
// arrives as explicit zero rows, which keeps both paths numerically
// identical through the fusion product.
template <typename S>
typename ad::Tape<S>::Var fuse_modalities(ad::Tape<S>& t,
                                          const ModelConfig& cfg,
                                          detail::BoundParams<S>& bp,
                                          const MatX<S>& audio,
                                          const MatX<S>& video) {
  typename ad::Tape<S>::Var inputs;
  if (cfg.has_audio() && cfg.has_video()) {
    if (audio.rows() != video.rows())
      throw ValidationError("fuse_modalities: audio/video row counts differ");
    MatX<S> both(audio.rows(), audio.cols() + video.cols());
    both << audio, video;
    inputs = t.constant(both);
  } else if (cfg.has_audio()) {
    inputs = t.constant(audio);
  } else {
    inputs = t.constant(video);
  }
  if (t.value(inputs).cols() != cfg.fused_input_dim())
    throw ValidationError("fuse_modalities: input width does not match config");
  return detail::linear(t, bp, inputs);
}

// Context + graph stages for one conversation. Exposed separately so tests
// can drive the graph stage with handcrafted node features.
template <typename S>
typename ad::Tape<S>::Var context_stage(ad::Tape<S>& t, const ModelConfig& cfg,
                                        detail::BoundParams<S>& bp,
                                        const MatX<S>& audio,
                                        const MatX<S>& video, bool train,
                                        RandomStream* rng) {
  const Eigen::Index n = cfg.has_audio() ? audio.rows() : video.rows();
  if (n > cfg.max_conv_len)
    throw ValidationError("conversation longer than model.max_conv_len");
  typename ad::Tape<S>::Var x = fuse_modalities(t, cfg, bp, audio, video);
  typename ad::Tape<S>::Var pos = bp.next();
  x = t.add(x, t.slice_rows(pos, 0, n));
  for (int i = 0; i < cfg.seq_context_layers; ++i)
    x = detail::encoder_layer(t, bp, x, static_cast<const MatX<S>*>(nullptr),
                              train, rng);
  return x;
}

template <typename S>
typename ad::Tape<S>::Var graph_stage(ad::Tape<S>& t, const ModelConfig& cfg,
                                      detail::BoundParams<S>& bp,
                                      typename ad::Tape<S>::Var x,
                                      const PreparedGraph<S>& pg, bool train,
                                      RandomStream* rng) {
  // Relational graph convolution: mean over same-relation in-neighbors with
  // a per-relation linear map (the self-loop relation supplies the node's
  // own transform), then residual + layer norm.
  const int relations = graph::num_relation_ids(cfg.num_speakers);
  typename ad::Tape<S>::Var agg;
  size_t rel_base = bp.cursor;
  for (const auto& [r, adj] : pg.rel_adj) {
    bp.cursor = rel_base + static_cast<size_t>(r);
    typename ad::Tape<S>::Var w_r = bp.next();
    typename ad::Tape<S>::Var term =
        t.matmul(t.matmul(t.constant(adj), x), w_r);
    agg = agg.valid() ? t.add(agg, term) : term;
  }
  bp.cursor = rel_base + static_cast<size_t>(relations);
  typename ad::Tape<S>::Var bias = bp.next();
  typename ad::Tape<S>::Var out = t.relu(t.add_row_bias(agg, bias));
  x = t.add(x, t.dropout(out, cfg.dropout, rng, train));
  x = detail::layer_norm(t, bp, x);

  for (int i = 0; i < cfg.gnn_layers; ++i)
    x = detail::encoder_layer(t, bp, x, &pg.attn_mask, train, rng);
  return detail::layer_norm(t, bp, x);  // final norm; this is the tap
}

// Number of parameter vars consumed before the graph stage begins (fusion,
// positional table, and the context encoder layers). Lets tests run
// graph_stage directly on handcrafted node features.
inline size_t graph_stage_param_offset(const ModelConfig& cfg) {
  const size_t per_encoder_layer = 16;  // 2 LN pairs + 4 linears + 2 ffn linears
  return 3 + static_cast<size_t>(cfg.seq_context_layers) * per_encoder_layer;
}

template <typename S>
typename ad::Tape<S>::Var run_graph_stage(ad::Tape<S>& t,
                                          const ModelConfig& cfg,
                                          const ParamVars<S>& pv,
                                          typename ad::Tape<S>::Var x,
                                          const PreparedGraph<S>& pg,
                                          bool train = false,
                                          RandomStream* rng = nullptr) {
  detail::BoundParams<S> bp{&cfg, &pv.vars, graph_stage_param_offset(cfg)};
  return graph_stage(t, cfg, bp, x, pg, train, rng);
}

// Full forward pass over one conversation's aligned feature matrices.
// `train` enables dropout (which then consumes from `rng`); eval mode with
// the same inputs is a pure function.
template <typename S>
ForwardOutput<S> forward(ad::Tape<S>& t, const ModelConfig& cfg,
                         const ParamVars<S>& pv, const MatX<S>& audio,
                         const MatX<S>& video, const PreparedGraph<S>& pg,
                         bool train = false, RandomStream* rng = nullptr) {
  cfg.validate();
  detail::BoundParams<S> bp{&cfg, &pv.vars, 0};
  typename ad::Tape<S>::Var x =
      context_stage(t, cfg, bp, audio, video, train, rng);
  if (t.value(x).rows() != pg.num_nodes)
    throw ValidationError("forward: graph node count does not match features");
  typename ad::Tape<S>::Var tap = graph_stage(t, cfg, bp, x, pg, train, rng);
  typename ad::Tape<S>::Var logits = detail::linear(t, bp, tap);
  if (bp.cursor != pv.vars.size())
    throw ValidationError("forward: parameter binding walked out of sync");
  if (!t.value(logits).allFinite() || !t.value(tap).allFinite())
    throw NumericError("forward: non-finite activations");
  return {logits, tap};
}

}  // namespace convemo::network
