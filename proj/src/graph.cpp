#include "convemo/graph.hpp"

#include "convemo/errors.hpp"

namespace convemo::graph {

void GraphConfig::validate() const {
  if (past_window < 0) throw ValidationError("graph.past_window must be >= 0");
  if (future_window < 0)
    throw ValidationError("graph.future_window must be >= 0");
}

RelationId relation_id(int speaker_src, int speaker_dst, Direction direction,
                       int num_speakers) {
  if (num_speakers <= 0) throw ValidationError("num_speakers must be positive");
  if (direction == Direction::Self) return self_relation_id(num_speakers);
  if (speaker_src < 0 || speaker_src >= num_speakers || speaker_dst < 0 ||
      speaker_dst >= num_speakers)
    throw ValidationError("speaker index out of range for relation id");
  const int dir = direction == Direction::Past ? 0 : 1;
  return dir * num_speakers * num_speakers + speaker_src * num_speakers +
         speaker_dst;
}

int num_relation_ids(int num_speakers) {
  return 2 * num_speakers * num_speakers + 1;
}

RelationId self_relation_id(int num_speakers) {
  return 2 * num_speakers * num_speakers;
}

ConversationGraph build_graph(const corpus::Conversation& conversation,
                              const GraphConfig& config) {
  config.validate();
  const int n = static_cast<int>(conversation.length());
  const int m = conversation.num_speakers;

  ConversationGraph g;
  g.num_nodes = n;
  g.num_relations = num_relation_ids(m);

  for (int v = 0; v < n; ++v) {
    const int sv = conversation.utterances[static_cast<size_t>(v)].speaker;
    if (sv < 0 || sv >= m)
      throw ValidationError("utterance speaker out of range while building graph");
  }

  // Deterministic order: all self-loops first, then for each source node its
  // in-window targets. Edge (u, v) exists iff v - u lies in
  // [-past_window, +future_window]; the relation direction records whether
  // the edge points into the source's past or future.
  for (int v = 0; v < n; ++v)
    g.edges.push_back({v, v, self_relation_id(m)});
  if (config.disjoint) return g;
  for (int u = 0; u < n; ++u) {
    const int su = conversation.utterances[static_cast<size_t>(u)].speaker;
    const int lo = std::max(0, u - config.past_window);
    const int hi = std::min(n - 1, u + config.future_window);
    for (int v = lo; v <= hi; ++v) {
      if (v == u) continue;
      const int sv = conversation.utterances[static_cast<size_t>(v)].speaker;
      const Direction dir = v < u ? Direction::Past : Direction::Future;
      g.edges.push_back({u, v, relation_id(su, sv, dir, m)});
    }
  }
  return g;
}

}  // namespace convemo::graph
