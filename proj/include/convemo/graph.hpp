#pragma once

#include <vector>

#include "convemo/corpus.hpp"

namespace convemo::graph {

// Temporal utterance graph: each utterance connects to its `past_window`
// precursors and `future_window` successors, plus a self-loop. Disjoint
// mode keeps only the self-loops, which turns the downstream graph block
// into a per-utterance feed-forward map.
struct GraphConfig {
  int past_window = 5;
  int future_window = 5;
  bool disjoint = false;

  void validate() const;
};

enum class Direction { Past, Future, Self };

// Relation ids encode (speaker_of_src, speaker_of_dst, direction) for
// past/future edges; all self-loops share one reserved id. For M speakers
// ids lie in [0, 2*M*M], so there are 2*M*M + 1 of them.
using RelationId = int;

RelationId relation_id(int speaker_src, int speaker_dst, Direction direction,
                       int num_speakers);
int num_relation_ids(int num_speakers);
RelationId self_relation_id(int num_speakers);

struct Edge {
  int src = 0;
  int dst = 0;
  RelationId relation = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct ConversationGraph {
  int num_nodes = 0;
  int num_relations = 0;
  std::vector<Edge> edges;
};

ConversationGraph build_graph(const corpus::Conversation& conversation,
                              const GraphConfig& config);

}  // namespace convemo::graph
