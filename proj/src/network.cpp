#include "convemo/network.hpp"

#include <algorithm>

namespace convemo::network {

bool ModelConfig::has_audio() const {
  return std::find(modalities.begin(), modalities.end(), "audio") !=
         modalities.end();
}

bool ModelConfig::has_video() const {
  return std::find(modalities.begin(), modalities.end(), "video") !=
         modalities.end();
}

int ModelConfig::fused_input_dim() const {
  int dim = 0;
  if (has_audio()) dim += audio_dim;
  if (has_video()) dim += video_dim;
  return dim;
}

void ModelConfig::validate() const {
  if (modalities.empty())
    throw ValidationError("model.modalities must name at least one modality");
  for (const auto& m : modalities)
    if (m != "audio" && m != "video")
      throw ValidationError("model.modalities: unknown modality '" + m + "'");
  if (std::count(modalities.begin(), modalities.end(), "audio") > 1 ||
      std::count(modalities.begin(), modalities.end(), "video") > 1)
    throw ValidationError("model.modalities lists a modality twice");
  if (has_audio() && audio_dim < 1)
    throw ValidationError("model.audio_dim must be >= 1");
  if (has_video() && video_dim < 1)
    throw ValidationError("model.video_dim must be >= 1");
  if (hidden_dim < 1) throw ValidationError("model.hidden_dim must be >= 1");
  if (seq_context_layers < 1)
    throw ValidationError("model.seq_context_layers must be >= 1");
  if (gnn_layers < 1) throw ValidationError("model.gnn_layers must be >= 1");
  if (attention_heads < 1)
    throw ValidationError("model.attention_heads must be >= 1");
  if (hidden_dim % attention_heads != 0)
    throw ValidationError(
        "model.hidden_dim must be divisible by model.attention_heads");
  if (num_classes < 2) throw ValidationError("model.num_classes must be >= 2");
  if (num_speakers < 1)
    throw ValidationError("model.num_speakers must be >= 1");
  if (max_conv_len < 1)
    throw ValidationError("model.max_conv_len must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ValidationError("model.dropout must be in [0, 1)");
}

std::string param_kind_name(ParamKind kind) {
  switch (kind) {
    case ParamKind::Fusion: return "fusion";
    case ParamKind::Positional: return "positional";
    case ParamKind::SeqAttention: return "seq_attention";
    case ParamKind::SeqFfn: return "seq_ffn";
    case ParamKind::Rgcn: return "rgcn";
    case ParamKind::GraphAttention: return "graph_attention";
    case ParamKind::GraphFfn: return "graph_ffn";
    case ParamKind::LayerNorm: return "layer_norm";
    case ParamKind::Classifier: return "classifier";
  }
  throw ValidationError("unknown param kind");
}

}  // namespace convemo::network
