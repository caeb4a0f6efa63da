#include "convemo/checkpoint.hpp"

#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "convemo/errors.hpp"

namespace convemo::checkpoint {

namespace {

using nlohmann::json;

json model_to_json(const network::ModelConfig& m) {
  return json{{"modalities", m.modalities},
              {"audio_dim", m.audio_dim},
              {"video_dim", m.video_dim},
              {"hidden_dim", m.hidden_dim},
              {"seq_context_layers", m.seq_context_layers},
              {"gnn_layers", m.gnn_layers},
              {"attention_heads", m.attention_heads},
              {"num_classes", m.num_classes},
              {"num_speakers", m.num_speakers},
              {"max_conv_len", m.max_conv_len},
              {"dropout", m.dropout},
              {"seed", m.seed}};
}

network::ModelConfig model_from_json(const json& j) {
  network::ModelConfig m;
  m.modalities = j.at("modalities").get<std::vector<std::string>>();
  m.audio_dim = j.at("audio_dim").get<int>();
  m.video_dim = j.at("video_dim").get<int>();
  m.hidden_dim = j.at("hidden_dim").get<int>();
  m.seq_context_layers = j.at("seq_context_layers").get<int>();
  m.gnn_layers = j.at("gnn_layers").get<int>();
  m.attention_heads = j.at("attention_heads").get<int>();
  m.num_classes = j.at("num_classes").get<int>();
  m.num_speakers = j.at("num_speakers").get<int>();
  m.max_conv_len = j.at("max_conv_len").get<int>();
  m.dropout = j.at("dropout").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

json seeds_to_json(const training::Seeds& s) {
  return json{
      {"init", s.init}, {"data_order", s.data_order}, {"masking", s.masking}};
}

training::Seeds seeds_from_json(const json& j) {
  training::Seeds s;
  s.init = j.at("init").get<std::uint64_t>();
  s.data_order = j.at("data_order").get<std::uint64_t>();
  s.masking = j.at("masking").get<std::uint64_t>();
  return s;
}

}  // namespace

void save(const training::TrainedModel& model,
          const std::filesystem::path& path) {
  json doc;
  doc["format"] = kFormatTag;
  doc["model"] = model_to_json(model.model);
  doc["graph"] = json{{"past_window", model.graph.past_window},
                      {"future_window", model.graph.future_window},
                      {"disjoint", model.graph.disjoint}};
  const training::Provenance& p = model.provenance;
  doc["provenance"] = json{{"mode", p.mode},
                           {"params_hash", p.params_hash},
                           {"config_hash", p.config_hash},
                           {"teacher_params_hash", p.teacher_params_hash},
                           {"seeds", seeds_to_json(p.seeds)},
                           {"epochs_run", p.epochs_run},
                           {"best_epoch", p.best_epoch},
                           {"best_val_f1", p.best_val_f1}};
  json trace = json::array();
  for (const training::EpochTrace& e : model.trace)
    trace.push_back(json{{"epoch", e.epoch},
                         {"train_loss", e.train_loss},
                         {"val_weighted_f1", e.val_weighted_f1}});
  doc["trace"] = trace;

  json params = json::array();
  auto mutable_params = model.params;  // collect_params needs mutable access
  for (const auto& np : network::collect_params(mutable_params)) {
    json entry;
    entry["name"] = np.name;
    entry["rows"] = np.mat->rows();
    entry["cols"] = np.mat->cols();
    json data = json::array();
    for (Eigen::Index i = 0; i < np.mat->rows(); ++i)
      for (Eigen::Index j = 0; j < np.mat->cols(); ++j)
        data.push_back(static_cast<double>((*np.mat)(i, j)));
    entry["data"] = std::move(data);
    params.push_back(std::move(entry));
  }
  doc["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump();
  out << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

training::TrainedModel load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint: " + e.what());
  }

  try {
    const std::string format = doc.at("format").get<std::string>();
    if (format != kFormatTag)
      throw IoError(path.string() + ": unsupported checkpoint format \"" +
                    format + "\" (expected " + kFormatTag + ")");

    training::TrainedModel model;
    model.model = model_from_json(doc.at("model"));
    model.model.validate();
    const json& g = doc.at("graph");
    model.graph.past_window = g.at("past_window").get<int>();
    model.graph.future_window = g.at("future_window").get<int>();
    model.graph.disjoint = g.at("disjoint").get<bool>();
    model.graph.validate();

    const json& p = doc.at("provenance");
    model.provenance.mode = p.at("mode").get<std::string>();
    model.provenance.params_hash = p.at("params_hash").get<std::string>();
    model.provenance.config_hash = p.at("config_hash").get<std::string>();
    model.provenance.teacher_params_hash =
        p.at("teacher_params_hash").get<std::string>();
    model.provenance.seeds = seeds_from_json(p.at("seeds"));
    model.provenance.epochs_run = p.at("epochs_run").get<int>();
    model.provenance.best_epoch = p.at("best_epoch").get<int>();
    model.provenance.best_val_f1 = p.at("best_val_f1").get<double>();

    for (const json& e : doc.at("trace"))
      model.trace.push_back({e.at("epoch").get<int>(),
                             e.at("train_loss").get<double>(),
                             e.at("val_weighted_f1").get<double>()});

    // Allocate the parameter layout from the config, then require the stored
    // entries to line up with it one-for-one.
    model.params = network::init_params<real_t>(model.model);
    auto named = network::collect_params(model.params);
    const json& params = doc.at("params");
    if (params.size() != named.size())
      throw IoError(path.string() + ": checkpoint stores " +
                    std::to_string(params.size()) + " parameters, config needs " +
                    std::to_string(named.size()));
    for (size_t k = 0; k < named.size(); ++k) {
      const json& entry = params[k];
      const std::string name = entry.at("name").get<std::string>();
      if (name != named[k].name)
        throw IoError(path.string() + ": parameter " + std::to_string(k) +
                      " is \"" + name + "\", expected \"" + named[k].name +
                      "\"");
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      MatX<real_t>& m = *named[k].mat;
      if (rows != m.rows() || cols != m.cols())
        throw IoError(path.string() + ": parameter \"" + name +
                      "\" has shape " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", expected " +
                      std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()));
      const json& data = entry.at("data");
      if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw IoError(path.string() + ": parameter \"" + name +
                      "\" data length does not match its shape");
      size_t idx = 0;
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
          m(i, j) = static_cast<real_t>(data[idx++].get<double>());
    }

    const std::string hash = network::params_hash(model.params);
    if (hash != model.provenance.params_hash)
      throw IoError(path.string() +
                    ": parameter hash mismatch (stored provenance says " +
                    model.provenance.params_hash + ", contents hash to " +
                    hash + ")");
    return model;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace convemo::checkpoint
