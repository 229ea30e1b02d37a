#include "expbert/json_io.hpp"

#include "expbert/error.hpp"

namespace expbert {

using nlohmann::json;

void require_known_keys(const json& object, std::initializer_list<const char*> allowed, const std::string& context) {
  if (!object.is_object()) throw ConfigError(context + ": expected an object");
  for (const auto& [key, value] : object.items()) {
    bool known = false;
    for (const char* name : allowed) known = known || key == name;
    if (!known) throw ConfigError(context + ": unknown key \"" + key + "\"");
  }
}

json to_json(const MlpConfig& c) {
  return {{"hidden_layers", c.hidden_layers},
          {"hidden_dim", c.hidden_dim},
          {"dropout", c.dropout},
          {"project", c.project},
          {"projection_dim", c.projection_dim},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience ? json(*c.patience) : json(nullptr)},
          {"seed", c.seed}};
}

MlpConfig mlp_config_from_json(const json& j, const MlpConfig& base) {
  require_known_keys(j,
                     {"hidden_layers", "hidden_dim", "dropout", "project", "projection_dim", "batch_size",
                      "learning_rate", "beta1", "beta2", "epsilon", "max_epochs", "patience", "seed"},
                     "classifier");
  MlpConfig c = base;
  try {
    c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.dropout = j.value("dropout", c.dropout);
    c.project = j.value("project", c.project);
    c.projection_dim = j.value("projection_dim", c.projection_dim);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    if (j.contains("patience")) {
      c.patience = j["patience"].is_null() ? std::nullopt : std::optional<int>(j["patience"].get<int>());
    }
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("classifier: ") + e.what());
  }
  validate(c);
  return c;
}

json to_json(const RunResult& r) {
  return {{"config_hash", r.config_hash},
          {"seed", r.seed},
          {"best_epoch", r.best_epoch},
          {"epochs_run", r.epochs_run},
          {"val_f1_curve", r.val_f1_curve},
          {"train_loss_curve", r.train_loss_curve},
          {"early_stopped_val_f1", r.early_stopped_val_f1},
          {"test_f1", r.test_f1}};
}

RunResult run_result_from_json(const json& j) {
  try {
    RunResult r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.epochs_run = j.at("epochs_run").get<int>();
    r.val_f1_curve = j.at("val_f1_curve").get<std::vector<double>>();
    r.train_loss_curve = j.at("train_loss_curve").get<std::vector<double>>();
    r.early_stopped_val_f1 = j.at("early_stopped_val_f1").get<double>();
    r.test_f1 = j.at("test_f1").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run result: ") + e.what());
  }
}

json to_json(const AggregateResult& a) {
  return {{"protocol", a.protocol}, {"mean_f1", a.mean}, {"ci_half_width", a.ci_half_width}, {"runs", a.runs}};
}

json to_json(std::span<const Block> layout) {
  json out = json::array();
  for (const auto& b : layout) out.push_back({{"source_id", b.source_id}, {"offset", b.offset}, {"length", b.length}});
  return out;
}

std::vector<Block> layout_from_json(const json& j) {
  std::vector<Block> out;
  try {
    for (const auto& b : j) {
      out.push_back({b.at("source_id").get<std::string>(), b.at("offset").get<std::size_t>(),
                     b.at("length").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed layout: ") + e.what());
  }
  return out;
}

}  // namespace expbert
