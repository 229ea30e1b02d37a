#include "expbert/experiment_config.hpp"

#include <fstream>

#include "expbert/error.hpp"
#include "expbert/json_io.hpp"

namespace expbert {

using nlohmann::json;

namespace {

template <typename T>
T get_field(const json& j, const char* key, const std::string& context) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(context + "." + key + ": " + e.what());
  }
}

template <typename T>
void read_optional(const json& j, const char* key, T& out, const std::string& context) {
  if (j.contains(key)) out = get_field<T>(j, key, context);
}

void require_exists(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::exists(p)) throw ConfigError(what + " not found: " + p.string());
}

}  // namespace

std::string_view protocol_name(Protocol protocol) {
  return protocol == Protocol::kCiRuns ? "ci_runs" : "tacred_median";
}

Protocol parse_protocol(std::string_view name) {
  if (name == "ci_runs") return Protocol::kCiRuns;
  if (name == "tacred_median") return Protocol::kTacredMedian;
  throw ConfigError("unknown protocol \"" + std::string(name) + "\" (expected ci_runs or tacred_median)");
}

std::filesystem::path ExperimentConfig::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

json to_json(const InterpreterSpec& s) {
  json dicts = json::array();
  for (const auto& [name, path] : s.dictionaries) dicts.push_back({{"name", name}, {"path", path.generic_string()}});
  return {{"kind", kind_name(s.kind)},
          {"dim", s.dim},
          {"endpoint", s.endpoint},
          {"path", s.path.generic_string()},
          {"seed", s.seed},
          {"batch_size", s.batch_size},
          {"max_retries", s.max_retries},
          {"initial_backoff_ms", s.initial_backoff.count()},
          {"dictionaries", dicts}};
}

InterpreterSpec interpreter_spec_from_json(const json& j, const std::string& context) {
  require_known_keys(j,
                     {"kind", "dim", "endpoint", "path", "seed", "batch_size", "max_retries", "initial_backoff_ms",
                      "dictionaries"},
                     context);
  InterpreterSpec s;
  s.kind = parse_interpreter_kind(get_field<std::string>(j, "kind", context));
  read_optional(j, "dim", s.dim, context);
  read_optional(j, "endpoint", s.endpoint, context);
  if (j.contains("path")) s.path = get_field<std::string>(j, "path", context);
  read_optional(j, "seed", s.seed, context);
  read_optional(j, "batch_size", s.batch_size, context);
  read_optional(j, "max_retries", s.max_retries, context);
  if (j.contains("initial_backoff_ms")) {
    s.initial_backoff = std::chrono::milliseconds(get_field<std::int64_t>(j, "initial_backoff_ms", context));
  }
  if (j.contains("dictionaries")) {
    for (const auto& d : j.at("dictionaries")) {
      require_known_keys(d, {"name", "path"}, context + ".dictionaries");
      s.dictionaries.emplace_back(get_field<std::string>(d, "name", context + ".dictionaries"),
                                  get_field<std::string>(d, "path", context + ".dictionaries"));
    }
  }
  return s;
}

json to_json(const GridSpec& g) {
  return {{"hidden_layers", g.hidden_layers},
          {"hidden_dim", g.hidden_dims},
          {"dropout", g.dropouts},
          {"project", g.project},
          {"batch_size", g.batch_sizes}};
}

GridSpec grid_spec_from_json(const json& j) {
  require_known_keys(j, {"hidden_layers", "hidden_dim", "dropout", "project", "batch_size"}, "grid");
  GridSpec g;
  read_optional(j, "hidden_layers", g.hidden_layers, "grid");
  read_optional(j, "hidden_dim", g.hidden_dims, "grid");
  read_optional(j, "dropout", g.dropouts, "grid");
  read_optional(j, "project", g.project, "grid");
  read_optional(j, "batch_size", g.batch_sizes, "grid");
  if (g.hidden_layers.empty() || g.hidden_dims.empty() || g.dropouts.empty() || g.project.empty() ||
      g.batch_sizes.empty()) {
    throw ConfigError("grid: every axis needs at least one value");
  }
  return g;
}

json to_json(const AblationPlan& p) {
  return {{"mode", ablation_mode_name(p.mode)}, {"group_order", p.group_order}, {"random_seed", p.random_seed},
          {"vocabulary", p.vocabulary},         {"k_random", p.k_random},       {"runs", p.runs}};
}

AblationPlan ablation_plan_from_json(const json& j) {
  require_known_keys(j, {"mode", "group_order", "random_seed", "vocabulary", "k_random", "runs"}, "ablation");
  AblationPlan p;
  p.mode = parse_ablation_mode(get_field<std::string>(j, "mode", "ablation"));
  read_optional(j, "group_order", p.group_order, "ablation");
  read_optional(j, "random_seed", p.random_seed, "ablation");
  read_optional(j, "vocabulary", p.vocabulary, "ablation");
  read_optional(j, "k_random", p.k_random, "ablation");
  read_optional(j, "runs", p.runs, "ablation");
  return p;
}

json to_json(const ExperimentConfig& c) {
  json classifier = to_json(c.classifier);
  classifier.erase("seed");
  json j = {{"version", ExperimentConfig::kVersion},
            {"name", c.name},
            {"dataset", {{"path", c.dataset_path}, {"format", format_extension(c.dataset_format).substr(1)}}},
            {"explanations", c.explanations_path},
            {"u_interpreter", to_json(c.u_interpreter)},
            {"v_interpreter", c.v_interpreter ? to_json(*c.v_interpreter) : json(nullptr)},
            {"ontology", c.ontology ? to_json(*c.ontology) : json(nullptr)},
            {"grid", to_json(c.grid)},
            {"classifier", classifier},
            {"protocol", protocol_name(c.protocol)},
            {"seeds", c.seeds},
            {"fractions", c.fractions},
            {"sweep_seed", c.sweep_seed},
            {"ablation", c.ablation ? to_json(*c.ablation) : json(nullptr)},
            {"output_dir", c.output_dir},
            {"workers", c.workers},
            {"save_checkpoints", c.save_checkpoints}};
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  require_known_keys(j,
                     {"version", "name", "dataset", "explanations", "u_interpreter", "v_interpreter", "ontology",
                      "grid", "classifier", "protocol", "seeds", "fractions", "sweep_seed", "ablation",
                      "output_dir", "workers", "save_checkpoints"},
                     "config");
  if (!j.contains("version")) throw ConfigError("config: missing \"version\"");
  const int version = get_field<int>(j, "version", "config");
  if (version != ExperimentConfig::kVersion) {
    throw ConfigError("config: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(ExperimentConfig::kVersion) + ")");
  }
  ExperimentConfig c;
  c.base_dir = base_dir;
  read_optional(j, "name", c.name, "config");

  if (!j.contains("dataset")) throw ConfigError("config: missing \"dataset\"");
  const auto& ds = j.at("dataset");
  require_known_keys(ds, {"path", "format"}, "dataset");
  c.dataset_path = get_field<std::string>(ds, "path", "dataset");
  if (ds.contains("format")) c.dataset_format = parse_dataset_format(get_field<std::string>(ds, "format", "dataset"));

  if (j.contains("explanations") && !j.at("explanations").is_null()) {
    c.explanations_path = get_field<std::string>(j, "explanations", "config");
  }
  if (!j.contains("u_interpreter")) throw ConfigError("config: missing \"u_interpreter\"");
  c.u_interpreter = interpreter_spec_from_json(j.at("u_interpreter"), "u_interpreter");
  if (j.contains("v_interpreter") && !j.at("v_interpreter").is_null()) {
    c.v_interpreter = interpreter_spec_from_json(j.at("v_interpreter"), "v_interpreter");
  }
  if (j.contains("ontology") && !j.at("ontology").is_null()) {
    c.ontology = interpreter_spec_from_json(j.at("ontology"), "ontology");
  }
  if (j.contains("grid")) c.grid = grid_spec_from_json(j.at("grid"));
  if (j.contains("classifier")) {
    if (j.at("classifier").contains("seed")) throw ConfigError("classifier: seeds come from the \"seeds\" list");
    c.classifier = mlp_config_from_json(j.at("classifier"));
  }
  if (j.contains("protocol")) c.protocol = parse_protocol(get_field<std::string>(j, "protocol", "config"));
  read_optional(j, "seeds", c.seeds, "config");
  read_optional(j, "fractions", c.fractions, "config");
  read_optional(j, "sweep_seed", c.sweep_seed, "config");
  if (j.contains("ablation") && !j.at("ablation").is_null()) c.ablation = ablation_plan_from_json(j.at("ablation"));
  read_optional(j, "output_dir", c.output_dir, "config");
  read_optional(j, "workers", c.workers, "config");
  read_optional(j, "save_checkpoints", c.save_checkpoints, "config");
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return experiment_config_from_json(j, base);
}

void write_experiment_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << to_json(config).dump(2) << '\n';
  if (!out) throw ConfigError("cannot write " + path.string());
}

void validate(const ExperimentConfig& c) {
  if (c.name.empty()) throw ConfigError("config: name must not be empty");
  if (c.seeds.empty()) throw ConfigError("config: seeds must not be empty");
  if (c.fractions.empty()) throw ConfigError("config: fractions must not be empty");
  for (double f : c.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("config: fraction " + std::to_string(f) + " is outside (0, 1]");
  }
  if (c.workers == 0) throw ConfigError("config: workers must be >= 1");
  if (c.protocol == Protocol::kTacredMedian && c.seeds.size() != 5) {
    throw ConfigError("config: tacred_median needs exactly 5 seeds, got " + std::to_string(c.seeds.size()));
  }
  if (c.protocol == Protocol::kCiRuns && c.seeds.size() < 2) {
    throw ConfigError("config: ci_runs needs at least 2 seeds");
  }
  validate(c.classifier);
  require_exists(c.resolve(c.dataset_path), "dataset directory");
  if (!c.explanations_path.empty()) require_exists(c.resolve(c.explanations_path), "explanation file");

  auto check_spec = [&](InterpreterSpec spec, const std::string& role) {
    if (spec.kind == InterpreterKind::kFeatureStore) spec.path = c.resolve(spec.path);
    for (auto& [name, path] : spec.dictionaries) path = c.resolve(path);
    validate(spec);
    if (spec.kind == InterpreterKind::kFeatureStore) require_exists(spec.path, role + " feature store");
    for (const auto& [name, path] : spec.dictionaries) require_exists(path, role + " dictionary " + name);
  };
  check_spec(c.u_interpreter, "u_interpreter");
  if (c.v_interpreter) check_spec(*c.v_interpreter, "v_interpreter");
  if (c.ontology) {
    if (c.ontology->kind != InterpreterKind::kOntology) throw ConfigError("ontology: kind must be \"ontology\"");
    check_spec(*c.ontology, "ontology");
  }
  if (c.u_interpreter.kind == InterpreterKind::kPattern || c.u_interpreter.kind == InterpreterKind::kOntology) {
    throw ConfigError("u_interpreter: kind " + std::string(kind_name(c.u_interpreter.kind)) +
                      " cannot read label descriptions");
  }
  if (c.ablation) {
    if (c.ablation->runs == 0) throw ConfigError("ablation: runs must be >= 1");
    if (c.ablation->runs > c.seeds.size()) {
      throw ConfigError("ablation: runs (" + std::to_string(c.ablation->runs) + ") exceeds the seed list");
    }
    if (c.ablation->mode == AblationMode::kOntology && !c.ontology) {
      throw ConfigError("ablation: ontology mode needs an \"ontology\" interpreter");
    }
    if (c.ablation->vocabulary != "train") require_exists(c.resolve(c.ablation->vocabulary), "random vocabulary");
  }
}

}  // namespace expbert
