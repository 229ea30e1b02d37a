#include "expbert/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "expbert/error.hpp"
#include "expbert/hashing.hpp"
#include "expbert/json_io.hpp"
#include "expbert/representation.hpp"

namespace expbert {

using nlohmann::json;

namespace {

struct Context {
  ExperimentConfig config;
  Dataset dataset;
  std::vector<Explanation> explanations;
  std::filesystem::path out_dir;
};

Context open_context(const ExperimentConfig& config) {
  validate(config);
  Context ctx;
  ctx.config = config;
  ctx.dataset = load_dataset(config.resolve(config.dataset_path), config.dataset_format);
  if (!config.explanations_path.empty()) ctx.explanations = load_explanations(config.resolve(config.explanations_path));
  ctx.out_dir = config.resolve(config.output_dir);
  if (config.ablation) validate(*config.ablation, ctx.explanations);
  return ctx;
}

InterpreterSpec resolved(const ExperimentConfig& config, InterpreterSpec spec) {
  if (!spec.path.empty()) spec.path = config.resolve(spec.path);
  for (auto& [name, path] : spec.dictionaries) path = config.resolve(path);
  return spec;
}

std::vector<TextSource> v_sources(const InterpreterSpec& spec, std::span<const Explanation> explanations) {
  if (spec.kind == InterpreterKind::kPattern) return pattern_sources(extract_patterns(explanations));
  return explanation_sources(explanations);
}

std::vector<TextSource> extra_sources(const InterpreterSpec& spec) {
  std::vector<std::string> names;
  for (const auto& [name, path] : spec.dictionaries) names.push_back(name);
  return dictionary_sources(names);
}

std::size_t worker_count(const ExperimentConfig& config) { return std::max<std::size_t>(1, config.workers); }

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + " is not valid JSON: " + e.what());
  }
}

RoleSummary featurize_role(const Context& ctx, const std::string& role, const InterpreterSpec& spec,
                           std::span<const TextSource> texts, std::ostream& log) {
  const auto interpreter = make_interpreter(resolved(ctx.config, spec));
  RoleSummary summary;
  summary.role = role;
  summary.cache = cache_path(ctx.config, role, spec);
  summary.texts = texts.size();
  summary.dim = interpreter->dim();
  summary.lookups = ctx.dataset.size() * texts.size();
  const auto stats = featurize_corpus(*interpreter, ctx.dataset, texts, summary.cache,
                                      FeaturizeOptions{0, worker_count(ctx.config)});
  summary.rows = stats.rows;
  summary.computed = stats.computed;
  summary.hits = stats.hits;
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %zu texts x dim %zu: %zu rows cached, %zu computed, %zu hits (%.1f%%)",
                role.c_str(), summary.texts, summary.dim, summary.rows, summary.computed, summary.hits,
                summary.lookups ? 100.0 * static_cast<double>(summary.hits) / static_cast<double>(summary.lookups)
                                : 100.0);
  log << line << '\n';
  return summary;
}

std::shared_ptr<const FeatureCache> open_cache(const ExperimentConfig& config, const std::string& role,
                                               const InterpreterSpec& spec) {
  const auto path = cache_path(config, role, spec);
  if (!std::filesystem::exists(path)) {
    throw DataError("feature cache " + path.string() + " is missing; run `expbert featurize` with this config first");
  }
  return std::make_shared<const FeatureCache>(FeatureCache::load(path));
}

// Cached interpreters for each role of an experiment.
struct FeatureStores {
  std::unique_ptr<Interpreter> u;
  std::unique_ptr<Interpreter> v;
  std::unique_ptr<Interpreter> extras;
};

FeatureStores open_stores(const Context& ctx, bool need_v, bool need_extras) {
  const auto& c = ctx.config;
  FeatureStores s;
  s.u = std::make_unique<FeatureStoreInterpreter>(open_cache(c, "u", c.u_interpreter), c.u_interpreter.kind);
  if (need_v) s.v = std::make_unique<FeatureStoreInterpreter>(open_cache(c, "v", c.v_spec()), c.v_spec().kind);
  if (need_extras) {
    s.extras = std::make_unique<FeatureStoreInterpreter>(open_cache(c, "extras", *c.ontology), c.ontology->kind);
  }
  return s;
}

FeatureMatrix with_missing_cache_hint(const FeaturePlan& plan, const std::vector<Instance>& instances) {
  try {
    return build_feature_matrix(plan, instances);
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " (is the cache stale? rerun `expbert featurize`)");
  }
}

TrainingData build_training_data(const Context& ctx, const FeatureStores& stores,
                                  std::span<const Explanation> explanations, bool with_extras) {
  FeaturePlan plan;
  plan.u_sources = label_sources(ctx.dataset.label_space);
  plan.u_interpreter = stores.u.get();
  if (!explanations.empty()) {
    plan.v_sources = v_sources(ctx.config.v_spec(), explanations);
    plan.v_interpreter = stores.v.get();
  }
  if (with_extras) {
    plan.extra_sources = extra_sources(*ctx.config.ontology);
    plan.extra_interpreter = stores.extras.get();
  }
  TrainingData data;
  data.train = with_missing_cache_hint(plan, ctx.dataset.train);
  data.val = with_missing_cache_hint(plan, ctx.dataset.val);
  data.test = with_missing_cache_hint(plan, ctx.dataset.test);
  data.num_classes = ctx.dataset.label_space.size();
  return data;
}

FeatureMatrix select_rows(const FeatureMatrix& m, std::span<const std::size_t> rows) {
  FeatureMatrix out;
  out.layout = m.layout;
  out.x = Matrix(rows.size(), m.x.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(m.x.row(rows[i]).begin(), m.x.cols, out.x.row(i).begin());
    out.labels.push_back(m.labels[rows[i]]);
    out.ids.push_back(m.ids[rows[i]]);
  }
  return out;
}

std::string run_file_name(const RunResult& run) {
  return run.config_hash + "-seed" + std::to_string(run.seed) + ".json";
}

json candidates_json(const GridSelection& selection) {
  json out = json::array();
  for (std::size_t i = 0; i < selection.candidates.size(); ++i) {
    const auto& c = selection.candidates[i];
    json config = to_json(c.config);
    config.erase("seed");
    out.push_back({{"config_hash", config_hash_hex(c.config)},
                   {"config", config},
                   {"selection_score", c.selection_score},
                   {"diverged", c.diverged},
                   {"chosen", i == selection.chosen}});
  }
  return out;
}

std::string summary_line(const std::string& label, const AggregateResult& a) {
  std::ostringstream s;
  s << label << ": ";
  if (a.protocol == "tacred_median") {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.1f", 100.0 * a.mean);
    s << buffer << " (median-validation run of " << a.runs.size() << ")";
  } else {
    s << format_mean_ci(a) << " (" << a.runs.size() << " runs)";
  }
  return s.str();
}

std::vector<std::string> read_vocabulary(const Context& ctx) {
  const auto& plan = *ctx.config.ablation;
  if (plan.vocabulary == "train") return default_random_vocabulary(ctx.dataset);
  std::ifstream in(ctx.config.resolve(plan.vocabulary));
  std::vector<std::string> words;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

std::vector<Explanation> random_set(const Context& ctx) {
  const auto& plan = *ctx.config.ablation;
  const auto vocabulary = read_vocabulary(ctx);
  if (plan.mode == AblationMode::kOrigPlusRandom) {
    return combine_orig_random(ctx.explanations, plan.k_random, vocabulary, plan.random_seed);
  }
  return randomize_explanations(ctx.explanations, vocabulary, plan.random_seed);
}

}  // namespace

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError&) {
    return kExitConfig;
  } catch (const DataError&) {
    return kExitData;
  } catch (const ServiceError&) {
    return kExitService;
  } catch (const DivergenceError&) {
    return kExitDivergence;
  } catch (...) {
    return kExitFailure;
  }
}

double FeaturizeSummary::hit_rate() const {
  std::size_t lookups = 0;
  std::size_t hits = 0;
  for (const auto& r : roles) {
    lookups += r.lookups;
    hits += r.hits;
  }
  return lookups ? static_cast<double>(hits) / static_cast<double>(lookups) : 1.0;
}

std::filesystem::path cache_path(const ExperimentConfig& config, const std::string& role, const InterpreterSpec& spec) {
  auto h = fnv1a64(kind_name(spec.kind));
  h = fnv1a64_u64(spec.dim == 0 ? default_dim(spec.kind) : spec.dim, h);
  if (spec.kind == InterpreterKind::kHash) h = fnv1a64_u64(spec.seed, h);
  if (spec.kind == InterpreterKind::kFeatureStore) h = fnv1a64(spec.path.generic_string(), h);
  for (const auto& [name, path] : spec.dictionaries) h = fnv1a64(path.generic_string(), fnv1a64(name, h));
  return config.resolve(config.output_dir) / "cache" /
         (role + "-" + std::string(kind_name(spec.kind)) + "-" + to_hex(h).substr(0, 8) + ".expf");
}

AggregateResult apply_protocol(Protocol protocol, std::span<const RunResult> runs) {
  std::vector<double> test;
  for (const auto& r : runs) test.push_back(r.test_f1);
  if (protocol == Protocol::kCiRuns) return aggregate_runs(test);
  AggregateResult a;
  a.protocol = "tacred_median";
  a.runs = test;
  a.mean = tacred_protocol(runs);
  return a;
}

FeaturizeSummary cmd_featurize(const ExperimentConfig& config, std::ostream& log) {
  const auto ctx = open_context(config);
  FeaturizeSummary summary;
  summary.instances = ctx.dataset.size();
  log << "featurizing " << summary.instances << " instances of " << config.resolve(config.dataset_path).string()
      << '\n';
  const auto u_texts = label_sources(ctx.dataset.label_space);
  summary.roles.push_back(featurize_role(ctx, "u", config.u_interpreter, u_texts, log));
  if (!ctx.explanations.empty()) {
    const auto texts = v_sources(config.v_spec(), ctx.explanations);
    summary.roles.push_back(featurize_role(ctx, "v", config.v_spec(), texts, log));
  }
  if (config.ontology) {
    const auto texts = extra_sources(*config.ontology);
    summary.roles.push_back(featurize_role(ctx, "extras", *config.ontology, texts, log));
  }
  for (const auto& r : summary.roles) summary.instance_dim += r.texts * r.dim;
  char line[128];
  std::snprintf(line, sizeof line, "per-instance dim %zu, cache hits %.1f%%", summary.instance_dim,
                100.0 * summary.hit_rate());
  log << line << '\n';
  return summary;
}

TrainReport cmd_train(const ExperimentConfig& config, std::ostream& log) {
  const auto ctx = open_context(config);
  const auto stores = open_stores(ctx, !ctx.explanations.empty(), config.ontology.has_value());
  const auto data = build_training_data(ctx, stores, ctx.explanations, config.ontology.has_value());
  const auto configs = config.grid_configs();
  log << "training " << configs.size() << " configs x " << config.seeds.size() << " seeds on "
      << data.train.x.rows << " instances of dim " << data.train.x.cols << '\n';

  TrainReport report;
  report.input_dim = data.train.x.cols;
  report.selection = grid_select(configs, config.seeds, data, metric_for(ctx.dataset.label_space),
                                 GridOptions{worker_count(config), config.save_checkpoints});
  const auto& best = report.selection.best();
  report.aggregate = apply_protocol(config.protocol, best.runs);

  for (const auto& run : best.runs) write_json(ctx.out_dir / "runs" / run_file_name(run), to_json(run));
  for (const auto& model : report.selection.chosen_models) {
    save_checkpoint(model, data.train.layout,
                    ctx.out_dir / "checkpoints" / (config_hash_hex(model.config) + "-seed" +
                                                   std::to_string(model.config.seed)));
  }
  write_json(ctx.out_dir / "grid.json", {{"candidates", candidates_json(report.selection)}});
  json row = to_json(report.aggregate);
  row["model"] = config.name;
  row["dataset"] = ctx.dataset.name;
  row["config_hash"] = config_hash_hex(best.config);
  row["input_dim"] = report.input_dim;
  write_json(ctx.out_dir / "report.json", {{"rows", json::array({row})}});
  log << "chosen config " << config_hash_hex(best.config) << " (mean val F1 " << best.selection_score << ")\n";
  log << summary_line(config.name, report.aggregate) << '\n';
  return report;
}

SweepReport cmd_sweep(const ExperimentConfig& config, std::ostream& log) {
  const auto ctx = open_context(config);
  const auto stores = open_stores(ctx, !ctx.explanations.empty(), config.ontology.has_value());
  const auto full = build_training_data(ctx, stores, ctx.explanations, config.ontology.has_value());
  const auto configs = config.grid_configs();
  const auto metric = metric_for(ctx.dataset.label_space);

  auto fractions = config.fractions;
  std::sort(fractions.begin(), fractions.end());
  fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());

  SweepReport report;
  json points = json::array();
  for (double fraction : fractions) {
    const auto rows = subsample_indices(ctx.dataset.train.size(), fraction, config.sweep_seed);
    TrainingData data = full;
    data.train = select_rows(full.train, rows);

    SweepPoint point;
    point.fraction = fraction;
    point.train_size = rows.size();
    point.train_ids = data.train.ids;
    std::sort(point.train_ids.begin(), point.train_ids.end());
    if (!report.points.empty()) {
      const auto& prev = report.points.back();
      const bool nested = std::includes(point.train_ids.begin(), point.train_ids.end(), prev.train_ids.begin(),
                                        prev.train_ids.end());
      report.nested = report.nested && nested;
      log << "fraction " << prev.fraction << " subset (" << prev.train_size << ") inside fraction " << fraction
          << " subset (" << point.train_size << "): " << (nested ? "yes" : "NO") << '\n';
    }
    const auto selection = grid_select(configs, config.seeds, data, metric, GridOptions{worker_count(config), false});
    point.aggregate = apply_protocol(config.protocol, selection.best().runs);
    point.config_hash = config_hash_hex(selection.best().config);
    log << summary_line("fraction " + std::to_string(fraction) + " (" + std::to_string(point.train_size) +
                            " train)",
                        point.aggregate)
        << '\n';
    json p = to_json(point.aggregate);
    p["fraction"] = fraction;
    p["train_size"] = point.train_size;
    p["config_hash"] = point.config_hash;
    points.push_back(p);
    report.points.push_back(std::move(point));
  }
  if (!report.nested) throw DataError("sweep subsets are not nested");
  write_json(ctx.out_dir / "sweep.json", {{"model", config.name},
                                          {"dataset", ctx.dataset.name},
                                          {"sweep_seed", config.sweep_seed},
                                          {"nested", report.nested},
                                          {"points", points}});
  return report;
}

AblationReport cmd_ablate(const ExperimentConfig& config, std::ostream& log) {
  if (!config.ablation) throw ConfigError("config has no \"ablation\" plan");
  const auto ctx = open_context(config);
  const auto& plan = *config.ablation;
  const std::vector<std::uint64_t> seeds(config.seeds.begin(),
                                         config.seeds.begin() + static_cast<std::ptrdiff_t>(plan.runs));
  const auto configs = config.grid_configs();
  const auto metric = metric_for(ctx.dataset.label_space);

  AblationReport report;
  report.mode = plan.mode;
  auto run_row = [&](const std::string& name, std::size_t n_explanations, const TrainingData& data) {
    const auto selection = grid_select(configs, seeds, data, metric, GridOptions{worker_count(config), false});
    AblationRow row;
    row.name = name;
    row.explanations = n_explanations;
    row.input_dim = data.train.x.cols;
    row.aggregate = apply_protocol(config.protocol, selection.best().runs);
    row.config_hash = config_hash_hex(selection.best().config);
    log << summary_line(name, row.aggregate) << '\n';
    report.rows.push_back(std::move(row));
  };

  switch (plan.mode) {
    case AblationMode::kGroupCumulative: {
      if (ctx.explanations.empty()) throw ConfigError("group ablation needs an explanation file");
      // Features for every explanation are read once; each subset drops columns.
      const auto stores = open_stores(ctx, true, false);
      const auto full = build_training_data(ctx, stores, ctx.explanations, false);
      const auto subsets = cumulative_groups(ctx.explanations, plan.group_order);
      std::set<std::string> all_ids;
      for (const auto& src : v_sources(config.v_spec(), ctx.explanations)) all_ids.insert(src.id);
      for (std::size_t k = 0; k < subsets.size(); ++k) {
        std::set<std::string> keep;
        for (const auto& s : v_sources(config.v_spec(), subsets[k])) keep.insert(s.id);
        std::vector<std::string> drop;
        for (const auto& id : all_ids) {
          if (!keep.count(id)) drop.push_back(id);
        }
        TrainingData data = full;
        data.train = drop_blocks(full.train, drop);
        data.val = drop_blocks(full.val, drop);
        data.test = drop_blocks(full.test, drop);
        run_row(k == 0 ? "NoExp" : "+" + plan.group_order[k - 1], subsets[k].size(), data);
      }
      break;
    }
    case AblationMode::kRandomOnly:
    case AblationMode::kOrigPlusRandom: {
      const auto explanations = random_set(ctx);
      const auto texts = v_sources(config.v_spec(), explanations);
      log << "featurizing " << explanations.size() << " explanations for the random ablation\n";
      featurize_role(ctx, "v", config.v_spec(), texts, log);
      const auto stores = open_stores(ctx, true, false);
      const auto data = build_training_data(ctx, stores, explanations, false);
      run_row(config.name + (plan.mode == AblationMode::kRandomOnly ? " (random)" : " (orig+random)"),
              explanations.size(), data);
      break;
    }
    case AblationMode::kOntology: {
      const auto stores = open_stores(ctx, !ctx.explanations.empty(), true);
      const auto data = build_training_data(ctx, stores, ctx.explanations, true);
      run_row(config.name + "+ontology", ctx.explanations.size(), data);
      break;
    }
  }

  json rows = json::array();
  for (const auto& r : report.rows) {
    json row = to_json(r.aggregate);
    row["name"] = r.name;
    row["explanations"] = r.explanations;
    row["input_dim"] = r.input_dim;
    row["config_hash"] = r.config_hash;
    rows.push_back(row);
  }
  write_json(ctx.out_dir / "ablation.json",
             {{"mode", ablation_mode_name(plan.mode)}, {"dataset", ctx.dataset.name}, {"rows", rows}});
  return report;
}

std::vector<Explanation> cmd_random_explanations(const ExperimentConfig& config, const std::filesystem::path& out,
                                                 std::ostream& log) {
  ExperimentConfig effective = config;
  if (!effective.ablation) effective.ablation.emplace();
  if (effective.ablation->mode != AblationMode::kOrigPlusRandom) effective.ablation->mode = AblationMode::kRandomOnly;
  const auto ctx = open_context(effective);
  if (ctx.explanations.empty()) throw ConfigError("random explanations need an explanation file");
  const auto explanations = random_set(ctx);
  const auto path = out.empty() ? ctx.out_dir / "random_explanations.jsonl" : out;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_explanations(explanations, path);
  log << "wrote " << explanations.size() << " explanations to " << path.string() << '\n';
  return explanations;
}

void cmd_report(const ExperimentConfig& config, std::ostream& out) {
  const auto dir = config.resolve(config.output_dir);
  bool any = false;
  out << "source\tname\tx\tmean_f1\tci_half_width\truns\tprotocol\n";
  auto emit = [&](const std::string& source, const std::string& name, const std::string& x, const json& row) {
    out << source << '\t' << name << '\t' << x << '\t' << row.at("mean_f1").get<double>() << '\t'
        << row.at("ci_half_width").get<double>() << '\t' << row.at("runs").size() << '\t'
        << row.at("protocol").get<std::string>() << '\n';
  };
  out << std::setprecision(6);
  if (std::filesystem::exists(dir / "report.json")) {
    any = true;
    const auto report = read_json(dir / "report.json");
    for (const auto& row : report.at("rows")) {
      emit("train", row.at("model").get<std::string>(), "", row);
    }
  }
  if (std::filesystem::exists(dir / "sweep.json")) {
    any = true;
    const auto sweep = read_json(dir / "sweep.json");
    for (const auto& p : sweep.at("points")) {
      std::ostringstream x;
      x << p.at("fraction").get<double>();
      emit("sweep", sweep.at("model").get<std::string>(), x.str(), p);
    }
  }
  if (std::filesystem::exists(dir / "ablation.json")) {
    any = true;
    const auto ablation = read_json(dir / "ablation.json");
    for (const auto& r : ablation.at("rows")) {
      emit("ablation:" + ablation.at("mode").get<std::string>(), r.at("name").get<std::string>(),
           std::to_string(r.at("explanations").get<std::size_t>()), r);
    }
  }
  if (!any) throw DataError("no results under " + dir.string() + "; run train, sweep or ablate first");
}

}  // namespace expbert
