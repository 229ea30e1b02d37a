#include "expbert/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "expbert/error.hpp"
#include "expbert/experiment_config.hpp"
#include "expbert/interpreters.hpp"
#include "expbert/rng.hpp"
#include "expbert/templating.hpp"

namespace expbert {
namespace {

constexpr const char* kWords[] = {"alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
                                  "india", "juliet", "kilo", "lima", "mike", "november", "oscar", "papa",
                                  "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey", "xray"};
constexpr const char* kNames[] = {"Ada", "Brook", "Cyril", "Dana", "Ezra", "Fern", "Gus", "Hana",
                                  "Ivo", "Jun", "Kai", "Lena", "Milo", "Nia", "Omar", "Pia"};
constexpr const char* kConnectives[] = {"met", "visited", "married", "called", "joined", "left", "saw", "thanked"};

template <std::size_t N>
const char* pick(const char* const (&words)[N], Rng& rng) {
  return words[rng.below(N)];
}

std::string instance_id(const char* split, std::size_t i) {
  char buffer[48];
  std::snprintf(buffer, sizeof buffer, "syn-%s-%06zu", split, i);
  return buffer;
}

}  // namespace

double planted_score(const Instance& instance, const std::vector<Explanation>& explanations,
                     const PlantedOptions& options) {
  double score = 0.0;
  for (const auto& e : explanations) {
    const auto text = instantiate(instance, e).text;
    score += hash_interpret(instance.id, text, options.dim, options.interpreter_seed)[0];
  }
  return score;
}

PlantedCorpus make_planted_corpus(const PlantedOptions& o) {
  if (o.explanations == 0 || o.dim == 0) throw ConfigError("planted corpus needs explanations and a positive dim");
  if (o.min_tokens < 3 || o.max_tokens < o.min_tokens) throw ConfigError("planted corpus token bounds are invalid");
  if (!(o.margin >= 0.0)) throw ConfigError("planted corpus margin must be >= 0");

  PlantedCorpus out;
  out.dataset.name = "synthetic";
  out.dataset.label_space = LabelSpace({{"no_relation", "{o1} and {o2} are unrelated"},
                                        {"related", "{o1} is related to {o2}"}});
  const char* templates[] = {"{o1} {w} {o2}", "{o2} was {w} by {o1}", "{o1} and {o2} {w}", "{w} {o1} {o2}"};
  Rng text_rng(derive_seed(o.corpus_seed, 0));
  for (std::size_t j = 0; j < o.explanations; ++j) {
    std::string t = templates[j % std::size(templates)];
    t.replace(t.find("{w}"), 3, pick(kConnectives, text_rng));
    out.explanations.push_back({"e" + std::to_string(j + 1), t, j % 2 ? "odd" : "even"});
  }

  Rng rng(derive_seed(o.corpus_seed, 1));
  const std::pair<const char*, std::size_t> splits[] = {{"train", o.train}, {"val", o.val}, {"test", o.test}};
  std::size_t serial = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    auto& target = out.dataset.split(kAllSplits[s]);
    std::size_t attempts = 0;
    while (target.size() < splits[s].second) {
      if (++attempts > 100 * splits[s].second + 1000) throw ConfigError("planted corpus margin rejects too much");
      Instance inst;
      inst.id = instance_id(splits[s].first, serial++);
      const std::size_t n = o.min_tokens + static_cast<std::size_t>(rng.below(o.max_tokens - o.min_tokens + 1));
      for (std::size_t t = 0; t < n; ++t) inst.tokens.emplace_back(pick(kWords, rng));
      std::size_t a = static_cast<std::size_t>(rng.below(n));
      std::size_t b = static_cast<std::size_t>(rng.below(n - 1));
      if (b >= a) ++b;
      inst.tokens[a] = pick(kNames, rng);
      inst.tokens[b] = pick(kNames, rng);
      inst.span1 = {a, a};
      inst.span2 = {b, b};
      const double score = planted_score(inst, out.explanations, o);
      if (std::abs(score - o.threshold) < o.margin) continue;
      inst.gold = score > o.threshold ? 1 : 0;
      target.push_back(std::move(inst));
    }
  }
  return out;
}

std::filesystem::path write_planted_fixture(const PlantedOptions& options, const std::filesystem::path& dir) {
  const auto corpus = make_planted_corpus(options);
  std::filesystem::create_directories(dir / "dataset");
  write_dataset(corpus.dataset, dir / "dataset", DatasetFormat::kJsonl);
  write_explanations(corpus.explanations, dir / "explanations.jsonl");

  ExperimentConfig config;
  config.name = "expbert";
  config.dataset_path = "dataset";
  config.explanations_path = "explanations.jsonl";
  config.u_interpreter.kind = InterpreterKind::kHash;
  config.u_interpreter.dim = options.dim;
  config.u_interpreter.seed = options.interpreter_seed;
  config.grid.hidden_layers = {0, 1};
  config.grid.hidden_dims = {32};
  config.grid.dropouts = {0.0};
  config.grid.project = {false};
  config.grid.batch_sizes = {32};
  config.classifier.learning_rate = 3e-2;
  config.classifier.max_epochs = 200;
  config.classifier.patience = 20;
  config.seeds = {1, 2, 3, 4, 5};
  config.fractions = {0.25, 0.5, 1.0};
  config.output_dir = "out";
  const auto path = dir / "config.json";
  write_experiment_config(config, path);
  return path;
}

}  // namespace expbert
