#include "expbert/interpreters.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <future>
#include <unordered_set>

#include "expbert/error.hpp"
#include "expbert/hashing.hpp"
#include "expbert/templating.hpp"

namespace expbert {

std::string_view kind_name(InterpreterKind kind) {
  switch (kind) {
    case InterpreterKind::kNliFeatures:
      return "nli_features";
    case InterpreterKind::kNliProb:
      return "nli_prob";
    case InterpreterKind::kFeatureStore:
      return "feature_store";
    case InterpreterKind::kHash:
      return "hash";
    case InterpreterKind::kPattern:
      return "pattern";
    case InterpreterKind::kOntology:
      return "ontology";
  }
  return "?";
}

InterpreterKind parse_interpreter_kind(std::string_view name) {
  for (auto kind : {InterpreterKind::kNliFeatures, InterpreterKind::kNliProb, InterpreterKind::kFeatureStore,
                    InterpreterKind::kHash, InterpreterKind::kPattern, InterpreterKind::kOntology}) {
    if (kind_name(kind) == name) return kind;
  }
  throw ConfigError("unknown interpreter kind \"" + std::string(name) + "\"");
}

std::size_t default_dim(InterpreterKind kind) {
  switch (kind) {
    case InterpreterKind::kNliFeatures:
      return 768;
    case InterpreterKind::kHash:
      return 16;
    case InterpreterKind::kFeatureStore:
      return 0;
    default:
      return 1;
  }
}

void validate(const InterpreterSpec& spec) {
  const auto name = std::string(kind_name(spec.kind));
  switch (spec.kind) {
    case InterpreterKind::kNliFeatures:
    case InterpreterKind::kNliProb:
      if (spec.endpoint.empty() && std::getenv(kEndpointEnvVar) == nullptr) {
        throw ConfigError(name + " interpreter needs an endpoint (or " + kEndpointEnvVar + ")");
      }
      if (spec.kind == InterpreterKind::kNliProb && spec.dim > 1) {
        throw ConfigError("nli_prob interpreter has dim 1");
      }
      if (spec.batch_size == 0) throw ConfigError(name + " batch_size must be >= 1");
      break;
    case InterpreterKind::kFeatureStore:
      if (spec.path.empty()) throw ConfigError("feature_store interpreter needs a path");
      break;
    case InterpreterKind::kHash:
      break;
    case InterpreterKind::kPattern:
      if (spec.dim > 1) throw ConfigError("pattern interpreter has dim 1 per pattern");
      break;
    case InterpreterKind::kOntology:
      if (spec.dim > 1) throw ConfigError("ontology interpreter has dim 1 per dictionary");
      if (spec.dictionaries.size() != kOntologyDictionaryCount) {
        throw ConfigError("ontology interpreter needs exactly " + std::to_string(kOntologyDictionaryCount) +
                          " dictionaries, got " + std::to_string(spec.dictionaries.size()));
      }
      break;
  }
}

std::vector<std::vector<float>> Interpreter::interpret_batch(std::span<const Query> queries) const {
  std::vector<std::vector<float>> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(interpret(*q.instance, q.text));
  return out;
}

// ---------------------------------------------------------------------------

std::vector<float> hash_interpret(std::string_view instance_id, std::string_view text, std::size_t dim,
                                  std::uint64_t seed) {
  // Length prefixes keep ("ab", "c") and ("a", "bc") apart.
  std::uint64_t state = fnv1a64_u64(seed);
  state = fnv1a64_u64(instance_id.size(), state);
  state = fnv1a64(instance_id, state);
  state = fnv1a64_u64(text.size(), state);
  state = fnv1a64(text, state);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const std::uint64_t h = mix64(state ^ mix64(i));
    const double unit = static_cast<double>(h >> 11) * 0x1.0p-53;
    out[i] = static_cast<float>(2.0 * unit - 1.0);
  }
  return out;
}

HashInterpreter::HashInterpreter(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw ConfigError("hash interpreter dim must be >= 1");
}

std::vector<float> HashInterpreter::interpret(const Instance& instance, std::string_view text) const {
  return hash_interpret(instance.id, text, dim_, seed_);
}

// ---------------------------------------------------------------------------

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

namespace {

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n')) ++i;
    const auto start = i;
    while (i < text.size() && text[i] != ' ' && text[i] != '\t' && text[i] != '\n') ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

}  // namespace

std::vector<std::string> pattern_tokens(std::string_view template_text) {
  return whitespace_tokens(ascii_lower(substitute(template_text, "", "")));
}

PatternSet extract_patterns(std::span<const Explanation> explanations) {
  PatternSet set;
  std::unordered_set<std::string> seen;
  for (const auto& explanation : explanations) {
    const auto tokens = pattern_tokens(explanation.template_text);
    for (std::size_t n = 1; n <= 3; ++n) {
      for (std::size_t start = 0; start + n <= tokens.size(); ++start) {
        std::string gram = tokens[start];
        for (std::size_t k = 1; k < n; ++k) gram += " " + tokens[start + k];
        if (seen.insert(gram).second) set.patterns.push_back(std::move(gram));
      }
    }
  }
  return set;
}

bool contains_pattern(const Instance& instance, std::string_view pattern) {
  const auto needle = whitespace_tokens(pattern);
  if (needle.empty() || needle.size() > instance.tokens.size()) return false;
  for (std::size_t start = 0; start + needle.size() <= instance.tokens.size(); ++start) {
    bool match = true;
    for (std::size_t k = 0; k < needle.size() && match; ++k) {
      match = ascii_lower(instance.tokens[start + k]) == needle[k];
    }
    if (match) return true;
  }
  return false;
}

std::vector<float> pattern_interpret(const PatternSet& patterns, const Instance& instance) {
  std::vector<float> out;
  out.reserve(patterns.size());
  for (const auto& p : patterns.patterns) out.push_back(contains_pattern(instance, p) ? 1.0f : 0.0f);
  return out;
}

std::vector<float> PatternInterpreter::interpret(const Instance& instance, std::string_view text) const {
  return {contains_pattern(instance, ascii_lower(text)) ? 1.0f : 0.0f};
}

// ---------------------------------------------------------------------------

PairDictionary load_pair_dictionary(std::string name, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing dictionary file: " + path.string());
  PairDictionary dict{std::move(name), {}};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(path.filename().string() + ":" + std::to_string(number) + ": expected two tab-separated entities");
    }
    dict.pairs.emplace(ascii_lower(line.substr(0, tab)), ascii_lower(line.substr(tab + 1)));
  }
  return dict;
}

std::vector<float> ontology_interpret(std::span<const PairDictionary> dictionaries, const Instance& instance) {
  if (dictionaries.size() != kOntologyDictionaryCount) {
    throw ConfigError("ontology features need exactly " + std::to_string(kOntologyDictionaryCount) +
                      " dictionaries, got " + std::to_string(dictionaries.size()));
  }
  const std::pair<std::string, std::string> pair{ascii_lower(span_text(instance, instance.span1)),
                                                 ascii_lower(span_text(instance, instance.span2))};
  std::vector<float> out;
  for (const auto& dict : dictionaries) out.push_back(dict.pairs.contains(pair) ? 1.0f : 0.0f);
  return out;
}

OntologyInterpreter::OntologyInterpreter(std::vector<PairDictionary> dictionaries)
    : dictionaries_(std::move(dictionaries)) {
  if (dictionaries_.size() != kOntologyDictionaryCount) {
    throw ConfigError("ontology interpreter needs exactly " + std::to_string(kOntologyDictionaryCount) +
                      " dictionaries, got " + std::to_string(dictionaries_.size()));
  }
}

std::vector<float> OntologyInterpreter::interpret(const Instance& instance, std::string_view text) const {
  for (const auto& dict : dictionaries_) {
    if (dict.name == text) {
      const std::pair<std::string, std::string> pair{ascii_lower(span_text(instance, instance.span1)),
                                                     ascii_lower(span_text(instance, instance.span2))};
      return {dict.pairs.contains(pair) ? 1.0f : 0.0f};
    }
  }
  throw DataError("unknown ontology dictionary \"" + std::string(text) + "\"");
}

// ---------------------------------------------------------------------------

FeatureStoreInterpreter::FeatureStoreInterpreter(std::shared_ptr<const FeatureCache> cache,
                                                 InterpreterKind reported_kind)
    : cache_(std::move(cache)), reported_kind_(reported_kind) {}

std::vector<float> FeatureStoreInterpreter::interpret(const Instance& instance, std::string_view text) const {
  const auto hash = text_hash(text);
  const auto row = cache_->find(instance.id, hash);
  if (!row) {
    throw DataError("no cached features for instance \"" + instance.id + "\" text \"" + std::string(text) +
                    "\" in " + cache_->path().string());
  }
  const auto values = cache_->row(*row);
  return {values.begin(), values.end()};
}

std::vector<float> CountingInterpreter::interpret(const Instance& instance, std::string_view text) const {
  ++calls_;
  return inner_.interpret(instance, text);
}

std::vector<std::vector<float>> CountingInterpreter::interpret_batch(std::span<const Query> queries) const {
  calls_ += queries.size();
  ++batches_;
  return inner_.interpret_batch(queries);
}

// ---------------------------------------------------------------------------

std::string resolve_endpoint(const std::string& configured) {
  if (const char* env = std::getenv(kEndpointEnvVar); env != nullptr && *env != '\0') return env;
  return configured;
}

std::unique_ptr<Interpreter> make_interpreter(const InterpreterSpec& spec) {
  validate(spec);
  const auto dim = spec.dim == 0 ? default_dim(spec.kind) : spec.dim;
  switch (spec.kind) {
    case InterpreterKind::kNliFeatures:
    case InterpreterKind::kNliProb:
      return std::make_unique<RemoteNliInterpreter>(spec.kind, resolve_endpoint(spec.endpoint), dim, spec.batch_size,
                                                    spec.max_retries, spec.initial_backoff);
    case InterpreterKind::kFeatureStore: {
      auto cache = std::make_shared<const FeatureCache>(FeatureCache::load(spec.path));
      if (spec.dim != 0 && cache->dim() != spec.dim) {
        throw DataError("feature store " + spec.path.string() + " has dim " + std::to_string(cache->dim()) +
                        ", expected " + std::to_string(spec.dim));
      }
      return std::make_unique<FeatureStoreInterpreter>(std::move(cache));
    }
    case InterpreterKind::kHash:
      return std::make_unique<HashInterpreter>(dim, spec.seed);
    case InterpreterKind::kPattern:
      return std::make_unique<PatternInterpreter>();
    case InterpreterKind::kOntology: {
      std::vector<PairDictionary> dicts;
      for (const auto& [name, path] : spec.dictionaries) dicts.push_back(load_pair_dictionary(name, path));
      return std::make_unique<OntologyInterpreter>(std::move(dicts));
    }
  }
  throw ConfigError("unsupported interpreter kind");
}

// ---------------------------------------------------------------------------

FeaturizeStats featurize_corpus(const Interpreter& interpreter, const Dataset& dataset,
                                std::span<const TextSource> texts, const std::filesystem::path& cache_path,
                                const FeaturizeOptions& options) {
  auto cache = FeatureCache::open_for_append(cache_path, interpreter.dim());
  FeaturizeStats stats;

  struct Pending {
    Query query;
    CacheKey key;
  };
  std::vector<Pending> pending;
  std::unordered_set<std::string> queued;
  for (Split split : kAllSplits) {
    for (const auto& instance : dataset.split(split)) {
      for (const auto& source : texts) {
        auto text = instantiate(instance, source.id, source.template_text).text;
        CacheKey key{instance.id, text_hash(text)};
        if (cache.find(key.instance_id, key.text_hash)) {
          ++stats.hits;
          continue;
        }
        // Two sources can instantiate to the same text; interpret it once.
        if (!queued.insert(key.instance_id + '\x1f' + key.text_hash).second) continue;
        pending.push_back({{&instance, std::move(text)}, std::move(key)});
      }
    }
  }

  const std::size_t batch = std::max<std::size_t>(1, options.batch_size ? options.batch_size
                                                                        : interpreter.preferred_batch_size());
  const std::size_t workers = std::max<std::size_t>(1, options.workers);
  std::size_t next = 0;
  while (next < pending.size()) {
    // One wave of up to `workers` batches in flight, committed in order.
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::vector<std::future<std::vector<std::vector<float>>>> futures;
    for (std::size_t w = 0; w < workers && next < pending.size(); ++w) {
      const auto end = std::min(pending.size(), next + batch);
      ranges.emplace_back(next, end);
      futures.push_back(std::async(workers == 1 ? std::launch::deferred : std::launch::async,
                                   [&interpreter, &pending, begin = next, end] {
                                     std::vector<Query> queries;
                                     for (auto i = begin; i < end; ++i) queries.push_back(pending[i].query);
                                     return interpreter.interpret_batch(queries);
                                   }));
      next = end;
    }
    std::exception_ptr failure;
    std::pair<std::size_t, std::size_t> failed_range;
    for (std::size_t w = 0; w < futures.size(); ++w) {
      std::vector<std::vector<float>> vectors;
      try {
        vectors = futures[w].get();
      } catch (...) {
        failure = std::current_exception();
        failed_range = ranges[w];
        // Drain the rest of the wave so no task outlives `pending`.
        for (std::size_t rest = w + 1; rest < futures.size(); ++rest) futures[rest].wait();
        break;
      }
      const auto [begin, end] = ranges[w];
      if (vectors.size() != end - begin) {
        throw ServiceError("interpreter returned " + std::to_string(vectors.size()) + " vectors for " +
                           std::to_string(end - begin) + " pairs");
      }
      std::vector<CacheEntry> entries;
      for (auto i = begin; i < end; ++i) {
        if (vectors[i - begin].size() != cache.dim()) {
          throw ServiceError("dimension mismatch for instance \"" + pending[i].key.instance_id + "\": got " +
                             std::to_string(vectors[i - begin].size()) + ", expected " + std::to_string(cache.dim()));
        }
        entries.push_back({pending[i].key, std::move(vectors[i - begin])});
      }
      cache.append(entries);
      stats.computed += entries.size();
    }
    if (failure) {
      const auto [begin, end] = failed_range;
      const auto where = " (batch of instances \"" + pending[begin].key.instance_id + "\" .. \"" +
                         pending[end - 1].key.instance_id + "\")";
      try {
        std::rethrow_exception(failure);
      } catch (const ServiceError& e) {
        throw ServiceError(e.what() + where);
      } catch (const DataError& e) {
        throw DataError(e.what() + where);
      }
    }
  }
  stats.rows = cache.rows();
  return stats;
}

}  // namespace expbert
