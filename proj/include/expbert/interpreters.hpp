#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "expbert/core_data.hpp"
#include "expbert/feature_cache.hpp"

namespace expbert {

enum class InterpreterKind { kNliFeatures, kNliProb, kFeatureStore, kHash, kPattern, kOntology };

std::string_view kind_name(InterpreterKind kind);
InterpreterKind parse_interpreter_kind(std::string_view name);

// Environment variable that overrides the endpoint of remote interpreters.
inline constexpr const char* kEndpointEnvVar = "EXPBERT_NLI_ENDPOINT";

struct InterpreterSpec {
  InterpreterKind kind = InterpreterKind::kHash;
  // Output width per text. 0 selects the kind's default (768 for nli_features,
  // 1 for nli_prob/pattern/ontology, 16 for hash, the file's dim for feature_store).
  std::size_t dim = 0;
  std::string endpoint;            // nli_features, nli_prob
  std::filesystem::path path;      // feature_store
  std::uint64_t seed = 0;          // hash
  std::size_t batch_size = 32;     // pairs per remote request
  int max_retries = 4;
  std::chrono::milliseconds initial_backoff{250};
  std::vector<std::pair<std::string, std::filesystem::path>> dictionaries;  // ontology

  bool operator==(const InterpreterSpec&) const = default;
};

std::size_t default_dim(InterpreterKind kind);
// Throws ConfigError when kind-specific parameters are missing.
void validate(const InterpreterSpec& spec);

// One (instance, instantiated text) pair.
struct Query {
  const Instance* instance = nullptr;
  std::string text;
};

// I(x, text) -> R^dim. Implementations are pure for a fixed spec and model.
class Interpreter {
 public:
  virtual ~Interpreter() = default;

  virtual InterpreterKind kind() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<float> interpret(const Instance& instance, std::string_view text) const = 0;

  // Results are in query order. The default loops over interpret().
  virtual std::vector<std::vector<float>> interpret_batch(std::span<const Query> queries) const;
  virtual std::size_t preferred_batch_size() const { return 32; }
};

// Stable pseudo-random features in [-1, 1]; a model-free stand-in for the
// NLI interpreter.
std::vector<float> hash_interpret(std::string_view instance_id, std::string_view text, std::size_t dim,
                                  std::uint64_t seed);

class HashInterpreter final : public Interpreter {
 public:
  HashInterpreter(std::size_t dim, std::uint64_t seed);
  InterpreterKind kind() const override { return InterpreterKind::kHash; }
  std::size_t dim() const override { return dim_; }
  std::vector<float> interpret(const Instance& instance, std::string_view text) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Pattern baseline

// Lowercased token n-grams (n = 1..3), each stored as tokens joined by one space.
struct PatternSet {
  std::vector<std::string> patterns;

  std::size_t size() const { return patterns.size(); }
  bool empty() const { return patterns.empty(); }
};

// ASCII lowercase; other bytes pass through.
std::string ascii_lower(std::string_view text);

// Whitespace tokens of a template after deleting every placeholder, lowercased.
std::vector<std::string> pattern_tokens(std::string_view template_text);

PatternSet extract_patterns(std::span<const Explanation> explanations);

// True iff the pattern's tokens occur contiguously in the lowercased instance tokens.
bool contains_pattern(const Instance& instance, std::string_view pattern);

std::vector<float> pattern_interpret(const PatternSet& patterns, const Instance& instance);

// The text argument is a pattern; the output is its single containment bit.
class PatternInterpreter final : public Interpreter {
 public:
  InterpreterKind kind() const override { return InterpreterKind::kPattern; }
  std::size_t dim() const override { return 1; }
  std::vector<float> interpret(const Instance& instance, std::string_view text) const override;
};

// ---------------------------------------------------------------------------
// Ontology bits

inline constexpr std::size_t kOntologyDictionaryCount = 6;

struct PairDictionary {
  std::string name;
  std::set<std::pair<std::string, std::string>> pairs;  // case-folded
};

// Tab-separated "entity1<TAB>entity2" lines.
PairDictionary load_pair_dictionary(std::string name, const std::filesystem::path& path);

// Bit j is set iff the instance's case-folded (o1, o2) surface pair is in dictionary j.
std::vector<float> ontology_interpret(std::span<const PairDictionary> dictionaries, const Instance& instance);

// The text argument names a dictionary; the output is its membership bit.
class OntologyInterpreter final : public Interpreter {
 public:
  explicit OntologyInterpreter(std::vector<PairDictionary> dictionaries);
  InterpreterKind kind() const override { return InterpreterKind::kOntology; }
  std::size_t dim() const override { return 1; }
  std::vector<float> interpret(const Instance& instance, std::string_view text) const override;
  const std::vector<PairDictionary>& dictionaries() const { return dictionaries_; }

 private:
  std::vector<PairDictionary> dictionaries_;
};

// ---------------------------------------------------------------------------
// Precomputed features

// Serves rows of a feature cache keyed by (instance id, hash of the text).
class FeatureStoreInterpreter final : public Interpreter {
 public:
  explicit FeatureStoreInterpreter(std::shared_ptr<const FeatureCache> cache,
                                   InterpreterKind reported_kind = InterpreterKind::kFeatureStore);
  InterpreterKind kind() const override { return reported_kind_; }
  std::size_t dim() const override { return cache_->dim(); }
  std::vector<float> interpret(const Instance& instance, std::string_view text) const override;

 private:
  std::shared_ptr<const FeatureCache> cache_;
  InterpreterKind reported_kind_;
};

// Forwards to another interpreter and counts interpreted pairs.
class CountingInterpreter final : public Interpreter {
 public:
  explicit CountingInterpreter(const Interpreter& inner) : inner_(inner) {}
  InterpreterKind kind() const override { return inner_.kind(); }
  std::size_t dim() const override { return inner_.dim(); }
  std::vector<float> interpret(const Instance& instance, std::string_view text) const override;
  std::vector<std::vector<float>> interpret_batch(std::span<const Query> queries) const override;
  std::size_t preferred_batch_size() const override { return inner_.preferred_batch_size(); }

  std::size_t calls() const { return calls_.load(); }
  std::size_t batches() const { return batches_.load(); }

 private:
  const Interpreter& inner_;
  mutable std::atomic<std::size_t> calls_{0};
  mutable std::atomic<std::size_t> batches_{0};
};

// ---------------------------------------------------------------------------
// Remote NLI service client

struct ServiceHealth {
  std::string status;
  std::size_t dim = 0;
  std::string model;
};

// Client for the NLI sidecar:
//   POST /v1/features {"pairs":[{"premise","hypothesis"}]} -> {"vectors":[[f32 x d]]}
//   POST /v1/prob     {"pairs":[...]}                      -> {"probs":[p]}
//   GET  /health                                           -> {"status":"ok","dim":d,"model":id}
// The premise is the space-joined sentence; the hypothesis is the text.
class RemoteNliInterpreter final : public Interpreter {
 public:
  // kind must be kNliFeatures or kNliProb.
  RemoteNliInterpreter(InterpreterKind kind, std::string endpoint, std::size_t dim, std::size_t batch_size = 32,
                       int max_retries = 4, std::chrono::milliseconds initial_backoff = std::chrono::milliseconds(250));

  InterpreterKind kind() const override { return kind_; }
  std::size_t dim() const override { return dim_; }
  std::vector<float> interpret(const Instance& instance, std::string_view text) const override;
  std::vector<std::vector<float>> interpret_batch(std::span<const Query> queries) const override;
  std::size_t preferred_batch_size() const override { return batch_size_; }

  ServiceHealth health() const;
  const std::string& endpoint() const { return endpoint_; }

 private:
  std::vector<std::vector<float>> request_chunk(std::span<const Query> queries) const;

  InterpreterKind kind_;
  std::string endpoint_;
  std::size_t dim_;
  std::size_t batch_size_;
  int max_retries_;
  std::chrono::milliseconds initial_backoff_;
};

// The endpoint after applying the EXPBERT_NLI_ENDPOINT override.
std::string resolve_endpoint(const std::string& configured);

std::unique_ptr<Interpreter> make_interpreter(const InterpreterSpec& spec);

// ---------------------------------------------------------------------------
// Corpus featurization

// Something an interpreter is applied to: an explanation, a relation
// description, a pattern or a dictionary name. Templates may carry placeholders.
struct TextSource {
  std::string id;
  std::string template_text;

  bool operator==(const TextSource&) const = default;
};

struct FeaturizeOptions {
  std::size_t batch_size = 0;  // 0 uses the interpreter's preferred size
  std::size_t workers = 1;     // batches in flight at once
};

struct FeaturizeStats {
  std::size_t rows = 0;      // rows in the cache afterwards
  std::size_t computed = 0;  // rows interpreted in this run
  std::size_t hits = 0;      // rows already present
};

// Ensures the cache holds one row per (instance, text) over all splits.
// Existing rows are kept; if the interpreter fails, all batches finished
// before the failure are committed and the error is rethrown.
FeaturizeStats featurize_corpus(const Interpreter& interpreter, const Dataset& dataset,
                                std::span<const TextSource> texts, const std::filesystem::path& cache_path,
                                const FeaturizeOptions& options = {});

}  // namespace expbert
