#include <cmath>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "expbert/error.hpp"
#include "expbert/interpreters.hpp"
#include "expbert/templating.hpp"

namespace expbert {
namespace {

using nlohmann::json;

struct Reply {
  int status = 0;
  std::string body;
};

// Performs one request, retrying transport failures and 5xx replies with
// exponential backoff. 4xx replies are returned immediately.
template <typename Send>
Reply with_retries(const std::string& endpoint, const std::string& route, int max_retries,
                   std::chrono::milliseconds backoff, Send&& send) {
  std::string last_error;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(endpoint);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(300, 0);
    auto result = send(client);
    if (!result) {
      last_error = httplib::to_string(result.error());
      continue;
    }
    if (result->status >= 500) {
      last_error = "HTTP " + std::to_string(result->status);
      continue;
    }
    return {result->status, result->body};
  }
  throw ServiceError("NLI service at " + endpoint + route + " unreachable after " + std::to_string(max_retries + 1) +
                     " attempts: " + last_error);
}

json parse_reply(const Reply& reply, const std::string& route) {
  if (reply.status != 200) {
    throw ServiceError("NLI service " + route + " returned HTTP " + std::to_string(reply.status) + ": " + reply.body);
  }
  try {
    return json::parse(reply.body);
  } catch (const json::parse_error& e) {
    throw ServiceError("NLI service " + route + " returned invalid JSON: " + e.what());
  }
}

}  // namespace

RemoteNliInterpreter::RemoteNliInterpreter(InterpreterKind kind, std::string endpoint, std::size_t dim,
                                           std::size_t batch_size, int max_retries,
                                           std::chrono::milliseconds initial_backoff)
    : kind_(kind),
      endpoint_(std::move(endpoint)),
      dim_(dim),
      batch_size_(std::max<std::size_t>(1, batch_size)),
      max_retries_(std::max(0, max_retries)),
      initial_backoff_(initial_backoff) {
  if (kind_ != InterpreterKind::kNliFeatures && kind_ != InterpreterKind::kNliProb) {
    throw ConfigError("remote interpreter kind must be nli_features or nli_prob");
  }
  if (kind_ == InterpreterKind::kNliProb && dim_ != 1) throw ConfigError("nli_prob interpreter has dim 1");
  if (dim_ == 0) throw ConfigError("remote interpreter dim must be >= 1");
  if (endpoint_.empty()) throw ConfigError("remote interpreter needs an endpoint");
}

std::vector<float> RemoteNliInterpreter::interpret(const Instance& instance, std::string_view text) const {
  const Query query{&instance, std::string(text)};
  return interpret_batch(std::span<const Query>(&query, 1)).front();
}

std::vector<std::vector<float>> RemoteNliInterpreter::interpret_batch(std::span<const Query> queries) const {
  std::vector<std::vector<float>> out;
  out.reserve(queries.size());
  for (std::size_t begin = 0; begin < queries.size(); begin += batch_size_) {
    auto chunk = request_chunk(queries.subspan(begin, std::min(batch_size_, queries.size() - begin)));
    for (auto& v : chunk) out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::vector<float>> RemoteNliInterpreter::request_chunk(std::span<const Query> queries) const {
  json pairs = json::array();
  for (const auto& q : queries) {
    pairs.push_back({{"premise", premise_text(*q.instance)}, {"hypothesis", q.text}});
  }
  const std::string body = json{{"pairs", std::move(pairs)}}.dump();
  const std::string route = kind_ == InterpreterKind::kNliFeatures ? "/v1/features" : "/v1/prob";
  const auto reply = with_retries(endpoint_, route, max_retries_, initial_backoff_, [&](httplib::Client& client) {
    return client.Post(route, body, "application/json");
  });
  const auto document = parse_reply(reply, route);

  std::vector<std::vector<float>> out;
  try {
    if (kind_ == InterpreterKind::kNliFeatures) {
      const auto& vectors = document.at("vectors");
      if (!vectors.is_array() || vectors.size() != queries.size()) {
        throw ServiceError("/v1/features returned " + std::to_string(vectors.size()) + " vectors for " +
                           std::to_string(queries.size()) + " pairs");
      }
      for (const auto& v : vectors) {
        auto values = v.get<std::vector<float>>();
        if (values.size() != dim_) {
          throw ServiceError("dimension mismatch: service returned " + std::to_string(values.size()) +
                             " floats, expected " + std::to_string(dim_));
        }
        out.push_back(std::move(values));
      }
    } else {
      const auto& probs = document.at("probs");
      if (!probs.is_array() || probs.size() != queries.size()) {
        throw ServiceError("/v1/prob returned " + std::to_string(probs.size()) + " values for " +
                           std::to_string(queries.size()) + " pairs");
      }
      for (const auto& p : probs) {
        const auto value = p.get<double>();
        if (!(value >= 0.0 && value <= 1.0)) {
          throw ServiceError("/v1/prob returned a value outside [0, 1]: " + std::to_string(value));
        }
        out.push_back({static_cast<float>(value)});
      }
    }
  } catch (const json::exception& e) {
    throw ServiceError(route + " reply has an unexpected shape: " + e.what());
  }
  return out;
}

ServiceHealth RemoteNliInterpreter::health() const {
  const auto reply = with_retries(endpoint_, "/health", max_retries_, initial_backoff_,
                                  [](httplib::Client& client) { return client.Get("/health"); });
  const auto document = parse_reply(reply, "/health");
  try {
    return {document.at("status").get<std::string>(), document.at("dim").get<std::size_t>(),
            document.value("model", std::string{})};
  } catch (const json::exception& e) {
    throw ServiceError(std::string("/health reply has an unexpected shape: ") + e.what());
  }
}

}  // namespace expbert
