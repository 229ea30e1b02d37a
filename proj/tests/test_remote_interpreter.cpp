#include <doctest.h>

#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "expbert/error.hpp"
#include "expbert/interpreters.hpp"
#include "support.hpp"

using namespace expbert;
using nlohmann::json;

namespace {

// In-process stand-in for the NLI sidecar. Feature vectors encode the
// hypothesis length so tests can check ordering.
class FakeService {
 public:
  explicit FakeService(std::size_t dim) : dim_(dim) {
    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"status", "ok"}, {"dim", dim_}, {"model", "fake-nli"}}.dump(), "application/json");
    });
    server_.Post("/v1/features", [this](const httplib::Request& req, httplib::Response& res) {
      if (fail_first_ > 0) {
        --fail_first_;
        res.status = 503;
        return;
      }
      const auto body = json::parse(req.body);
      std::lock_guard lock(mutex_);
      batch_sizes_.push_back(body.at("pairs").size());
      json vectors = json::array();
      for (const auto& p : body.at("pairs")) {
        premises_.push_back(p.at("premise").get<std::string>());
        std::vector<float> v(dim_, 0.5f);
        v[0] = static_cast<float>(p.at("hypothesis").get<std::string>().size());
        vectors.push_back(v);
      }
      res.set_content(json{{"vectors", vectors}}.dump(), "application/json");
    });
    server_.Post("/v1/prob", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      json probs = json::array();
      for (const auto& p : body.at("pairs")) {
        const auto len = p.at("hypothesis").get<std::string>().size();
        probs.push_back(out_of_range_ ? 1.5 : static_cast<double>(len % 10) / 10.0);
      }
      res.set_content(json{{"probs", probs}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  void fail_first(int n) { fail_first_ = n; }
  void out_of_range(bool v) { out_of_range_ = v; }
  std::vector<std::size_t> batch_sizes() const {
    std::lock_guard lock(mutex_);
    return batch_sizes_;
  }
  std::vector<std::string> premises() const {
    std::lock_guard lock(mutex_);
    return premises_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::size_t dim_;
  std::atomic<int> fail_first_{0};
  std::atomic<bool> out_of_range_{false};
  mutable std::mutex mutex_;
  std::vector<std::size_t> batch_sizes_;
  std::vector<std::string> premises_;
};

std::vector<Query> queries_for(const Instance& inst, std::size_t n) {
  std::vector<Query> q;
  for (std::size_t i = 0; i < n; ++i) q.push_back({&inst, std::string(i + 1, 'h')});
  return q;
}

}  // namespace

TEST_CASE("768-dim feature vectors are accepted in query order") {
  FakeService service(768);
  RemoteNliInterpreter interp(InterpreterKind::kNliFeatures, service.endpoint(), 768, 4, 0);
  const auto inst = test::make_instance("a", "Ann married Bob", 0, 2);
  const auto q = queries_for(inst, 10);
  const auto out = interp.interpret_batch(q);
  REQUIRE(out.size() == 10);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].size() == 768);
    CHECK(out[i][0] == static_cast<float>(i + 1));
  }
  CHECK(service.batch_sizes() == std::vector<std::size_t>{4, 4, 2});
  CHECK(service.premises().front() == "Ann married Bob");
  CHECK(interp.interpret(inst, "xyz")[0] == 3.0f);
}

TEST_CASE("a wrong vector width is a dimension mismatch") {
  FakeService service(767);
  RemoteNliInterpreter interp(InterpreterKind::kNliFeatures, service.endpoint(), 768, 8, 0);
  const auto inst = test::make_instance("a", "Ann married Bob", 0, 2);
  try {
    interp.interpret(inst, "h");
    FAIL("expected a service error");
  } catch (const ServiceError& e) {
    CHECK(std::string(e.what()).find("dimension mismatch") != std::string::npos);
  }
}

TEST_CASE("health reports the service dimension") {
  FakeService service(768);
  RemoteNliInterpreter interp(InterpreterKind::kNliFeatures, service.endpoint(), 768);
  const auto h = interp.health();
  CHECK(h.status == "ok");
  CHECK(h.dim == 768);
  CHECK(h.model == "fake-nli");
}

TEST_CASE("probabilities lie in the unit interval") {
  FakeService service(1);
  RemoteNliInterpreter interp(InterpreterKind::kNliProb, service.endpoint(), 1, 32, 0);
  const auto inst = test::make_instance("a", "Ann married Bob", 0, 2);
  for (const auto& v : interp.interpret_batch(queries_for(inst, 25))) {
    REQUIRE(v.size() == 1);
    CHECK((v[0] >= 0.0f && v[0] <= 1.0f));
  }
  service.out_of_range(true);
  CHECK_THROWS_AS(interp.interpret(inst, "h"), ServiceError);
  CHECK_THROWS_AS(RemoteNliInterpreter(InterpreterKind::kNliProb, service.endpoint(), 2), ConfigError);
}

TEST_CASE("server errors are retried") {
  FakeService service(4);
  RemoteNliInterpreter interp(InterpreterKind::kNliFeatures, service.endpoint(), 4, 8, 2,
                              std::chrono::milliseconds(1));
  const auto inst = test::make_instance("a", "Ann married Bob", 0, 2);
  service.fail_first(2);
  CHECK(interp.interpret(inst, "hh")[0] == 2.0f);
  service.fail_first(3);
  CHECK_THROWS_AS(interp.interpret(inst, "hh"), ServiceError);
}

TEST_CASE("an unreachable endpoint is a service error") {
  // Nothing listens on port 1.
  RemoteNliInterpreter interp(InterpreterKind::kNliFeatures, "http://127.0.0.1:1", 768, 8, 1,
                              std::chrono::milliseconds(1));
  const auto inst = test::make_instance("a", "Ann married Bob", 0, 2);
  try {
    interp.interpret(inst, "h");
    FAIL("expected a service error");
  } catch (const ServiceError& e) {
    CHECK(std::string(e.what()).find("unreachable after 2 attempts") != std::string::npos);
  }
}

TEST_CASE("the environment overrides the configured endpoint") {
  ::unsetenv(kEndpointEnvVar);
  CHECK(resolve_endpoint("http://a:1") == "http://a:1");
  ::setenv(kEndpointEnvVar, "http://b:2", 1);
  CHECK(resolve_endpoint("http://a:1") == "http://b:2");

  FakeService service(3);
  ::setenv(kEndpointEnvVar, service.endpoint().c_str(), 1);
  InterpreterSpec spec;
  spec.kind = InterpreterKind::kNliFeatures;
  spec.dim = 3;
  spec.endpoint = "http://127.0.0.1:1";
  spec.max_retries = 0;
  const auto interp = make_interpreter(spec);
  const auto inst = test::make_instance("a", "Ann married Bob", 0, 2);
  CHECK(interp->interpret(inst, "hhhh")[0] == 4.0f);
  ::unsetenv(kEndpointEnvVar);
}

TEST_CASE("remote features flow into the corpus cache") {
  FakeService service(768);
  RemoteNliInterpreter interp(InterpreterKind::kNliFeatures, service.endpoint(), 768, 5, 0);
  test::TempDir dir;
  const auto d = test::tiny_dataset(4);
  const std::vector<TextSource> texts = {{"e1", "{o1} married {o2}"}, {"e2", "{o1} met {o2}"}};
  const auto stats = featurize_corpus(interp, d, texts, dir / "v.expf", {0, 3});
  CHECK(stats.computed == 24);
  CHECK(FeatureCache::load(dir / "v.expf").dim() == 768);
}
