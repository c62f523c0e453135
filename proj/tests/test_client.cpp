#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "refprime/errors.hpp"
#include "refprime/llm_client.hpp"
#include "refprime/math/rng.hpp"
#include "refprime/stimuli.hpp"

using namespace refprime;
using nlohmann::json;

namespace {

constexpr const char* kTestKeyEnv = "REFPRIME_TEST_KEY";

// Local endpoint that scripts a sequence of status codes before succeeding.
class ScriptedServer {
 public:
  explicit ScriptedServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      size_t idx = static_cast<size_t>(hits_.fetch_add(1));
      int status = idx < statuses_.size() ? statuses_[idx] : 200;
      if (status == 200) {
        json body = json::parse(req.body);
        json reply = {{"choices", {{{"text", " Yes."}}}}};
        reply["model"] = body.value("model", "");
        res.set_content(reply.dump(), "application/json");
      } else {
        res.status = status;
        res.set_content("{\"error\": \"scripted\"}", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this]() { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~ScriptedServer() {
    server_.stop();
    thread_.join();
  }

  int port() const { return port_; }
  int hits() const { return hits_.load(); }

 private:
  httplib::Server server_;
  std::vector<int> statuses_;
  std::atomic<int> hits_{0};
  int port_ = 0;
  std::thread thread_;
};

EndpointConfig local_config(int port) {
  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.model_name = "test-model";
  cfg.api_key_env = kTestKeyEnv;
  cfg.requests_per_minute = 100000;
  cfg.retry.max_retries = 3;
  cfg.retry.initial_backoff = std::chrono::milliseconds(1);
  cfg.retry.max_backoff = std::chrono::milliseconds(4);
  return cfg;
}

CompletionRequest basic_request() {
  CompletionRequest req;
  req.prompt = "Q: Is this a test?\nA:";
  req.temperature = 0.4;
  return req;
}

}  // namespace

TEST_CASE("transient server errors are retried with backoff") {
  setenv(kTestKeyEnv, "sk-test", 1);
  ScriptedServer server({500});
  HttpCompletionClient client(local_config(server.port()));
  std::string text = client.complete(basic_request());
  CHECK(text == " Yes.");
  CHECK(server.hits() == 2);
  CHECK(client.stats().retries == 1);
}

TEST_CASE("authentication failures are never retried") {
  setenv(kTestKeyEnv, "sk-test", 1);
  ScriptedServer server({401, 200});
  HttpCompletionClient client(local_config(server.port()));
  try {
    client.complete(basic_request());
    CHECK(false);
  } catch (const ApiError& e) {
    CHECK(e.kind() == ApiError::Kind::auth);
  }
  CHECK(server.hits() == 1);
  CHECK(client.stats().retries == 0);
}

TEST_CASE("persistent rate limiting exhausts into its own error") {
  setenv(kTestKeyEnv, "sk-test", 1);
  ScriptedServer server({429, 429, 429, 429, 429, 429});
  HttpCompletionClient client(local_config(server.port()));
  try {
    client.complete(basic_request());
    CHECK(false);
  } catch (const ApiError& e) {
    CHECK(e.kind() == ApiError::Kind::rate_limit_exhausted);
  }
  CHECK(server.hits() == 4);  // initial attempt + 3 retries
}

TEST_CASE("missing credentials fail before any request") {
  unsetenv(kTestKeyEnv);
  ScriptedServer server({});
  HttpCompletionClient client(local_config(server.port()));
  try {
    client.complete(basic_request());
    CHECK(false);
  } catch (const ApiError& e) {
    CHECK(e.kind() == ApiError::Kind::auth);
  }
  CHECK(server.hits() == 0);
  setenv(kTestKeyEnv, "sk-test", 1);
}

TEST_CASE("malformed response bodies are a distinct failure") {
  setenv(kTestKeyEnv, "sk-test", 1);
  httplib::Server server;
  server.Post("/v1/completions", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"unexpected\": true}", "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&]() { server.listen_after_bind(); });
  server.wait_until_ready();
  HttpCompletionClient client(local_config(port));
  try {
    client.complete(basic_request());
    CHECK(false);
  } catch (const ApiError& e) {
    CHECK(e.kind() == ApiError::Kind::bad_response);
  }
  server.stop();
  t.join();
}

TEST_CASE("chat endpoints are adapted through a single user message") {
  setenv(kTestKeyEnv, "sk-test", 1);
  json seen;
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(R"({"choices": [{"message": {"role": "assistant", "content": "Yes."}}]})",
                    "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&]() { server.listen_after_bind(); });
  server.wait_until_ready();
  EndpointConfig cfg = local_config(port);
  cfg.api_format = "chat";
  cfg.completions_path = "/v1/chat/completions";
  HttpCompletionClient client(cfg);
  CHECK(client.complete(basic_request()) == "Yes.");
  REQUIRE(seen.contains("messages"));
  CHECK(seen["messages"].size() == 1);
  CHECK(seen["messages"][0]["role"] == "user");
  CHECK(seen["messages"][0]["content"] == basic_request().prompt);
  CHECK_FALSE(seen.contains("prompt"));
  server.stop();
  t.join();
}

TEST_CASE("requests preserve the configured parameters") {
  setenv(kTestKeyEnv, "sk-test", 1);
  json seen;
  httplib::Server server;
  server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(R"({"choices": [{"text": " No."}]})", "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&]() { server.listen_after_bind(); });
  server.wait_until_ready();
  HttpCompletionClient client(local_config(port));
  CompletionRequest req = basic_request();
  req.max_tokens = 8;
  req.stop_sequences = {"\n"};
  std::string text = client.complete(req);
  CHECK(text == " No.");
  CHECK(seen["model"] == "test-model");
  CHECK(seen["prompt"] == req.prompt);
  CHECK(seen["temperature"] == doctest::Approx(0.4));
  CHECK(seen["max_tokens"] == 8);
  CHECK(seen["stop"][0] == "\n");
  server.stop();
  t.join();
}

namespace {

StimulusItem ambiguous_joint_item() {
  StimulusItem item;
  item.item_id = "amb-001";
  item.verb_class = VerbClass::joint;
  item.characters = {Character{"Matt", Gender::male, SyntacticRole::subject, {}},
                     Character{"Will", Gender::male, SyntacticRole::nonsubject, {}}};
  item.ambiguous = true;
  item.story_text = "Matt danced with Will. Then he got some juice.";
  item.content_question = "Did Matt dance with Will?";
  item.content_gold = "yes";
  item.ref_question_variants = {{QuestionFocus::subject, "Did Matt get some juice?"},
                                {QuestionFocus::nonsubject, "Did Will get some juice?"}};
  return item;
}

}  // namespace

TEST_CASE("mock with certain biases answers deterministically") {
  MockBias bias;
  bias.content_accuracy = 1.0;
  bias.subject_bias_by_exposure[ExposureCondition::subject] = 1.0;
  Rng rng(1);
  TrialSlot slot{0, ambiguous_joint_item(), Phase::critical, QuestionFocus::subject};
  for (int i = 0; i < 20; ++i) {
    CHECK(mock_respond(QuestionKind::content, slot, ExposureCondition::subject, bias, rng) == "Yes.");
    CHECK(mock_respond(QuestionKind::reference, slot, ExposureCondition::subject, bias, rng) == "Yes.");
  }
  TrialSlot nonsubj{0, ambiguous_joint_item(), Phase::critical, QuestionFocus::nonsubject};
  CHECK(mock_respond(QuestionKind::reference, nonsubj, ExposureCondition::subject, bias, rng) == "No.");
}

TEST_CASE("mock answers unambiguous reference questions truthfully") {
  StimulusItem item = ambiguous_joint_item();
  item.characters.second = Character{"Liz", Gender::female, SyntacticRole::nonsubject, {}};
  item.ambiguous = false;
  item.story_text = "Matt danced with Liz. Then she got some juice.";
  item.ref_question_variants[QuestionFocus::nonsubject] = "Did Liz get some juice?";
  MockBias bias;
  Rng rng(1);
  TrialSlot subj_q{0, item, Phase::exposure, QuestionFocus::subject};
  TrialSlot nonsubj_q{0, item, Phase::exposure, QuestionFocus::nonsubject};
  // the pronoun is feminine, so Liz is the referent
  CHECK(mock_respond(QuestionKind::reference, subj_q, ExposureCondition::nonsubject, bias, rng) == "No.");
  CHECK(mock_respond(QuestionKind::reference, nonsubj_q, ExposureCondition::nonsubject, bias, rng) ==
        "Yes.");
}

TEST_CASE("mock marginal yes-rate converges to the configured rate") {
  MockBias bias;
  bias.yes_rate_ambiguous = 0.68;
  Rng rng(12345);
  TrialSlot subj{0, ambiguous_joint_item(), Phase::critical, QuestionFocus::subject};
  TrialSlot nonsubj{0, ambiguous_joint_item(), Phase::critical, QuestionFocus::nonsubject};
  int yes = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const TrialSlot& slot = i % 2 == 0 ? subj : nonsubj;
    if (mock_respond(QuestionKind::reference, slot, ExposureCondition::subject, bias, rng) == "Yes.") {
      ++yes;
    }
  }
  CHECK(std::fabs(static_cast<double>(yes) / n - 0.68) <= 0.01);
}

TEST_CASE("mock goal bias pulls transfer items toward the goal referent") {
  StimulusItem item = ambiguous_joint_item();
  item.verb_class = VerbClass::sg;
  item.characters.first.thematic_role = ThematicRole::source;
  item.characters.second.thematic_role = ThematicRole::goal;
  item.story_text = "Matt sent a letter to Will. Then he got some juice.";
  item.content_question = "Did Matt send a letter to Will?";
  item.ref_question_variants[QuestionFocus::source] = "Did Matt get some juice?";
  item.ref_question_variants[QuestionFocus::goal] = "Did Will get some juice?";
  MockBias bias;
  bias.subject_bias_by_exposure[ExposureCondition::goal] = 0.5;
  bias.goal_bias = 1.0;  // always overridden to the goal character
  Rng rng(4);
  TrialSlot goal_q{0, item, Phase::critical, QuestionFocus::goal};
  for (int i = 0; i < 20; ++i) {
    CHECK(mock_respond(QuestionKind::reference, goal_q, ExposureCondition::goal, bias, rng) == "Yes.");
  }
}

TEST_CASE("identical mock seeds give identical sessions") {
  MockBias bias;
  bias.subject_bias_by_exposure[ExposureCondition::subject] = 0.7;
  bias.content_accuracy = 0.8;
  bias.seed = 5;
  ParticipantProfile profile;
  profile.participant_id = "p001";
  profile.design = make_design(Experiment::e1a, ExposureCondition::subject);
  TrialSlot slot{0, ambiguous_joint_item(), Phase::critical, QuestionFocus::subject};
  MockResponder a(bias, 10), b(bias, 10), c(bias, 11);
  std::string seq_a, seq_b, seq_c;
  for (int i = 0; i < 50; ++i) {
    seq_a += a.answer("", profile, slot, QuestionKind::reference);
    seq_b += b.answer("", profile, slot, QuestionKind::reference);
    seq_c += c.answer("", profile, slot, QuestionKind::reference);
  }
  CHECK(seq_a == seq_b);
  CHECK(seq_a != seq_c);
}

TEST_CASE("bias probabilities are validated") {
  MockBias bias;
  bias.content_accuracy = 1.2;
  CHECK_THROWS_AS(validate_bias(bias), ConfigError);
  bias.content_accuracy = 0.5;
  bias.yes_rate_ambiguous = -0.1;
  CHECK_THROWS_AS(validate_bias(bias), ConfigError);
}
