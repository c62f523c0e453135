#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "refprime/math/rng.hpp"
#include "refprime/participants.hpp"
#include "refprime/stimuli.hpp"

namespace refprime {

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.7;
  int max_tokens = 8;
  std::vector<std::string> stop_sequences = {"\n"};
  std::string model_name;
};

struct RetryPolicy {
  int max_retries = 5;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30000};
};

struct EndpointConfig {
  std::string base_url = "https://api.openai.com";
  std::string completions_path = "/v1/completions";
  std::string model_name = "text-davinci-003";
  // "completions" sends the prompt directly; "chat" wraps the serialized
  // transcript in a single user message and reads message.content back.
  std::string api_format = "completions";
  std::string api_key_env = "REFPRIME_API_KEY";
  double requests_per_minute = 60.0;
  int timeout_seconds = 60;
  RetryPolicy retry;
};

// Token bucket shared by all sessions of a run. Capacity is one minute of
// budget; refill is continuous.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_minute);

  // Blocks until a token is available.
  void acquire();

 private:
  std::mutex mu_;
  double tokens_;
  double capacity_;
  double per_ms_;
  std::chrono::steady_clock::time_point last_;
};

// Completion interface over a remote endpoint. Each call consumes a rate
// token, retries transient failures with exponential backoff, and never
// retries authentication failures.
class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
};

struct CompletionStats {
  uint64_t requests = 0;
  uint64_t retries = 0;
};

class HttpCompletionClient : public CompletionClient {
 public:
  explicit HttpCompletionClient(EndpointConfig config);
  std::string complete(const CompletionRequest& request) override;
  const CompletionStats& stats() const { return stats_; }

  // Fails fast if the configured credential variable is missing or empty.
  std::string api_key() const;

 private:
  EndpointConfig config_;
  std::shared_ptr<RateLimiter> limiter_;
  CompletionStats stats_;
  std::mutex stats_mu_;
};

enum class QuestionKind { content, reference };

// Simulated-participant bias parameters. When yes_rate_ambiguous is set it
// overrides referent sampling on ambiguous reference questions (needed to
// realize a target marginal yes-rate under balanced question foci, where
// referent sampling alone always lands at 50%).
struct MockBias {
  std::optional<double> yes_rate_ambiguous;
  double content_accuracy = 1.0;
  std::map<ExposureCondition, double> subject_bias_by_exposure;
  double goal_bias = 0.0;
  uint64_t seed = 0;
};

void validate_bias(const MockBias& bias);

// One yes/no decision of the mock participant. Deterministic given the rng
// state; total over valid inputs.
std::string mock_respond(QuestionKind kind, const TrialSlot& slot, ExposureCondition condition,
                         const MockBias& bias, Rng& rng);

// What a session needs from a participant model: raw text given the full
// prompt. The mock ignores the prompt and answers from slot structure.
class Responder {
 public:
  virtual ~Responder() = default;
  virtual std::string answer(const std::string& prompt, const ParticipantProfile& profile,
                             const TrialSlot& slot, QuestionKind kind) = 0;
};

class RemoteResponder : public Responder {
 public:
  RemoteResponder(CompletionClient& client, std::string model_name, int max_tokens = 8);
  std::string answer(const std::string& prompt, const ParticipantProfile& profile,
                     const TrialSlot& slot, QuestionKind kind) override;

 private:
  CompletionClient& client_;
  std::string model_name_;
  int max_tokens_;
};

// Per-session instance so seeded determinism survives concurrent sessions.
class MockResponder : public Responder {
 public:
  MockResponder(MockBias bias, uint64_t session_seed);
  std::string answer(const std::string& prompt, const ParticipantProfile& profile,
                     const TrialSlot& slot, QuestionKind kind) override;

 private:
  MockBias bias_;
  Rng rng_;
};

}  // namespace refprime
