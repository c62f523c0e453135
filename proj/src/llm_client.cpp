#include "refprime/llm_client.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "refprime/errors.hpp"

namespace refprime {

using nlohmann::json;

RateLimiter::RateLimiter(double requests_per_minute)
    : tokens_(requests_per_minute),
      capacity_(requests_per_minute),
      per_ms_(requests_per_minute / 60000.0),
      last_(std::chrono::steady_clock::now()) {
  if (requests_per_minute <= 0.0) throw ConfigError("requests_per_minute must be positive");
}

void RateLimiter::acquire() {
  while (true) {
    std::chrono::milliseconds wait{0};
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto now = std::chrono::steady_clock::now();
      double elapsed_ms =
          std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(now - last_).count();
      tokens_ = std::min(capacity_, tokens_ + elapsed_ms * per_ms_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::milliseconds(static_cast<long>((1.0 - tokens_) / per_ms_) + 1);
    }
    std::this_thread::sleep_for(wait);
  }
}

HttpCompletionClient::HttpCompletionClient(EndpointConfig config)
    : config_(std::move(config)),
      limiter_(std::make_shared<RateLimiter>(config_.requests_per_minute)) {}

std::string HttpCompletionClient::api_key() const {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ApiError(ApiError::Kind::auth,
                   "credential environment variable " + config_.api_key_env + " is not set");
  }
  return key;
}

std::string HttpCompletionClient::complete(const CompletionRequest& request) {
  if (request.max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  if (request.temperature < 0.0) throw ConfigError("temperature must be >= 0");
  const std::string key = api_key();

  const bool chat = config_.api_format == "chat";
  json body;
  body["model"] = request.model_name.empty() ? config_.model_name : request.model_name;
  if (chat) {
    body["messages"] = json::array({{{"role", "user"}, {"content", request.prompt}}});
  } else {
    body["prompt"] = request.prompt;
  }
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
  const std::string payload = body.dump();

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers = {{"Authorization", "Bearer " + key}};

  auto backoff = config_.retry.initial_backoff;
  int attempt = 0;
  std::string last_error;
  bool rate_limited = false;
  while (true) {
    limiter_->acquire();
    {
      std::lock_guard<std::mutex> lock(stats_mu_);
      ++stats_.requests;
      if (attempt > 0) ++stats_.retries;
    }
    auto res = client.Post(config_.completions_path, headers, payload, "application/json");
    if (res) {
      if (res->status == 200) {
        try {
          json reply = json::parse(res->body);
          const json& choice = reply.at("choices").at(0);
          return chat ? choice.at("message").at("content").get<std::string>()
                      : choice.at("text").get<std::string>();
        } catch (const json::exception& e) {
          throw ApiError(ApiError::Kind::bad_response,
                         std::string("malformed completion response: ") + e.what());
        }
      }
      if (res->status == 401 || res->status == 403) {
        throw ApiError(ApiError::Kind::auth,
                       "authentication failed (HTTP " + std::to_string(res->status) + ")");
      }
      if (res->status == 429) {
        rate_limited = true;
        last_error = "rate limited (HTTP 429)";
      } else if (res->status >= 500) {
        rate_limited = false;
        last_error = "server error (HTTP " + std::to_string(res->status) + ")";
      } else {
        throw ApiError(ApiError::Kind::http,
                       "request rejected (HTTP " + std::to_string(res->status) + "): " + res->body);
      }
    } else {
      rate_limited = false;
      last_error = "network error: " + httplib::to_string(res.error());
    }
    if (attempt >= config_.retry.max_retries) {
      if (rate_limited) {
        throw ApiError(ApiError::Kind::rate_limit_exhausted,
                       "rate limit persisted through " + std::to_string(attempt) + " retries");
      }
      throw ApiError(ApiError::Kind::network,
                     last_error + " after " + std::to_string(attempt) + " retries");
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::min(std::chrono::milliseconds(static_cast<long>(
                           static_cast<double>(backoff.count()) * config_.retry.backoff_multiplier)),
                       config_.retry.max_backoff);
    ++attempt;
  }
}

void validate_bias(const MockBias& bias) {
  auto check01 = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must be in [0, 1]");
  };
  if (bias.yes_rate_ambiguous) check01(*bias.yes_rate_ambiguous, "yes_rate_ambiguous");
  check01(bias.content_accuracy, "content_accuracy");
  check01(bias.goal_bias, "goal_bias");
  for (const auto& [cond, p] : bias.subject_bias_by_exposure) check01(p, "subject_bias_by_exposure");
}

namespace {

std::string verdict(bool yes) { return yes ? "Yes." : "No."; }

}  // namespace

std::string mock_respond(QuestionKind kind, const TrialSlot& slot, ExposureCondition condition,
                         const MockBias& bias, Rng& rng) {
  const StimulusItem& item = slot.item;
  if (kind == QuestionKind::content) {
    bool truth = item.content_gold == "yes";
    bool correct = rng.bernoulli(bias.content_accuracy);
    return verdict(correct ? truth : !truth);
  }
  if (!item.ambiguous) {
    // Unambiguous pronouns are resolved truthfully.
    const Character& referent = intended_referent(item);
    const Character& focal = item.by_focus(slot.ref_focus);
    return verdict(referent.name == focal.name);
  }
  if (bias.yes_rate_ambiguous) {
    return verdict(rng.bernoulli(*bias.yes_rate_ambiguous));
  }
  double p_subject = 0.5;
  auto it = bias.subject_bias_by_exposure.find(condition);
  if (it != bias.subject_bias_by_exposure.end()) p_subject = it->second;
  const Character* referent =
      rng.bernoulli(p_subject) ? &item.characters.first : &item.characters.second;
  if (item.verb_class != VerbClass::joint && rng.bernoulli(bias.goal_bias)) {
    referent = &item.by_thematic_role(ThematicRole::goal);
  }
  const Character& focal = item.by_focus(slot.ref_focus);
  return verdict(referent->name == focal.name);
}

RemoteResponder::RemoteResponder(CompletionClient& client, std::string model_name, int max_tokens)
    : client_(client), model_name_(std::move(model_name)), max_tokens_(max_tokens) {}

std::string RemoteResponder::answer(const std::string& prompt, const ParticipantProfile& profile,
                                    const TrialSlot&, QuestionKind) {
  CompletionRequest req;
  req.prompt = prompt;
  req.temperature = profile.temperature;
  req.max_tokens = max_tokens_;
  req.model_name = model_name_;
  return client_.complete(req);
}

MockResponder::MockResponder(MockBias bias, uint64_t session_seed)
    : bias_(std::move(bias)), rng_(derive_seed(bias_.seed, "mock-session", session_seed)) {
  validate_bias(bias_);
}

std::string MockResponder::answer(const std::string&, const ParticipantProfile& profile,
                                  const TrialSlot& slot, QuestionKind kind) {
  return mock_respond(kind, slot, profile.design.exposure_condition, bias_, rng_);
}

}  // namespace refprime
