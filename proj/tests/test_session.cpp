#include <doctest.h>

#include <string>

#include "refprime/errors.hpp"
#include "refprime/math/rng.hpp"
#include "refprime/session.hpp"

using namespace refprime;

namespace {

// Responder that fails after a fixed number of answers.
class FlakyResponder : public Responder {
 public:
  FlakyResponder(MockBias bias, uint64_t seed, int fail_after)
      : inner_(bias, seed), fail_after_(fail_after) {}
  std::string answer(const std::string& prompt, const ParticipantProfile& profile,
                     const TrialSlot& slot, QuestionKind kind) override {
    if (answered_ >= fail_after_) {
      throw ApiError(ApiError::Kind::network, "connection reset after retries");
    }
    ++answered_;
    return inner_.answer(prompt, profile, slot, kind);
  }

 private:
  MockResponder inner_;
  int fail_after_;
  int answered_ = 0;
};

ParticipantProfile profile_for(const ExperimentDesign& design, bool with_persona = false) {
  ParticipantProfile p;
  p.participant_id = "p001";
  p.temperature = 0.431;
  p.design = design;
  if (with_persona) p.persona = Persona{"Mr.", "Smith", "England", "He"};
  return p;
}

}  // namespace

TEST_CASE("a two-slot schedule yields eight prompt and four model turns") {
  ExperimentDesign design = make_design(Experiment::e1a, ExposureCondition::subject);
  auto items = generate_templates(design, 42);
  auto schedule = build_schedule(design, items, 42);
  schedule.resize(2);
  MockResponder responder(MockBias{}, 7);
  SessionResult result = run_session(profile_for(design), schedule, responder);
  int prompts = 0, models = 0;
  for (const auto& turn : result.transcript.turns) {
    (turn.role == Transcript::Turn::Role::prompt ? prompts : models)++;
  }
  CHECK(prompts == 8);
  CHECK(models == 4);
  // per slot: story, question, answer, question, answer, separator
  REQUIRE(result.transcript.turns.size() == 12);
  for (size_t s = 0; s < 2; ++s) {
    const auto* t = &result.transcript.turns[s * 6];
    CHECK(t[0].role == Transcript::Turn::Role::prompt);
    CHECK(t[1].text.rfind("Q: ", 0) == 0);
    CHECK(t[2].text.rfind("A: ", 0) == 0);
    CHECK(t[3].text.rfind("Q: ", 0) == 0);
    CHECK(t[4].text.rfind("A: ", 0) == 0);
    CHECK(t[5].text.empty());
  }
  CHECK(result.transcript.cursor == 2);
}

TEST_CASE("a perfect mock reproduces every content gold answer") {
  ExperimentDesign design = make_design(Experiment::e1a, ExposureCondition::subject);
  auto items = generate_templates(design, 42);
  auto schedule = build_schedule(design, items, 42);
  MockBias bias;
  bias.content_accuracy = 1.0;
  MockResponder responder(bias, 7);
  SessionResult result = run_session(profile_for(design), schedule, responder);
  REQUIRE(result.records.size() == schedule.size());
  for (size_t i = 0; i < schedule.size(); ++i) {
    CHECK(result.records[i].content_correct);
    CHECK(to_string(result.records[i].content_parsed) == schedule[i].item.content_gold);
    CHECK_FALSE(result.records[i].ref_raw.empty());
  }
}

TEST_CASE("each request prompt is a strict prefix of the next") {
  ExperimentDesign design = make_design(Experiment::e2a, ExposureCondition::nonsubject);
  auto items = generate_templates(design, 8);
  auto schedule = build_schedule(design, items, 8);
  MockResponder responder(MockBias{}, 3);
  SessionResult result = run_session(profile_for(design, true), schedule, responder);
  REQUIRE(result.log.size() == 2 * schedule.size());
  for (size_t k = 1; k < result.log.size(); ++k) {
    const std::string& prev = result.log[k - 1].prompt;
    const std::string& next = result.log[k].prompt;
    REQUIRE(prev.size() < next.size());
    CHECK(next.compare(0, prev.size(), prev) == 0);
  }
}

TEST_CASE("serialization of an empty transcript is the persona sentence") {
  Transcript t;
  t.preamble = render_persona_prompt(Persona{"Mr.", "Smith", "England", "He"});
  CHECK(serialize_transcript(t) == t.preamble);
  t.turns.push_back({Transcript::Turn::Role::prompt, "Matt danced with Liz."});
  CHECK(serialize_transcript(t) == t.preamble + "\n\nMatt danced with Liz.");
}

TEST_CASE("appending a turn extends the serialization") {
  Transcript t;
  t.turns.push_back({Transcript::Turn::Role::prompt, "Story."});
  std::string before = serialize_transcript(t);
  t.turns.push_back({Transcript::Turn::Role::prompt, "Q: Did it happen?"});
  std::string after = serialize_transcript(t);
  CHECK(after.compare(0, before.size(), before) == 0);
  CHECK(after.size() > before.size());
}

TEST_CASE("transcripts differing in one answer serialize differently") {
  ExperimentDesign design = make_design(Experiment::e1a, ExposureCondition::subject);
  auto items = generate_templates(design, 42);
  auto full = build_schedule(design, items, 42);
  // keep critical slots so the configured biases actually matter
  std::vector<TrialSlot> schedule;
  for (const auto& slot : full) {
    if (slot.phase == Phase::critical) schedule.push_back(slot);
  }
  schedule.resize(3);
  MockBias yes_bias, no_bias;
  yes_bias.yes_rate_ambiguous = 1.0;
  no_bias.yes_rate_ambiguous = 0.0;
  yes_bias.subject_bias_by_exposure[ExposureCondition::subject] = 1.0;
  no_bias.subject_bias_by_exposure[ExposureCondition::subject] = 1.0;
  MockResponder a(yes_bias, 7), b(no_bias, 7);
  auto ra = run_session(profile_for(design), schedule, a);
  auto rb = run_session(profile_for(design), schedule, b);
  CHECK(serialize_transcript(ra.transcript) != serialize_transcript(rb.transcript));
}

TEST_CASE("prompt length grows strictly within a session") {
  ExperimentDesign design = make_design(Experiment::e1a, ExposureCondition::subject);
  auto items = generate_templates(design, 42);
  auto schedule = build_schedule(design, items, 42);
  MockResponder responder(MockBias{}, 7);
  SessionResult result = run_session(profile_for(design), schedule, responder);
  for (size_t k = 1; k < result.log.size(); ++k) {
    CHECK(result.log[k].prompt.size() > result.log[k - 1].prompt.size());
  }
}

TEST_CASE("sessions replay bit for bit under fixed seeds") {
  ExperimentDesign design = make_design(Experiment::e2b, ExposureCondition::source);
  auto items = generate_templates(design, 19);
  auto schedule = build_schedule(design, items, 19);
  MockBias bias;
  bias.content_accuracy = 0.8;
  bias.subject_bias_by_exposure[ExposureCondition::source] = 0.4;
  bias.goal_bias = 0.3;
  MockResponder a(bias, 21), b(bias, 21);
  auto ra = run_session(profile_for(design), schedule, a);
  auto rb = run_session(profile_for(design), schedule, b);
  CHECK(serialize_transcript(ra.transcript) == serialize_transcript(rb.transcript));
  CHECK(records_to_tsv(ra.records) == records_to_tsv(rb.records));
}

TEST_CASE("a client failure aborts the session but keeps completed slots") {
  ExperimentDesign design = make_design(Experiment::e1a, ExposureCondition::subject);
  auto items = generate_templates(design, 42);
  auto schedule = build_schedule(design, items, 42);
  FlakyResponder responder(MockBias{}, 7, 7);  // fails during the 4th slot
  SessionResult result = run_session(profile_for(design), schedule, responder);
  REQUIRE(result.failure.has_value());
  CHECK(result.records.size() == 3);
  CHECK(result.failure->find("connection reset") != std::string::npos);
}

TEST_CASE("empty schedules are rejected") {
  MockResponder responder(MockBias{}, 1);
  ExperimentDesign design = make_design(Experiment::e1a, ExposureCondition::subject);
  CHECK_THROWS_AS(run_session(profile_for(design), {}, responder), ConfigError);
}
