#pragma once

#include <optional>
#include <string>
#include <vector>

#include "refprime/coding.hpp"
#include "refprime/llm_client.hpp"
#include "refprime/participants.hpp"
#include "refprime/stimuli.hpp"

namespace refprime {

// Append-only record of everything the simulated participant has seen and
// said. Each slot contributes six turns: story, content question, answer,
// reference question, answer, and an empty separator turn that renders as
// the blank line between slots.
struct Transcript {
  struct Turn {
    enum class Role { prompt, model };
    Role role;
    std::string text;
  };

  std::string participant_id;
  std::string preamble;  // persona sentence and/or instruction header; may be empty
  std::vector<Turn> turns;
  size_t cursor = 0;  // completed slots
};

// Deterministic, injective rendering: preamble, blank line, then turn texts
// joined by single newlines. Model turns carry their "A:" cue so every
// request prompt is a strict prefix of the next one.
std::string serialize_transcript(const Transcript& transcript);

struct RequestLogEntry {
  int slot_position;
  QuestionKind kind;
  std::string prompt;
  std::string raw_response;
};

struct SessionResult {
  Transcript transcript;
  std::vector<TrialRecord> records;   // one per completed slot
  std::vector<RequestLogEntry> log;   // raw request/response pairs
  std::optional<std::string> failure; // set when the client aborted the session
};

// Runs the recursive in-context procedure: each request's prompt is the
// serialization of the entire transcript so far. The optional instruction
// header precedes the persona sentence in the preamble. A client error
// aborts the session, keeping the records of completed slots.
SessionResult run_session(const ParticipantProfile& profile, const std::vector<TrialSlot>& schedule,
                          Responder& responder, const AnswerLexicon& lexicon = AnswerLexicon(),
                          const std::string& instruction_header = "");

}  // namespace refprime
