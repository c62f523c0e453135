#include "refprime/session.hpp"

#include <algorithm>

#include "refprime/errors.hpp"

namespace refprime {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Answers are folded to one line inside the transcript; the raw text is
// preserved in records and request logs.
std::string one_line(const std::string& s) {
  std::string t = trim(s);
  std::replace(t.begin(), t.end(), '\n', ' ');
  std::replace(t.begin(), t.end(), '\r', ' ');
  return t;
}

}  // namespace

std::string serialize_transcript(const Transcript& transcript) {
  std::string out;
  if (!transcript.preamble.empty()) {
    out += transcript.preamble;
    if (!transcript.turns.empty()) out += "\n\n";
  }
  for (size_t i = 0; i < transcript.turns.size(); ++i) {
    if (i > 0) out += "\n";
    out += transcript.turns[i].text;
  }
  return out;
}

SessionResult run_session(const ParticipantProfile& profile, const std::vector<TrialSlot>& schedule,
                          Responder& responder, const AnswerLexicon& lexicon,
                          const std::string& instruction_header) {
  if (schedule.empty()) throw ConfigError("run_session: schedule must be nonempty");

  SessionResult result;
  Transcript& t = result.transcript;
  t.participant_id = profile.participant_id;
  t.preamble = instruction_header;
  if (profile.persona) {
    std::string persona = render_persona_prompt(*profile.persona);
    t.preamble = t.preamble.empty() ? persona : t.preamble + "\n" + persona;
  }

  const Experiment experiment = profile.design.experiment;

  auto ask = [&](const std::string& question, const TrialSlot& slot,
                 QuestionKind kind) -> std::string {
    t.turns.push_back({Transcript::Turn::Role::prompt, "Q: " + question});
    std::string prompt = serialize_transcript(t) + "\nA:";
    std::string raw = responder.answer(prompt, profile, slot, kind);
    result.log.push_back({slot.position, kind, prompt, raw});
    t.turns.push_back({Transcript::Turn::Role::model, "A: " + one_line(raw)});
    return raw;
  };

  for (const TrialSlot& slot : schedule) {
    t.turns.push_back({Transcript::Turn::Role::prompt, slot.item.story_text});
    std::string content_raw, ref_raw;
    try {
      content_raw = ask(slot.item.content_question, slot, QuestionKind::content);
      ref_raw = ask(phrase_reference_question(slot.item, slot.ref_focus), slot,
                    QuestionKind::reference);
    } catch (const ApiError& e) {
      result.failure = e.what();
      break;
    }
    t.turns.push_back({Transcript::Turn::Role::prompt, ""});  // slot separator

    TrialRecord r;
    r.participant_id = profile.participant_id;
    r.item_id = slot.item.item_id;
    r.phase = slot.phase;
    r.verb_class = slot.item.verb_class;
    r.exposure_condition = profile.design.exposure_condition;
    r.ref_focus = slot.ref_focus;
    r.content_raw = content_raw;
    r.content_parsed = parse_answer(content_raw, lexicon);
    r.content_correct =
        r.content_parsed != AnswerParse::unparseable &&
        to_string(r.content_parsed) == slot.item.content_gold;
    r.ref_raw = ref_raw;
    r.ref_parsed = parse_answer(ref_raw, lexicon);
    if (r.ref_parsed != AnswerParse::unparseable) {
      r.referent_code = code_referent(r.ref_parsed, slot.ref_focus, experiment);
    }
    result.records.push_back(std::move(r));
    t.cursor = result.records.size();
  }
  apply_exclusions(result.records);
  return result;
}

}  // namespace refprime
