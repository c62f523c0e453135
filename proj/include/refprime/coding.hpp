#pragma once

#include <optional>
#include <string>
#include <vector>

#include "refprime/stimuli.hpp"

namespace refprime {

enum class AnswerParse { yes, no, unparseable };

std::string to_string(AnswerParse a);
AnswerParse answer_parse_from_string(const std::string& s);

// One answered story: both raw answers, their parses, the binary referent
// code, and the exclusion flag. Persisted one row per record.
struct TrialRecord {
  std::string participant_id;
  std::string item_id;
  Phase phase = Phase::exposure;
  VerbClass verb_class = VerbClass::joint;
  ExposureCondition exposure_condition = ExposureCondition::subject;
  QuestionFocus ref_focus = QuestionFocus::subject;
  std::string content_raw;
  AnswerParse content_parsed = AnswerParse::unparseable;
  bool content_correct = false;
  std::string ref_raw;
  AnswerParse ref_parsed = AnswerParse::unparseable;
  std::optional<int> referent_code;  // subject=1 (e1a/e2a), goal=1 (e2b)
  bool excluded = false;
};

// Lexemes accepted as yes/no verdict tokens; extendable from config.
struct AnswerLexicon {
  std::vector<std::string> yes = {"yes", "yeah", "yep"};
  std::vector<std::string> no = {"no", "nope", "nah"};
};

// Case-insensitive match of the first alphabetic token.
AnswerParse parse_answer(const std::string& text, const AnswerLexicon& lexicon = AnswerLexicon());

// Binary referent code from a parsed yes/no and the question focus.
// e1a/e2a: 1 = subject interpretation; e2b: 1 = goal interpretation.
int code_referent(AnswerParse answer, QuestionFocus focus, Experiment experiment);

// Sets exclusion flags in place; never drops records.
void apply_exclusions(std::vector<TrialRecord>& records);

// Fraction of parsed-yes reference answers among non-excluded records in a
// phase. Throws on an empty filter.
double yes_rate(const std::vector<TrialRecord>& records, std::optional<Phase> phase_filter);

// Fraction of correct content answers among all records (exclusion is
// defined from this, so no exclusion filter applies).
double content_accuracy(const std::vector<TrialRecord>& records);

double exclusion_rate(const std::vector<TrialRecord>& records);

// Flat tab-delimited table, one row per record, columns in declaration
// order. Tabs/newlines inside raw answers are backslash-escaped.
void write_records(const std::string& path, const std::vector<TrialRecord>& records);
std::vector<TrialRecord> read_records(const std::string& path);
std::string records_to_tsv(const std::vector<TrialRecord>& records);
std::vector<TrialRecord> records_from_tsv(const std::string& text);

}  // namespace refprime
