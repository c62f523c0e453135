#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace refprime {

enum class Gender { male, female };
enum class SyntacticRole { subject, nonsubject };
enum class ThematicRole { source, goal };
enum class VerbClass { joint, gs, sg };
enum class QuestionFocus { subject, nonsubject, source, goal };
enum class Phase { exposure, critical };
enum class Experiment { e1a, e2a, e2b };

// Exposure conditions share the focus label space: a condition names the
// role that every exposure item's unambiguous referent holds.
enum class ExposureCondition { subject, nonsubject, goal, source };

std::string to_string(Gender g);
std::string to_string(SyntacticRole r);
std::string to_string(ThematicRole r);
std::string to_string(VerbClass v);
std::string to_string(QuestionFocus f);
std::string to_string(Phase p);
std::string to_string(Experiment e);
std::string to_string(ExposureCondition c);

Gender gender_from_string(const std::string& s);
SyntacticRole syntactic_role_from_string(const std::string& s);
ThematicRole thematic_role_from_string(const std::string& s);
VerbClass verb_class_from_string(const std::string& s);
QuestionFocus focus_from_string(const std::string& s);
Phase phase_from_string(const std::string& s);
Experiment experiment_from_string(const std::string& s);
ExposureCondition condition_from_string(const std::string& s);

struct Character {
  std::string name;
  Gender gender = Gender::male;
  SyntacticRole syntactic_role = SyntacticRole::subject;
  std::optional<ThematicRole> thematic_role;
};

// One two-sentence story plus its questions. The second sentence carries the
// pronoun whose referent the reference question probes; the item is
// ambiguous exactly when both characters share a gender.
struct StimulusItem {
  std::string item_id;
  VerbClass verb_class = VerbClass::joint;
  std::pair<Character, Character> characters;  // first = subject
  std::string story_text;
  std::string content_question;
  std::string content_gold;  // "yes" or "no"
  std::map<QuestionFocus, std::string> ref_question_variants;
  bool ambiguous = false;

  const Character& subject() const { return characters.first; }
  const Character& nonsubject() const { return characters.second; }
  // Character holding a thematic role; only valid for gs/sg items.
  const Character& by_thematic_role(ThematicRole r) const;
  const Character& by_focus(QuestionFocus f) const;
};

struct ExperimentDesign {
  Experiment experiment = Experiment::e1a;
  ExposureCondition exposure_condition = ExposureCondition::subject;
  int n_initial_exposures = 20;
  int n_interleaved_exposures = 12;
  int n_critical = 12;
  std::map<VerbClass, double> verb_mix;  // defaults set by make_design
  uint64_t seed = 0;
};

// Design with per-experiment defaults (counts, verb mix, legal conditions).
ExperimentDesign make_design(Experiment exp, ExposureCondition cond);
void validate_design(const ExperimentDesign& design);

struct TrialSlot {
  int position = 0;
  StimulusItem item;
  Phase phase = Phase::exposure;
  QuestionFocus ref_focus = QuestionFocus::subject;
};

// Lexicon backing the synthetic template generator. Wording lives in data,
// not code; the structure is what carries the experimental manipulation.
struct Lexicon {
  struct Name {
    std::string name;
    Gender gender;
  };
  struct Verb {
    VerbClass verb_class;
    std::string past;      // "danced with", "received", "sent"
    std::string base;      // "dance with", "receive", "send"
    std::string prep;      // "", "from", "to"
  };
  struct Continuation {
    std::string past;  // "got some juice"
    std::string base;  // "get some juice"
  };
  std::vector<Name> names;
  std::vector<Verb> verbs;
  std::vector<std::string> objects;  // "a letter", ...
  std::vector<Continuation> continuations;

  std::vector<std::string> names_of(Gender g) const;
  std::vector<Verb> verbs_of(VerbClass c) const;
};

const Lexicon& default_lexicon();
Lexicon load_lexicon(const std::string& path);
Lexicon lexicon_from_json_text(const std::string& text);

// Throws ValidationError naming the item and rule on the first violation.
void validate_item(const StimulusItem& item);

// Gender of the story's pronoun (first he/she after the first sentence).
Gender pronoun_gender(const StimulusItem& item);

// For an unambiguous item, the character the pronoun refers to.
const Character& intended_referent(const StimulusItem& item);

// Whether the given character holds the role named by the condition.
bool holds_condition_role(const StimulusItem& item, const Character& ch, ExposureCondition cond);

std::vector<StimulusItem> load_stimuli(const std::string& path);
void write_stimuli(const std::string& path, const std::vector<StimulusItem>& items);
std::string stimulus_to_json_line(const StimulusItem& item);
StimulusItem stimulus_from_json_line(const std::string& line, size_t line_no);

// Synthesizes enough unambiguous items for every exposure slot and
// ambiguous items for every critical slot. Critical items depend only on
// (seed, experiment), not on the exposure condition, so cohorts in
// different conditions share critical items.
std::vector<StimulusItem> generate_templates(const ExperimentDesign& design, uint64_t rng_seed,
                                             const Lexicon& lexicon = default_lexicon());

std::vector<TrialSlot> build_schedule(const ExperimentDesign& design,
                                      const std::vector<StimulusItem>& items, uint64_t rng_seed);

// The yes/no question naming the character in the given focus role.
std::string phrase_reference_question(const StimulusItem& item, QuestionFocus focus);

// Foci legal on reference questions for an experiment, in coding order
// (positive-coded focus first).
std::pair<QuestionFocus, QuestionFocus> legal_foci(Experiment exp);
std::pair<ExposureCondition, ExposureCondition> legal_conditions(Experiment exp);

}  // namespace refprime
