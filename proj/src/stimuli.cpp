#include "refprime/stimuli.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "refprime/errors.hpp"
#include "refprime/math/rng.hpp"

namespace refprime {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Gender g) { return g == Gender::male ? "male" : "female"; }
std::string to_string(SyntacticRole r) {
  return r == SyntacticRole::subject ? "subject" : "nonsubject";
}
std::string to_string(ThematicRole r) { return r == ThematicRole::source ? "source" : "goal"; }
std::string to_string(VerbClass v) {
  switch (v) {
    case VerbClass::joint: return "joint";
    case VerbClass::gs: return "gs";
    case VerbClass::sg: return "sg";
  }
  return "?";
}
std::string to_string(QuestionFocus f) {
  switch (f) {
    case QuestionFocus::subject: return "subject";
    case QuestionFocus::nonsubject: return "nonsubject";
    case QuestionFocus::source: return "source";
    case QuestionFocus::goal: return "goal";
  }
  return "?";
}
std::string to_string(Phase p) { return p == Phase::exposure ? "exposure" : "critical"; }
std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::e1a: return "e1a";
    case Experiment::e2a: return "e2a";
    case Experiment::e2b: return "e2b";
  }
  return "?";
}
std::string to_string(ExposureCondition c) {
  switch (c) {
    case ExposureCondition::subject: return "subject";
    case ExposureCondition::nonsubject: return "nonsubject";
    case ExposureCondition::goal: return "goal";
    case ExposureCondition::source: return "source";
  }
  return "?";
}

namespace {

[[noreturn]] void bad_enum(const std::string& what, const std::string& value) {
  throw ParseError("unknown " + what + ": '" + value + "'");
}

}  // namespace

Gender gender_from_string(const std::string& s) {
  if (s == "male") return Gender::male;
  if (s == "female") return Gender::female;
  bad_enum("gender", s);
}
SyntacticRole syntactic_role_from_string(const std::string& s) {
  if (s == "subject") return SyntacticRole::subject;
  if (s == "nonsubject") return SyntacticRole::nonsubject;
  bad_enum("syntactic_role", s);
}
ThematicRole thematic_role_from_string(const std::string& s) {
  if (s == "source") return ThematicRole::source;
  if (s == "goal") return ThematicRole::goal;
  bad_enum("thematic_role", s);
}
VerbClass verb_class_from_string(const std::string& s) {
  if (s == "joint") return VerbClass::joint;
  if (s == "gs") return VerbClass::gs;
  if (s == "sg") return VerbClass::sg;
  bad_enum("verb_class", s);
}
QuestionFocus focus_from_string(const std::string& s) {
  if (s == "subject") return QuestionFocus::subject;
  if (s == "nonsubject") return QuestionFocus::nonsubject;
  if (s == "source") return QuestionFocus::source;
  if (s == "goal") return QuestionFocus::goal;
  bad_enum("question focus", s);
}
Phase phase_from_string(const std::string& s) {
  if (s == "exposure") return Phase::exposure;
  if (s == "critical") return Phase::critical;
  bad_enum("phase", s);
}
Experiment experiment_from_string(const std::string& s) {
  if (s == "e1a") return Experiment::e1a;
  if (s == "e2a") return Experiment::e2a;
  if (s == "e2b") return Experiment::e2b;
  bad_enum("experiment", s);
}
ExposureCondition condition_from_string(const std::string& s) {
  if (s == "subject") return ExposureCondition::subject;
  if (s == "nonsubject") return ExposureCondition::nonsubject;
  if (s == "goal") return ExposureCondition::goal;
  if (s == "source") return ExposureCondition::source;
  bad_enum("exposure condition", s);
}

const Character& StimulusItem::by_thematic_role(ThematicRole r) const {
  if (characters.first.thematic_role == r) return characters.first;
  if (characters.second.thematic_role == r) return characters.second;
  throw ValidationError("item " + item_id + ": no character holds thematic role " + to_string(r));
}

const Character& StimulusItem::by_focus(QuestionFocus f) const {
  switch (f) {
    case QuestionFocus::subject: return characters.first;
    case QuestionFocus::nonsubject: return characters.second;
    case QuestionFocus::source: return by_thematic_role(ThematicRole::source);
    case QuestionFocus::goal: return by_thematic_role(ThematicRole::goal);
  }
  throw ValidationError("item " + item_id + ": bad focus");
}

std::pair<QuestionFocus, QuestionFocus> legal_foci(Experiment exp) {
  if (exp == Experiment::e2b) return {QuestionFocus::goal, QuestionFocus::source};
  return {QuestionFocus::subject, QuestionFocus::nonsubject};
}

std::pair<ExposureCondition, ExposureCondition> legal_conditions(Experiment exp) {
  if (exp == Experiment::e2b) return {ExposureCondition::goal, ExposureCondition::source};
  return {ExposureCondition::subject, ExposureCondition::nonsubject};
}

ExperimentDesign make_design(Experiment exp, ExposureCondition cond) {
  ExperimentDesign d;
  d.experiment = exp;
  d.exposure_condition = cond;
  if (exp == Experiment::e1a) {
    d.n_initial_exposures = 20;
    d.verb_mix = {{VerbClass::joint, 1.0}};
  } else {
    d.n_initial_exposures = 12;
    d.verb_mix = {{VerbClass::gs, 0.5}, {VerbClass::sg, 0.5}};
  }
  d.n_interleaved_exposures = 12;
  d.n_critical = 12;
  validate_design(d);
  return d;
}

void validate_design(const ExperimentDesign& d) {
  auto [a, b] = legal_conditions(d.experiment);
  if (d.exposure_condition != a && d.exposure_condition != b) {
    throw ConfigError("experiment " + to_string(d.experiment) + " does not permit exposure condition " +
                      to_string(d.exposure_condition));
  }
  if (d.n_initial_exposures < 0 || d.n_interleaved_exposures < 0 || d.n_critical < 0) {
    throw ConfigError("trial counts must be non-negative");
  }
  auto weight = [&](VerbClass c) {
    auto it = d.verb_mix.find(c);
    return it == d.verb_mix.end() ? 0.0 : it->second;
  };
  if (d.experiment == Experiment::e1a) {
    if (weight(VerbClass::joint) != 1.0 || d.verb_mix.size() != 1) {
      throw ConfigError("e1a requires verb_mix {joint: 1.0}");
    }
  } else {
    if (weight(VerbClass::gs) != 0.5 || weight(VerbClass::sg) != 0.5 || d.verb_mix.size() != 2) {
      throw ConfigError(to_string(d.experiment) + " requires verb_mix {gs: 0.5, sg: 0.5}");
    }
  }
}

std::vector<std::string> Lexicon::names_of(Gender g) const {
  std::vector<std::string> out;
  for (const auto& n : names)
    if (n.gender == g) out.push_back(n.name);
  return out;
}

std::vector<Lexicon::Verb> Lexicon::verbs_of(VerbClass c) const {
  std::vector<Verb> out;
  for (const auto& v : verbs)
    if (v.verb_class == c) out.push_back(v);
  return out;
}

namespace {

constexpr const char* kDefaultLexiconJson = R"LEX({
  "names": [
    {"name": "Matt", "gender": "male"},
    {"name": "Will", "gender": "male"},
    {"name": "Liz", "gender": "female"},
    {"name": "Ana", "gender": "female"}
  ],
  "verbs": [
    {"class": "joint", "past": "danced with", "base": "dance with", "prep": ""},
    {"class": "joint", "past": "talked with", "base": "talk with", "prep": ""},
    {"class": "joint", "past": "played cards with", "base": "play cards with", "prep": ""},
    {"class": "joint", "past": "studied with", "base": "study with", "prep": ""},
    {"class": "gs", "past": "received", "base": "receive", "prep": "from"},
    {"class": "gs", "past": "got", "base": "get", "prep": "from"},
    {"class": "gs", "past": "took", "base": "take", "prep": "from"},
    {"class": "sg", "past": "sent", "base": "send", "prep": "to"},
    {"class": "sg", "past": "gave", "base": "give", "prep": "to"},
    {"class": "sg", "past": "handed", "base": "hand", "prep": "to"}
  ],
  "objects": ["a letter", "a book", "a package", "a postcard", "a gift", "a note"],
  "continuations": [
    {"past": "got some juice", "base": "get some juice"},
    {"past": "felt very tired", "base": "feel very tired"},
    {"past": "looked out of the window", "base": "look out of the window"},
    {"past": "checked the time", "base": "check the time"},
    {"past": "smiled for a moment", "base": "smile for a moment"},
    {"past": "sat down on the bench", "base": "sit down on the bench"}
  ]
})LEX";

Lexicon parse_lexicon(const ordered_json& j) {
  Lexicon lex;
  for (const auto& n : j.at("names")) {
    lex.names.push_back({n.at("name").get<std::string>(),
                         gender_from_string(n.at("gender").get<std::string>())});
  }
  for (const auto& v : j.at("verbs")) {
    Lexicon::Verb verb;
    verb.verb_class = verb_class_from_string(v.at("class").get<std::string>());
    verb.past = v.at("past").get<std::string>();
    verb.base = v.at("base").get<std::string>();
    verb.prep = v.value("prep", std::string());
    lex.verbs.push_back(verb);
  }
  for (const auto& o : j.at("objects")) lex.objects.push_back(o.get<std::string>());
  for (const auto& c : j.at("continuations")) {
    lex.continuations.push_back({c.at("past").get<std::string>(), c.at("base").get<std::string>()});
  }
  return lex;
}

}  // namespace

Lexicon lexicon_from_json_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("lexicon: ") + e.what());
  }
  try {
    return parse_lexicon(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("lexicon: ") + e.what());
  }
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open lexicon file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return lexicon_from_json_text(ss.str());
}

const Lexicon& default_lexicon() {
  static const Lexicon lex = lexicon_from_json_text(kDefaultLexiconJson);
  return lex;
}

void validate_item(const StimulusItem& item) {
  auto fail = [&](const std::string& rule) {
    throw ValidationError("item " + item.item_id + ": " + rule);
  };
  if (item.item_id.empty()) throw ValidationError("item with empty item_id");
  const Character& a = item.characters.first;
  const Character& b = item.characters.second;
  if (a.name.empty() || b.name.empty()) fail("character names must be nonempty");
  if (a.name == b.name) fail("characters must have distinct names");
  if (a.syntactic_role != SyntacticRole::subject || b.syntactic_role != SyntacticRole::nonsubject) {
    fail("characters must be ordered (subject, nonsubject)");
  }
  bool same_gender = a.gender == b.gender;
  if (item.ambiguous != same_gender) {
    fail("ambiguous flag must equal same-gender pairing");
  }
  bool transfer = item.verb_class != VerbClass::joint;
  if (transfer) {
    if (!a.thematic_role || !b.thematic_role) fail("gs/sg items need thematic roles on both characters");
    ThematicRole subj_role =
        item.verb_class == VerbClass::gs ? ThematicRole::goal : ThematicRole::source;
    if (*a.thematic_role != subj_role) {
      fail(std::string("subject of a ") + to_string(item.verb_class) + " item must be the " +
           to_string(subj_role));
    }
    if (*b.thematic_role == *a.thematic_role) fail("characters must hold opposite thematic roles");
  } else {
    if (a.thematic_role || b.thematic_role) fail("joint items must not carry thematic roles");
  }
  if (item.content_gold != "yes" && item.content_gold != "no") {
    fail("content_gold must be yes or no");
  }
  if (item.story_text.empty() || item.content_question.empty()) {
    fail("story and content question must be nonempty");
  }
  std::vector<QuestionFocus> expected =
      transfer ? std::vector<QuestionFocus>{QuestionFocus::subject, QuestionFocus::nonsubject,
                                            QuestionFocus::source, QuestionFocus::goal}
               : std::vector<QuestionFocus>{QuestionFocus::subject, QuestionFocus::nonsubject};
  if (item.ref_question_variants.size() != expected.size()) {
    fail("wrong number of reference-question variants for verb class");
  }
  for (QuestionFocus f : expected) {
    auto it = item.ref_question_variants.find(f);
    if (it == item.ref_question_variants.end()) fail("missing variant for focus " + to_string(f));
    if (it->second.empty()) fail("empty variant for focus " + to_string(f));
    // The variant must name the character holding that role.
    const Character& ch = item.by_focus(f);
    if (it->second.find(ch.name) == std::string::npos) {
      fail("variant for focus " + to_string(f) + " does not name " + ch.name);
    }
  }
  if (transfer) {
    if (item.ref_question_variants.at(QuestionFocus::goal) !=
        item.ref_question_variants.at(item.by_thematic_role(ThematicRole::goal).syntactic_role ==
                                              SyntacticRole::subject
                                          ? QuestionFocus::subject
                                          : QuestionFocus::nonsubject)) {
      fail("goal variant must match the variant of the character holding the goal role");
    }
  }
}

Gender pronoun_gender(const StimulusItem& item) {
  const std::string& s = item.story_text;
  size_t start = s.find('.');
  if (start == std::string::npos) {
    throw ValidationError("item " + item.item_id + ": story has no sentence boundary");
  }
  size_t i = start + 1;
  while (i < s.size()) {
    while (i < s.size() && !std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
    size_t j = i;
    while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
    std::string word = s.substr(i, j - i);
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (word == "he") return Gender::male;
    if (word == "she") return Gender::female;
    i = j;
  }
  throw ValidationError("item " + item.item_id + ": no pronoun found after first sentence");
}

const Character& intended_referent(const StimulusItem& item) {
  if (item.ambiguous) {
    throw ValidationError("item " + item.item_id + ": ambiguous item has no unique referent");
  }
  Gender g = pronoun_gender(item);
  if (item.characters.first.gender == g) return item.characters.first;
  if (item.characters.second.gender == g) return item.characters.second;
  throw ValidationError("item " + item.item_id + ": pronoun matches neither character");
}

bool holds_condition_role(const StimulusItem& item, const Character& ch, ExposureCondition cond) {
  switch (cond) {
    case ExposureCondition::subject: return ch.syntactic_role == SyntacticRole::subject;
    case ExposureCondition::nonsubject: return ch.syntactic_role == SyntacticRole::nonsubject;
    case ExposureCondition::goal: return ch.thematic_role == ThematicRole::goal;
    case ExposureCondition::source: return ch.thematic_role == ThematicRole::source;
  }
  return false;
}

namespace {

ordered_json character_to_json(const Character& c) {
  ordered_json j;
  j["name"] = c.name;
  j["gender"] = to_string(c.gender);
  j["syntactic_role"] = to_string(c.syntactic_role);
  if (c.thematic_role) j["thematic_role"] = to_string(*c.thematic_role);
  return j;
}

Character character_from_json(const ordered_json& j) {
  Character c;
  c.name = j.at("name").get<std::string>();
  c.gender = gender_from_string(j.at("gender").get<std::string>());
  c.syntactic_role = syntactic_role_from_string(j.at("syntactic_role").get<std::string>());
  if (j.contains("thematic_role")) {
    c.thematic_role = thematic_role_from_string(j.at("thematic_role").get<std::string>());
  }
  return c;
}

}  // namespace

std::string stimulus_to_json_line(const StimulusItem& item) {
  ordered_json j;
  j["item_id"] = item.item_id;
  j["verb_class"] = to_string(item.verb_class);
  j["ambiguous"] = item.ambiguous;
  j["characters"] = ordered_json::array(
      {character_to_json(item.characters.first), character_to_json(item.characters.second)});
  j["story_text"] = item.story_text;
  j["content_question"] = item.content_question;
  j["content_gold"] = item.content_gold;
  ordered_json variants;
  // Fixed focus order keeps the writer canonical.
  for (QuestionFocus f : {QuestionFocus::subject, QuestionFocus::nonsubject, QuestionFocus::source,
                          QuestionFocus::goal}) {
    auto it = item.ref_question_variants.find(f);
    if (it != item.ref_question_variants.end()) variants[to_string(f)] = it->second;
  }
  j["ref_question_variants"] = variants;
  return j.dump();
}

StimulusItem stimulus_from_json_line(const std::string& line, size_t line_no) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("stimulus file line " + std::to_string(line_no) + ": " + e.what());
  }
  StimulusItem item;
  try {
    item.item_id = j.at("item_id").get<std::string>();
    item.verb_class = verb_class_from_string(j.at("verb_class").get<std::string>());
    item.ambiguous = j.at("ambiguous").get<bool>();
    const auto& chars = j.at("characters");
    if (!chars.is_array() || chars.size() != 2) {
      throw ParseError("characters must be an array of 2");
    }
    item.characters = {character_from_json(chars[0]), character_from_json(chars[1])};
    item.story_text = j.at("story_text").get<std::string>();
    item.content_question = j.at("content_question").get<std::string>();
    item.content_gold = j.at("content_gold").get<std::string>();
    for (const auto& [key, value] : j.at("ref_question_variants").items()) {
      item.ref_question_variants[focus_from_string(key)] = value.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("stimulus file line " + std::to_string(line_no) + " (item '" + item.item_id +
                     "'): " + e.what());
  }
  return item;
}

std::vector<StimulusItem> load_stimuli(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open stimulus file: " + path);
  std::vector<StimulusItem> items;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    StimulusItem item = stimulus_from_json_line(line, line_no);
    validate_item(item);
    items.push_back(std::move(item));
  }
  return items;
}

void write_stimuli(const std::string& path, const std::vector<StimulusItem>& items) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open stimulus file for writing: " + path);
  for (const auto& item : items) out << stimulus_to_json_line(item) << "\n";
}

namespace {

struct ItemFactory {
  const Lexicon& lex;
  Experiment experiment;

  StimulusItem make(const std::string& id, VerbClass vc, Character subj, Character obj,
                    Gender pron_gender, Rng& rng) const {
    StimulusItem item;
    item.item_id = id;
    item.verb_class = vc;
    if (vc == VerbClass::gs) {
      subj.thematic_role = ThematicRole::goal;
      obj.thematic_role = ThematicRole::source;
    } else if (vc == VerbClass::sg) {
      subj.thematic_role = ThematicRole::source;
      obj.thematic_role = ThematicRole::goal;
    }
    item.characters = {subj, obj};
    item.ambiguous = subj.gender == obj.gender;

    auto verbs = lex.verbs_of(vc);
    if (verbs.empty()) throw ConfigError("lexicon has no verbs of class " + to_string(vc));
    const auto& verb = verbs[rng.below(verbs.size())];
    const auto& cont = lex.continuations[rng.below(lex.continuations.size())];

    std::string first_sentence;
    std::string content_yes, content_no;
    if (vc == VerbClass::joint) {
      if (verbs.size() < 2) throw ConfigError("joint verb lexicon too small for foil questions");
      first_sentence = subj.name + " " + verb.past + " " + obj.name + ".";
      content_yes = "Did " + subj.name + " " + verb.base + " " + obj.name + "?";
      size_t foil;
      do {
        foil = rng.below(verbs.size());
      } while (verbs[foil].past == verb.past);
      content_no = "Did " + subj.name + " " + verbs[foil].base + " " + obj.name + "?";
    } else {
      if (lex.objects.size() < 2) throw ConfigError("object lexicon too small for foil questions");
      const auto& obj_noun = lex.objects[rng.below(lex.objects.size())];
      first_sentence =
          subj.name + " " + verb.past + " " + obj_noun + " " + verb.prep + " " + obj.name + ".";
      content_yes =
          "Did " + subj.name + " " + verb.base + " " + obj_noun + " " + verb.prep + " " + obj.name + "?";
      size_t foil;
      do {
        foil = rng.below(lex.objects.size());
      } while (lex.objects[foil] == obj_noun);
      content_no = "Did " + subj.name + " " + verb.base + " " + lex.objects[foil] + " " + verb.prep +
                   " " + obj.name + "?";
    }
    std::string pron = pron_gender == Gender::male ? "he" : "she";
    item.story_text = first_sentence + " Then " + pron + " " + cont.past + ".";

    bool gold_yes = rng.bernoulli(0.5);
    item.content_question = gold_yes ? content_yes : content_no;
    item.content_gold = gold_yes ? "yes" : "no";

    auto ref_q = [&](const Character& ch) { return "Did " + ch.name + " " + cont.base + "?"; };
    item.ref_question_variants[QuestionFocus::subject] = ref_q(subj);
    item.ref_question_variants[QuestionFocus::nonsubject] = ref_q(obj);
    if (vc != VerbClass::joint) {
      item.ref_question_variants[QuestionFocus::source] =
          ref_q(item.by_thematic_role(ThematicRole::source));
      item.ref_question_variants[QuestionFocus::goal] =
          ref_q(item.by_thematic_role(ThematicRole::goal));
    }
    validate_item(item);
    return item;
  }
};

std::vector<VerbClass> verb_class_sequence(const ExperimentDesign& design, int count) {
  std::vector<VerbClass> seq;
  if (design.experiment == Experiment::e1a) {
    seq.assign(count, VerbClass::joint);
  } else {
    // Exact 50/50 split, alternating for determinism before the scheduler shuffles.
    for (int i = 0; i < count; ++i) seq.push_back(i % 2 == 0 ? VerbClass::gs : VerbClass::sg);
  }
  return seq;
}

}  // namespace

std::vector<StimulusItem> generate_templates(const ExperimentDesign& design, uint64_t rng_seed,
                                             const Lexicon& lexicon) {
  validate_design(design);
  auto male_names = lexicon.names_of(Gender::male);
  auto female_names = lexicon.names_of(Gender::female);
  if (male_names.size() < 2 || female_names.size() < 2) {
    throw ConfigError("name pool needs at least 2 names per gender");
  }
  ItemFactory factory{lexicon, design.experiment};
  std::vector<StimulusItem> items;

  int n_exposure = design.n_initial_exposures + design.n_interleaved_exposures;
  {
    // Exposure stream mixes the condition so the intended-referent role is baked in.
    Rng rng(derive_seed(rng_seed, "exposure"));
    auto classes = verb_class_sequence(design, n_exposure);
    for (int i = 0; i < n_exposure; ++i) {
      Character subj, obj;
      subj.syntactic_role = SyntacticRole::subject;
      obj.syntactic_role = SyntacticRole::nonsubject;
      // Different genders make the pronoun unambiguous.
      bool subj_male = rng.bernoulli(0.5);
      subj.gender = subj_male ? Gender::male : Gender::female;
      obj.gender = subj_male ? Gender::female : Gender::male;
      auto& subj_pool = subj.gender == Gender::male ? male_names : female_names;
      auto& obj_pool = obj.gender == Gender::male ? male_names : female_names;
      subj.name = subj_pool[rng.below(subj_pool.size())];
      obj.name = obj_pool[rng.below(obj_pool.size())];

      VerbClass vc = classes[i];
      // The pronoun refers to whichever character holds the condition role.
      Gender pron;
      switch (design.exposure_condition) {
        case ExposureCondition::subject: pron = subj.gender; break;
        case ExposureCondition::nonsubject: pron = obj.gender; break;
        case ExposureCondition::goal:
          pron = (vc == VerbClass::gs) ? subj.gender : obj.gender;
          break;
        case ExposureCondition::source:
          pron = (vc == VerbClass::gs) ? obj.gender : subj.gender;
          break;
        default: pron = subj.gender; break;
      }
      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "%s-exp-%s-%03d", to_string(design.experiment).c_str(),
                    to_string(design.exposure_condition).c_str(), i + 1);
      items.push_back(factory.make(idbuf, vc, subj, obj, pron, rng));
    }
  }
  {
    // Critical stream is independent of the exposure condition so all
    // cohorts share the same ambiguous items.
    Rng rng(derive_seed(rng_seed, "critical"));
    auto classes = verb_class_sequence(design, design.n_critical);
    for (int i = 0; i < design.n_critical; ++i) {
      bool male_pair = rng.bernoulli(0.5);
      auto& pool = male_pair ? male_names : female_names;
      size_t first = rng.below(pool.size());
      size_t second;
      do {
        second = rng.below(pool.size());
      } while (second == first);
      Character subj{pool[first], male_pair ? Gender::male : Gender::female, SyntacticRole::subject, {}};
      Character obj{pool[second], male_pair ? Gender::male : Gender::female, SyntacticRole::nonsubject, {}};
      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "%s-crit-%03d", to_string(design.experiment).c_str(), i + 1);
      items.push_back(factory.make(idbuf, classes[i], subj, obj, subj.gender, rng));
    }
  }
  return items;
}

std::vector<TrialSlot> build_schedule(const ExperimentDesign& design,
                                      const std::vector<StimulusItem>& items, uint64_t rng_seed) {
  validate_design(design);
  // Only unambiguous items realizing this condition's referential pattern
  // are eligible as exposures, so one stimulus file can serve both
  // conditions of an experiment.
  std::vector<const StimulusItem*> exposure_items, critical_items;
  for (const auto& item : items) {
    if (item.ambiguous) {
      critical_items.push_back(&item);
    } else if (holds_condition_role(item, intended_referent(item), design.exposure_condition)) {
      exposure_items.push_back(&item);
    }
  }
  int n_exposure = design.n_initial_exposures + design.n_interleaved_exposures;
  if (static_cast<int>(exposure_items.size()) < n_exposure) {
    throw ConfigError("need " + std::to_string(n_exposure) + " unambiguous items matching the " +
                      to_string(design.exposure_condition) + " exposure condition, have " +
                      std::to_string(exposure_items.size()));
  }
  if (static_cast<int>(critical_items.size()) < design.n_critical) {
    throw ConfigError("need " + std::to_string(design.n_critical) + " ambiguous items, have " +
                      std::to_string(critical_items.size()));
  }
  if (design.n_critical % 2 != 0) {
    throw ConfigError("n_critical must be even for an exact focus balance");
  }

  Rng rng(rng_seed);
  auto [focus_a, focus_b] = legal_foci(design.experiment);

  std::vector<const StimulusItem*> exp_order = exposure_items;
  rng.shuffle(exp_order);
  exp_order.resize(n_exposure);
  std::vector<const StimulusItem*> crit_order = critical_items;
  rng.shuffle(crit_order);
  crit_order.resize(design.n_critical);

  // Reference-question foci are split between both phrasings on every phase;
  // the critical split is exact, stratified by verb class when possible.
  std::vector<QuestionFocus> exposure_foci;
  for (int i = 0; i < n_exposure; ++i) exposure_foci.push_back(i % 2 == 0 ? focus_a : focus_b);
  rng.shuffle(exposure_foci);

  std::map<const StimulusItem*, QuestionFocus> critical_focus;
  {
    std::map<VerbClass, std::vector<const StimulusItem*>> strata;
    for (const StimulusItem* item : crit_order) strata[item->verb_class].push_back(item);
    bool stratifiable = true;
    for (auto& [vc, members] : strata) {
      if (members.size() % 2 != 0) stratifiable = false;
    }
    if (!stratifiable) {
      strata.clear();
      strata[VerbClass::joint] = crit_order;  // single stratum, overall balance only
    }
    for (auto& [vc, members] : strata) {
      std::vector<QuestionFocus> foci;
      for (size_t i = 0; i < members.size(); ++i) foci.push_back(i < members.size() / 2 ? focus_a : focus_b);
      rng.shuffle(foci);
      for (size_t i = 0; i < members.size(); ++i) critical_focus[members[i]] = foci[i];
    }
  }

  std::vector<Phase> tail_phases;
  for (int i = 0; i < design.n_interleaved_exposures; ++i) tail_phases.push_back(Phase::exposure);
  for (int i = 0; i < design.n_critical; ++i) tail_phases.push_back(Phase::critical);
  rng.shuffle(tail_phases);

  std::vector<TrialSlot> schedule;
  size_t exp_idx = 0, crit_idx = 0, exp_focus_idx = 0;
  auto push_exposure = [&]() {
    TrialSlot slot;
    slot.position = static_cast<int>(schedule.size());
    slot.item = *exp_order[exp_idx++];
    slot.phase = Phase::exposure;
    slot.ref_focus = exposure_foci[exp_focus_idx++];
    schedule.push_back(std::move(slot));
  };
  auto push_critical = [&]() {
    TrialSlot slot;
    slot.position = static_cast<int>(schedule.size());
    const StimulusItem* item = crit_order[crit_idx++];
    slot.item = *item;
    slot.phase = Phase::critical;
    slot.ref_focus = critical_focus.at(item);
    schedule.push_back(std::move(slot));
  };
  for (int i = 0; i < design.n_initial_exposures; ++i) push_exposure();
  for (Phase p : tail_phases) {
    if (p == Phase::exposure) {
      push_exposure();
    } else {
      push_critical();
    }
  }
  return schedule;
}

std::string phrase_reference_question(const StimulusItem& item, QuestionFocus focus) {
  if (item.verb_class == VerbClass::joint &&
      (focus == QuestionFocus::source || focus == QuestionFocus::goal)) {
    throw ValidationError("item " + item.item_id + ": focus " + to_string(focus) +
                          " is illegal for joint items");
  }
  auto it = item.ref_question_variants.find(focus);
  if (it == item.ref_question_variants.end()) {
    throw ValidationError("item " + item.item_id + ": no variant for focus " + to_string(focus));
  }
  return it->second;
}

}  // namespace refprime
