#include "refprime/coding.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "refprime/errors.hpp"

namespace refprime {

std::string to_string(AnswerParse a) {
  switch (a) {
    case AnswerParse::yes: return "yes";
    case AnswerParse::no: return "no";
    case AnswerParse::unparseable: return "unparseable";
  }
  return "?";
}

AnswerParse answer_parse_from_string(const std::string& s) {
  if (s == "yes") return AnswerParse::yes;
  if (s == "no") return AnswerParse::no;
  if (s == "unparseable") return AnswerParse::unparseable;
  throw ParseError("unknown answer parse: '" + s + "'");
}

AnswerParse parse_answer(const std::string& text, const AnswerLexicon& lexicon) {
  size_t i = 0;
  while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
  size_t j = i;
  while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
  if (i == j) return AnswerParse::unparseable;
  std::string token = text.substr(i, j - i);
  std::transform(token.begin(), token.end(), token.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const auto& lex : lexicon.yes)
    if (token == lex) return AnswerParse::yes;
  for (const auto& lex : lexicon.no)
    if (token == lex) return AnswerParse::no;
  return AnswerParse::unparseable;
}

int code_referent(AnswerParse answer, QuestionFocus focus, Experiment experiment) {
  if (answer != AnswerParse::yes && answer != AnswerParse::no) {
    throw ValidationError("code_referent: answer must be yes or no");
  }
  auto [positive, negative] = legal_foci(experiment);
  if (focus != positive && focus != negative) {
    throw ValidationError("code_referent: focus " + to_string(focus) + " is illegal for " +
                          to_string(experiment));
  }
  bool yes = answer == AnswerParse::yes;
  bool positive_focus = focus == positive;
  // yes to the positive-coded focus, or no to its complement.
  return (yes == positive_focus) ? 1 : 0;
}

void apply_exclusions(std::vector<TrialRecord>& records) {
  for (auto& r : records) {
    r.excluded = !r.content_correct || r.content_parsed == AnswerParse::unparseable ||
                 r.ref_parsed == AnswerParse::unparseable;
  }
}

double yes_rate(const std::vector<TrialRecord>& records, std::optional<Phase> phase_filter) {
  size_t n = 0, yes = 0;
  for (const auto& r : records) {
    if (r.excluded) continue;
    if (phase_filter && r.phase != *phase_filter) continue;
    ++n;
    if (r.ref_parsed == AnswerParse::yes) ++yes;
  }
  if (n == 0) throw ValidationError("yes_rate: no non-excluded records in filter");
  return static_cast<double>(yes) / static_cast<double>(n);
}

double content_accuracy(const std::vector<TrialRecord>& records) {
  if (records.empty()) throw ValidationError("content_accuracy: no records");
  size_t correct = 0;
  for (const auto& r : records)
    if (r.content_correct) ++correct;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

double exclusion_rate(const std::vector<TrialRecord>& records) {
  if (records.empty()) throw ValidationError("exclusion_rate: no records");
  size_t excluded = 0;
  for (const auto& r : records)
    if (r.excluded) ++excluded;
  return static_cast<double>(excluded) / static_cast<double>(records.size());
}

namespace {

const char* kHeader =
    "participant_id\titem_id\tphase\tverb_class\texposure_condition\tref_focus\tcontent_raw\t"
    "content_parsed\tcontent_correct\tref_raw\tref_parsed\treferent_code\texcluded";

std::string escape_field(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_field(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 >= s.size()) {
      out += s[i];
      continue;
    }
    switch (s[++i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: out += s[i];
    }
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string records_to_tsv(const std::vector<TrialRecord>& records) {
  std::ostringstream out;
  out << kHeader << "\n";
  for (const auto& r : records) {
    out << r.participant_id << '\t' << r.item_id << '\t' << to_string(r.phase) << '\t'
        << to_string(r.verb_class) << '\t' << to_string(r.exposure_condition) << '\t'
        << to_string(r.ref_focus) << '\t' << escape_field(r.content_raw) << '\t'
        << to_string(r.content_parsed) << '\t' << (r.content_correct ? 1 : 0) << '\t'
        << escape_field(r.ref_raw) << '\t' << to_string(r.ref_parsed) << '\t'
        << (r.referent_code ? std::to_string(*r.referent_code) : std::string()) << '\t'
        << (r.excluded ? 1 : 0) << "\n";
  }
  return out.str();
}

std::vector<TrialRecord> records_from_tsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("records table: empty input");
  if (line != kHeader) throw ParseError("records table: unexpected header");
  std::vector<TrialRecord> records;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 13) {
      throw ParseError("records table line " + std::to_string(line_no) + ": expected 13 fields, got " +
                       std::to_string(f.size()));
    }
    TrialRecord r;
    try {
      r.participant_id = f[0];
      r.item_id = f[1];
      r.phase = phase_from_string(f[2]);
      r.verb_class = verb_class_from_string(f[3]);
      r.exposure_condition = condition_from_string(f[4]);
      r.ref_focus = focus_from_string(f[5]);
      r.content_raw = unescape_field(f[6]);
      r.content_parsed = answer_parse_from_string(f[7]);
      r.content_correct = f[8] == "1";
      r.ref_raw = unescape_field(f[9]);
      r.ref_parsed = answer_parse_from_string(f[10]);
      if (!f[11].empty()) r.referent_code = std::stoi(f[11]);
      r.excluded = f[12] == "1";
    } catch (const ParseError& e) {
      throw ParseError("records table line " + std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_records(const std::string& path, const std::vector<TrialRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open records file for writing: " + path);
  out << records_to_tsv(records);
}

std::vector<TrialRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open records file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return records_from_tsv(ss.str());
}

}  // namespace refprime
