#include "refprime/inference/design.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "refprime/errors.hpp"

namespace refprime {

std::string term_name(const TermDescriptor& term) {
  if (term.empty()) return "Intercept";
  std::string out;
  for (size_t i = 0; i < term.size(); ++i) {
    if (i > 0) out += ":";
    out += term[i];
  }
  return out;
}

namespace {

std::string level_of(const TrialRecord& r, const std::string& symbol) {
  if (symbol == "QtypeC") return to_string(r.ref_focus);
  if (symbol == "PC") return to_string(r.exposure_condition);
  if (symbol == "Vc") return to_string(r.verb_class);
  throw ValidationError("unknown predictor symbol: " + symbol);
}

}  // namespace

double coded_value(const TrialRecord& r, const std::string& symbol, const CodingMap& coding) {
  auto pit = coding.find(symbol);
  if (pit == coding.end()) throw ValidationError("no coding for predictor " + symbol);
  std::string level = level_of(r, symbol);
  auto lit = pit->second.find(level);
  if (lit == pit->second.end()) {
    throw ValidationError("no coded value for level '" + level + "' of predictor " + symbol);
  }
  return lit->second;
}

DesignMatrix build_design_matrix(const std::vector<TrialRecord>& records, const ModelSpec& spec) {
  if (records.empty()) throw ValidationError("build_design_matrix: no records");
  for (const auto& r : records) {
    if (r.excluded || r.phase != Phase::critical || !r.referent_code) {
      throw ValidationError("build_design_matrix: record for item " + r.item_id +
                            " is not a non-excluded critical trial with a referent code");
    }
  }

  DesignMatrix dm;
  dm.n = static_cast<int>(records.size());
  dm.p = static_cast<int>(spec.fixed_terms.size()) + 1;
  dm.col_names.push_back("Intercept");
  for (const auto& term : spec.fixed_terms) dm.col_names.push_back(term_name(term));
  dm.X.resize(static_cast<size_t>(dm.n) * dm.p);
  dm.y.resize(records.size());
  dm.row_participant.reserve(records.size());
  dm.row_item.reserve(records.size());

  for (int i = 0; i < dm.n; ++i) {
    const TrialRecord& r = records[static_cast<size_t>(i)];
    dm.X[static_cast<size_t>(i) * dm.p] = 1.0;
    for (size_t t = 0; t < spec.fixed_terms.size(); ++t) {
      double v = 1.0;
      for (const auto& symbol : spec.fixed_terms[t]) v *= coded_value(r, symbol, spec.coding_map);
      dm.X[static_cast<size_t>(i) * dm.p + t + 1] = v;
    }
    dm.y[static_cast<size_t>(i)] = *r.referent_code;
    dm.row_participant.push_back(r.participant_id);
    dm.row_item.push_back(r.item_id);
  }

  for (const auto& g : spec.groupings) {
    GroupBlock block;
    block.factor = g.factor;
    block.correlated = g.correlated;
    auto key_of = [&](const TrialRecord& r) -> const std::string& {
      if (g.factor == "participant") return r.participant_id;
      if (g.factor == "item") return r.item_id;
      throw ValidationError("unknown grouping factor: " + g.factor);
    };
    std::set<std::string> levels;
    for (const auto& r : records) levels.insert(key_of(r));
    block.level_ids.assign(levels.begin(), levels.end());
    std::map<std::string, int> index;
    for (size_t i = 0; i < block.level_ids.size(); ++i) index[block.level_ids[i]] = static_cast<int>(i);

    block.col_names.push_back("Intercept");
    for (const auto& term : g.slope_terms) block.col_names.push_back(term_name(term));
    int q = block.q();
    block.U.resize(static_cast<size_t>(dm.n) * q);
    block.row_level.resize(records.size());
    for (int i = 0; i < dm.n; ++i) {
      const TrialRecord& r = records[static_cast<size_t>(i)];
      block.row_level[static_cast<size_t>(i)] = index.at(key_of(r));
      block.U[static_cast<size_t>(i) * q] = 1.0;
      for (size_t t = 0; t < g.slope_terms.size(); ++t) {
        double v = 1.0;
        for (const auto& symbol : g.slope_terms[t]) v *= coded_value(r, symbol, spec.coding_map);
        block.U[static_cast<size_t>(i) * q + t + 1] = v;
      }
    }
    dm.blocks.push_back(std::move(block));
  }
  return dm;
}

namespace {

TermDescriptor term_from_string(const std::string& s) {
  TermDescriptor term;
  std::stringstream ss(s);
  std::string symbol;
  while (std::getline(ss, symbol, ':')) {
    if (symbol.empty()) throw ConfigError("model spec: empty symbol in term '" + s + "'");
    term.push_back(symbol);
  }
  if (term.empty()) throw ConfigError("model spec: empty term");
  return term;
}

}  // namespace

std::string model_spec_to_json(const ModelSpec& spec) {
  nlohmann::ordered_json j;
  j["response"] = spec.response;
  nlohmann::ordered_json fixed = nlohmann::ordered_json::array();
  for (const auto& term : spec.fixed_terms) fixed.push_back(term_name(term));
  j["fixed"] = fixed;
  nlohmann::ordered_json codings;
  for (const auto& [symbol, levels] : spec.coding_map) {
    nlohmann::ordered_json entry;
    for (const auto& [level, value] : levels) entry[level] = value;
    codings[symbol] = entry;
  }
  j["codings"] = codings;
  nlohmann::ordered_json groupings = nlohmann::ordered_json::array();
  for (const auto& g : spec.groupings) {
    nlohmann::ordered_json entry;
    entry["factor"] = g.factor;
    nlohmann::ordered_json slopes = nlohmann::ordered_json::array();
    for (const auto& term : g.slope_terms) slopes.push_back(term_name(term));
    entry["slopes"] = slopes;
    entry["correlated"] = g.correlated;
    groupings.push_back(entry);
  }
  j["groupings"] = groupings;
  return j.dump(2) + "\n";
}

ModelSpec model_spec_from_json_text(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  ModelSpec spec;
  try {
    spec.response = j.value("response", std::string("Rc"));
    for (const auto& term : j.at("fixed")) {
      spec.fixed_terms.push_back(term_from_string(term.get<std::string>()));
    }
    for (const auto& [symbol, levels] : j.at("codings").items()) {
      for (const auto& [level, value] : levels.items()) {
        spec.coding_map[symbol][level] = value.get<double>();
      }
    }
    for (const auto& g : j.at("groupings")) {
      GroupingSpec grouping;
      grouping.factor = g.at("factor").get<std::string>();
      if (grouping.factor != "participant" && grouping.factor != "item") {
        throw ConfigError("model spec: grouping factor must be participant or item");
      }
      for (const auto& term : g.at("slopes")) {
        grouping.slope_terms.push_back(term_from_string(term.get<std::string>()));
      }
      grouping.correlated = g.value("correlated", true);
      spec.groupings.push_back(std::move(grouping));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  // every symbol used must carry a coding
  auto check_terms = [&](const std::vector<TermDescriptor>& terms) {
    for (const auto& term : terms) {
      for (const auto& symbol : term) {
        if (spec.coding_map.find(symbol) == spec.coding_map.end()) {
          throw ConfigError("model spec: predictor " + symbol + " has no coding");
        }
      }
    }
  };
  check_terms(spec.fixed_terms);
  for (const auto& g : spec.groupings) check_terms(g.slope_terms);
  return spec;
}

ModelSpec load_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model spec file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_spec_from_json_text(ss.str());
}

}  // namespace refprime
