#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "refprime/analysis.hpp"
#include "refprime/errors.hpp"
#include "refprime/math/rng.hpp"
#include "refprime/validate.hpp"

using namespace refprime;
namespace fs = std::filesystem;

namespace {

std::string fixture(const std::string& name) {
  fs::path path = fs::path(REFPRIME_SOURCE_DIR) / "tests" / "fixtures" / name;
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrialRecord coded_record(const std::string& pid, QuestionFocus focus, ExposureCondition cond,
                         VerbClass vc, int code, bool excluded = false) {
  TrialRecord r;
  r.participant_id = pid;
  r.item_id = "i-" + to_string(focus) + "-" + to_string(cond);
  r.phase = Phase::critical;
  r.verb_class = vc;
  r.exposure_condition = cond;
  r.ref_focus = focus;
  r.content_parsed = AnswerParse::yes;
  r.content_correct = !excluded;
  r.ref_parsed = AnswerParse::yes;
  r.referent_code = code;
  r.excluded = excluded;
  return r;
}

}  // namespace

TEST_CASE("model bindings reproduce the three published formulas byte for byte") {
  CHECK(canonical_form(model_spec_for(Experiment::e1a)) == fixture("binding_e1a.txt"));
  CHECK(canonical_form(model_spec_for(Experiment::e2a)) == fixture("binding_e2a.txt"));
  CHECK(canonical_form(model_spec_for(Experiment::e2b)) == fixture("binding_e2b.txt"));
}

TEST_CASE("binding details follow the published random structure") {
  auto e1a = model_spec_for(Experiment::e1a);
  REQUIRE(e1a.spec.groupings.size() == 2);
  CHECK(e1a.spec.groupings[0].factor == "item");
  CHECK(e1a.spec.groupings[0].slope_terms.size() == 3);
  CHECK(e1a.spec.groupings[1].factor == "participant");
  // exposure does not vary within participants, so no PC slope
  REQUIRE(e1a.spec.groupings[1].slope_terms.size() == 1);
  CHECK(term_name(e1a.spec.groupings[1].slope_terms[0]) == "QtypeC");

  auto e2a = model_spec_for(Experiment::e2a);
  for (const auto& term : e2a.spec.groupings[0].slope_terms) {
    for (const auto& symbol : term) CHECK(symbol != "Vc");  // verb fixed within items
  }
  CHECK(e2a.spec.coding_map.at("PC").at("subject") == 0.5);

  auto e2b = model_spec_for(Experiment::e2b);
  CHECK(e2b.response_desc == "Rc (goal = 1, source = 0)");
  CHECK(e2b.spec.coding_map.at("QtypeC").at("goal") == 0.5);
  CHECK(code_referent(AnswerParse::yes, QuestionFocus::goal, Experiment::e2b) == 1);
}

TEST_CASE("proportion tables group by exposure and focus") {
  std::vector<TrialRecord> records;
  for (int i = 0; i < 10; ++i) {
    // deterministic mock: always-subject under subject exposure, never under nonsubject
    records.push_back(coded_record("p1", QuestionFocus::subject, ExposureCondition::subject,
                                   VerbClass::joint, 1));
    records.push_back(coded_record("p1", QuestionFocus::nonsubject, ExposureCondition::subject,
                                   VerbClass::joint, 1));
    records.push_back(coded_record("p2", QuestionFocus::subject, ExposureCondition::nonsubject,
                                   VerbClass::joint, 0));
    records.push_back(coded_record("p2", QuestionFocus::nonsubject, ExposureCondition::nonsubject,
                                   VerbClass::joint, 0));
  }
  ProportionTable table = condition_proportions(records, Experiment::e1a);
  REQUIRE(table.rows.size() == 4);
  for (const auto& row : table.rows) {
    CHECK_FALSE(row.verb.has_value());
    CHECK(row.count == 10);
    if (row.exposure == ExposureCondition::subject) {
      CHECK(row.proportion == 1.0);
    } else {
      CHECK(row.proportion == 0.0);
    }
  }
  CHECK(table.total_count() == 40);
  CHECK(table.overall_mean() == doctest::Approx(0.5));
}

TEST_CASE("qualitative direction: nonsubject-exposure rows sit below subject-exposure rows") {
  Rng rng(55);
  std::vector<TrialRecord> records;
  for (int i = 0; i < 2000; ++i) {
    bool subj_exposure = i % 2 == 0;
    double p = subj_exposure ? 0.9 : 0.3;
    QuestionFocus focus = (i / 2) % 2 == 0 ? QuestionFocus::subject : QuestionFocus::nonsubject;
    records.push_back(coded_record("p" + std::to_string(i % 24), focus,
                                   subj_exposure ? ExposureCondition::subject
                                                 : ExposureCondition::nonsubject,
                                   VerbClass::joint, rng.bernoulli(p) ? 1 : 0));
  }
  ProportionTable table = condition_proportions(records, Experiment::e1a);
  for (const auto& row : table.rows) {
    for (const auto& other : table.rows) {
      if (row.exposure == ExposureCondition::nonsubject && other.exposure == ExposureCondition::subject &&
          row.focus == other.focus) {
        CHECK(row.proportion < other.proportion);
      }
    }
  }
}

TEST_CASE("fully excluded record sets yield an empty table") {
  std::vector<TrialRecord> records = {coded_record("p1", QuestionFocus::subject,
                                                   ExposureCondition::subject, VerbClass::joint, 1,
                                                   true)};
  ProportionTable table = condition_proportions(records, Experiment::e1a);
  CHECK(table.rows.empty());
  CHECK_THROWS_AS(table.overall_mean(), ValidationError);
}

TEST_CASE("verb class becomes a grouping dimension outside e1a") {
  std::vector<TrialRecord> records = {
      coded_record("p1", QuestionFocus::goal, ExposureCondition::goal, VerbClass::gs, 1),
      coded_record("p1", QuestionFocus::goal, ExposureCondition::goal, VerbClass::sg, 0)};
  ProportionTable table = condition_proportions(records, Experiment::e2b);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].verb.has_value());
}

TEST_CASE("levene matches independent reference values") {
  std::vector<double> g1 = {12.1, 10.3, 11.8, 13.2, 9.9, 10.8, 12.5};
  std::vector<double> g2 = {8.5, 9.7, 10.1, 7.9, 11.2, 10.4};
  std::vector<double> g3 = {13.0, 12.2, 14.1, 11.8, 12.9, 13.5, 12.0, 13.3};
  LeveneResult median_centered = levene_test({g1, g2, g3}, LeveneCenter::median);
  CHECK(median_centered.w == doctest::Approx(0.698320965701193).epsilon(1e-12));
  CHECK(median_centered.p == doctest::Approx(0.510403458030283).epsilon(1e-10));
  CHECK(median_centered.df1 == 2.0);
  CHECK(median_centered.df2 == 18.0);
  LeveneResult mean_centered = levene_test({g1, g2, g3}, LeveneCenter::mean);
  CHECK(mean_centered.w == doctest::Approx(1.11530958914351).epsilon(1e-12));
  CHECK(mean_centered.p == doctest::Approx(0.349437871259331).epsilon(1e-10));
  LeveneResult small = levene_test({{1.0, 2.0, 3.0, 4.0}, {2.0, 4.0, 6.0, 8.0, 10.0}},
                                   LeveneCenter::median);
  CHECK(small.w == doctest::Approx(2.49908925318761).epsilon(1e-12));
  CHECK(small.p == doctest::Approx(0.157924710985924).epsilon(1e-10));
}

TEST_CASE("levene agrees with the brute-force oracle and handles edge cases") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<double>> groups;
    size_t k = 2 + rng.below(3);
    for (size_t i = 0; i < k; ++i) {
      std::vector<double> g;
      size_t n = 4 + rng.below(20);
      for (size_t j = 0; j < n; ++j) g.push_back(rng.uniform(-3, 3) * rng.uniform(0.5, 2.0));
      groups.push_back(std::move(g));
    }
    for (auto center : {LeveneCenter::median, LeveneCenter::mean}) {
      LeveneResult a = levene_test(groups, center);
      LeveneResult b = levene_brute_force(groups, center);
      CHECK(std::fabs(a.w - b.w) < 1e-10);
      CHECK(std::fabs(a.p - b.p) < 1e-8);
    }
  }
  std::vector<double> base = {1.0, 2.0, 3.0, 4.0, 5.0};
  LeveneResult identical = levene_test({base, base}, LeveneCenter::median);
  CHECK(identical.w == 0.0);
  CHECK(identical.p == 1.0);
  CHECK_THROWS_AS(levene_test({{1.0}, {1.0, 2.0, 3.0, 4.0, 5.0}}, LeveneCenter::median),
                  ValidationError);
  CHECK_THROWS_AS(levene_test({base}, LeveneCenter::median), ValidationError);
}

TEST_CASE("levene W is invariant under a constant shift") {
  std::vector<std::vector<double>> groups = {{1.0, 2.5, 2.0, 4.0}, {0.5, 5.0, 3.0, 2.2, 1.1}};
  LeveneResult before = levene_test(groups, LeveneCenter::median);
  for (auto& g : groups) {
    for (auto& x : g) x += 123.25;
  }
  LeveneResult after = levene_test(groups, LeveneCenter::median);
  CHECK(before.w == doctest::Approx(after.w).epsilon(1e-12));
}

TEST_CASE("per-participant variance of referent codes") {
  std::vector<TrialRecord> same = {
      coded_record("p1", QuestionFocus::subject, ExposureCondition::subject, VerbClass::joint, 1),
      coded_record("p2", QuestionFocus::subject, ExposureCondition::subject, VerbClass::joint, 1)};
  CHECK(per_participant_variance(same) == 0.0);
  std::vector<TrialRecord> split = {
      coded_record("p1", QuestionFocus::subject, ExposureCondition::subject, VerbClass::joint, 0),
      coded_record("p2", QuestionFocus::subject, ExposureCondition::subject, VerbClass::joint, 1)};
  CHECK(per_participant_variance(split) == doctest::Approx(0.5));
  std::vector<TrialRecord> lone = {same[0]};
  CHECK_THROWS_AS(per_participant_variance(lone), ValidationError);
}

TEST_CASE("per-participant variance matches a direct computation") {
  Rng rng(31);
  std::vector<TrialRecord> records;
  for (int p = 0; p < 12; ++p) {
    double bias = rng.uniform(0.2, 0.8);
    for (int i = 0; i < 12; ++i) {
      records.push_back(coded_record("p" + std::to_string(p),
                                     i % 2 ? QuestionFocus::subject : QuestionFocus::nonsubject,
                                     ExposureCondition::subject, VerbClass::joint,
                                     rng.bernoulli(bias) ? 1 : 0));
    }
  }
  // brute force: per-participant means then n-1 variance
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& r : records) {
    acc[r.participant_id].first += *r.referent_code;
    acc[r.participant_id].second += 1;
  }
  std::vector<double> means;
  for (auto& [pid, cell] : acc) means.push_back(cell.first / cell.second);
  double grand = 0.0;
  for (double m : means) grand += m;
  grand /= means.size();
  double var = 0.0;
  for (double m : means) var += (m - grand) * (m - grand);
  var /= (means.size() - 1);
  CHECK(per_participant_variance(records) == doctest::Approx(var).epsilon(1e-12));
}

TEST_CASE("p_map flags use the published thresholds") {
  CHECK(p_map_flag(0.0005) == "< .001");
  CHECK(p_map_flag(0.005) == "< .01");
  CHECK(p_map_flag(0.03) == "< .05");
  CHECK(p_map_flag(0.07) == "< .1");
  CHECK(p_map_flag(0.2) == "");
}

TEST_CASE("reports render deterministically and echo the pooled draw count") {
  ReportInputs in;
  in.experiment = Experiment::e1a;
  in.fingerprint = "abc123";
  in.root_seed = 42;
  in.binding = model_spec_for(Experiment::e1a);
  in.sampler.seed = 9;
  in.fit.pooled_draws = 18000;
  in.fit.chains = 6;
  CoefficientSummary c;
  c.name = "b_PC";
  c.mean = 1.5;
  c.sd = 0.4;
  c.q025 = 0.7;
  c.q975 = 2.3;
  c.rhat = 1.002;
  c.ess_bulk = 5200;
  c.p_map = 0.0005;
  in.fit.fixed.push_back(c);
  in.descriptives.n_records = 1056;
  in.descriptives.n_critical = 288;
  in.descriptives.n_participants = 24;
  in.descriptives.has_response_variance = true;
  in.descriptives.response_variance = 0.0;
  in.descriptives.zero_response_variance = true;
  in.temperatures = {0.25, 0.5, 0.75};
  ProportionRow row;
  row.exposure = ExposureCondition::subject;
  row.focus = QuestionFocus::subject;
  row.proportion = 1.0;
  row.count = 144;
  in.proportions.rows.push_back(row);

  std::string md1 = render_report_markdown(in);
  std::string md2 = render_report_markdown(in);
  CHECK(md1 == md2);
  CHECK(md1.find("18000") != std::string::npos);
  CHECK(md1.find("< .001") != std::string::npos);
  CHECK(md1.find("zero response variance") != std::string::npos);
  std::string js1 = render_report_json(in);
  CHECK(js1 == render_report_json(in));
  CHECK(js1.find("\"pooled_draws\": 18000") != std::string::npos);
}
