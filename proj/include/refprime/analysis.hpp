#pragma once

#include <optional>
#include <string>
#include <vector>

#include "refprime/coding.hpp"
#include "refprime/inference/diagnostics.hpp"
#include "refprime/inference/sampler.hpp"

namespace refprime {

// Regression specification bound to one experiment: fixed terms with the
// published contrast codings and the maximal random structure the design
// justifies.
struct ExperimentModelBinding {
  Experiment experiment = Experiment::e1a;
  ModelSpec spec;
  std::string response_desc;  // e.g. "Rc (subject = 1, nonsubject = 0)"
};

ExperimentModelBinding model_spec_for(Experiment experiment);

// Stable text form used for byte-for-byte fixture comparison.
std::string canonical_form(const ExperimentModelBinding& binding);

struct ProportionRow {
  ExposureCondition exposure;
  QuestionFocus focus;
  std::optional<VerbClass> verb;
  double proportion = 0.0;  // mean referent code
  int count = 0;
};

struct ProportionTable {
  std::vector<ProportionRow> rows;

  double overall_mean() const;
  int total_count() const;
};

// Mean referent code by exposure x focus (x verb class outside e1a) over
// non-excluded critical records. Empty groups yield no row.
ProportionTable condition_proportions(const std::vector<TrialRecord>& records, Experiment experiment);

enum class LeveneCenter { median, mean };

struct LeveneResult {
  double w = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;
  double p = 1.0;
};

// k-group test of variance equality on absolute deviations from the group
// center; median centering is the Brown-Forsythe variant.
LeveneResult levene_test(const std::vector<std::vector<double>>& groups, LeveneCenter center);

// Sample variance of per-participant mean referent codes over non-excluded
// critical trials.
double per_participant_variance(const std::vector<TrialRecord>& records);

// Per-participant mean referent codes (sorted by participant id), the unit
// of the between-cohort variance comparisons.
std::vector<double> participant_means(const std::vector<TrialRecord>& records);

struct Descriptives {
  int n_records = 0;
  int n_critical = 0;
  int n_excluded = 0;
  int n_participants = 0;
  double yes_rate_critical = 0.0;
  double content_accuracy = 0.0;
  double exclusion_rate = 0.0;
  double response_variance = 0.0;
  bool has_yes_rate = false;
  bool has_response_variance = false;
  bool zero_response_variance = false;
};

Descriptives compute_descriptives(const std::vector<TrialRecord>& records);

struct VarianceComparison {
  std::string label_a;
  std::string label_b;
  double variance_a = 0.0;
  double variance_b = 0.0;
  LeveneResult median_centered;
  LeveneResult mean_centered;
};

struct ReportInputs {
  Experiment experiment = Experiment::e1a;
  std::string fingerprint;
  uint64_t root_seed = 0;
  ExperimentModelBinding binding;
  SamplerConfig sampler;
  Priors priors;
  FitSummary fit;
  ProportionTable proportions;
  Descriptives descriptives;
  std::vector<double> temperatures;
  std::vector<VarianceComparison> comparisons;
};

// Threshold flag for a p_MAP value: "< .001", "< .01", "< .05", "< .1", "".
std::string p_map_flag(double p);

std::string render_report_markdown(const ReportInputs& in);
std::string render_report_json(const ReportInputs& in);

}  // namespace refprime
