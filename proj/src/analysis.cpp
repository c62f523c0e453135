#include "refprime/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "refprime/errors.hpp"
#include "refprime/math/special.hpp"

namespace refprime {

using ordered_json = nlohmann::ordered_json;

ExperimentModelBinding model_spec_for(Experiment experiment) {
  ExperimentModelBinding b;
  b.experiment = experiment;
  switch (experiment) {
    case Experiment::e1a:
      b.spec.fixed_terms = {{"QtypeC"}, {"PC"}, {"QtypeC", "PC"}};
      b.spec.coding_map = {
          {"QtypeC", {{"subject", 0.5}, {"nonsubject", -0.5}}},
          {"PC", {{"subject", 0.51}, {"nonsubject", -0.49}}},
      };
      b.spec.groupings = {
          {"item", {{"QtypeC"}, {"PC"}, {"QtypeC", "PC"}}, true},
          {"participant", {{"QtypeC"}}, true},
      };
      b.response_desc = "Rc (subject = 1, nonsubject = 0)";
      break;
    case Experiment::e2a:
      b.spec.fixed_terms = {{"QtypeC"}, {"PC"}, {"Vc"},           {"QtypeC", "PC"},
                            {"QtypeC", "Vc"}, {"PC", "Vc"}, {"QtypeC", "PC", "Vc"}};
      b.spec.coding_map = {
          {"QtypeC", {{"subject", 0.5}, {"nonsubject", -0.5}}},
          {"PC", {{"subject", 0.5}, {"nonsubject", -0.5}}},
          {"Vc", {{"gs", 0.5}, {"sg", -0.5}}},
      };
      b.spec.groupings = {
          {"item", {{"PC"}, {"QtypeC"}, {"PC", "QtypeC"}}, true},
          {"participant", {{"QtypeC"}, {"Vc"}, {"QtypeC", "Vc"}}, true},
      };
      b.response_desc = "Rc (subject = 1, nonsubject = 0)";
      break;
    case Experiment::e2b:
      b.spec.fixed_terms = {{"PC"}, {"Vc"}, {"QtypeC"},           {"PC", "Vc"},
                            {"PC", "QtypeC"}, {"Vc", "QtypeC"}, {"PC", "Vc", "QtypeC"}};
      b.spec.coding_map = {
          {"QtypeC", {{"goal", 0.5}, {"source", -0.5}}},
          {"PC", {{"goal", 0.5}, {"source", -0.5}}},
          {"Vc", {{"gs", 0.5}, {"sg", -0.5}}},
      };
      b.spec.groupings = {
          {"item", {{"PC"}, {"QtypeC"}, {"PC", "QtypeC"}}, true},
          {"participant", {{"Vc"}, {"QtypeC"}, {"Vc", "QtypeC"}}, true},
      };
      b.response_desc = "Rc (goal = 1, source = 0)";
      break;
  }
  return b;
}

namespace {

std::string format_coding_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

std::string canonical_form(const ExperimentModelBinding& b) {
  std::ostringstream out;
  out << "experiment: " << to_string(b.experiment) << "\n";
  out << "response: " << b.response_desc << "\n";
  out << "fixed: Intercept";
  for (const auto& term : b.spec.fixed_terms) out << " + " << term_name(term);
  out << "\n";
  for (const auto& [symbol, levels] : b.spec.coding_map) {
    out << "coding " << symbol << ":";
    bool first = true;
    for (const auto& [level, value] : levels) {
      out << (first ? " " : ", ") << level << " = " << format_coding_value(value);
      first = false;
    }
    out << "\n";
  }
  for (const auto& g : b.spec.groupings) {
    out << "group " << g.factor << ": Intercept";
    for (const auto& term : g.slope_terms) out << " + " << term_name(term);
    out << (g.correlated ? " (correlated)" : " (uncorrelated)") << "\n";
  }
  return out.str();
}

double ProportionTable::overall_mean() const {
  double acc = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    acc += r.proportion * r.count;
    n += r.count;
  }
  if (n == 0) throw ValidationError("proportion table is empty");
  return acc / n;
}

int ProportionTable::total_count() const {
  int n = 0;
  for (const auto& r : rows) n += r.count;
  return n;
}

ProportionTable condition_proportions(const std::vector<TrialRecord>& records,
                                      Experiment experiment) {
  bool with_verb = experiment != Experiment::e1a;
  std::map<std::tuple<int, int, int>, std::pair<double, int>> groups;
  for (const auto& r : records) {
    if (r.excluded || r.phase != Phase::critical || !r.referent_code) continue;
    int verb_key = with_verb ? static_cast<int>(r.verb_class) : -1;
    auto key = std::make_tuple(static_cast<int>(r.exposure_condition),
                               static_cast<int>(r.ref_focus), verb_key);
    auto& cell = groups[key];
    cell.first += *r.referent_code;
    cell.second += 1;
  }
  ProportionTable table;
  for (const auto& [key, cell] : groups) {
    ProportionRow row;
    row.exposure = static_cast<ExposureCondition>(std::get<0>(key));
    row.focus = static_cast<QuestionFocus>(std::get<1>(key));
    if (std::get<2>(key) >= 0) row.verb = static_cast<VerbClass>(std::get<2>(key));
    row.count = cell.second;
    row.proportion = cell.first / cell.second;
    table.rows.push_back(row);
  }
  return table;
}

LeveneResult levene_test(const std::vector<std::vector<double>>& groups, LeveneCenter center) {
  const size_t k = groups.size();
  if (k < 2) throw ValidationError("levene_test: need at least 2 groups");
  size_t total = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw ValidationError("levene_test: every group needs at least 2 observations");
    total += g.size();
  }
  // Z_ij = |x_ij - center_i|
  std::vector<std::vector<double>> z(k);
  for (size_t i = 0; i < k; ++i) {
    double c = center == LeveneCenter::median ? median(groups[i]) : mean(groups[i]);
    z[i].reserve(groups[i].size());
    for (double x : groups[i]) z[i].push_back(std::fabs(x - c));
  }
  std::vector<double> zbar(k);
  double grand = 0.0;
  for (size_t i = 0; i < k; ++i) {
    zbar[i] = mean(z[i]);
    grand += zbar[i] * static_cast<double>(z[i].size());
  }
  grand /= static_cast<double>(total);
  double between = 0.0, within = 0.0;
  for (size_t i = 0; i < k; ++i) {
    between += static_cast<double>(z[i].size()) * (zbar[i] - grand) * (zbar[i] - grand);
    for (double v : z[i]) within += (v - zbar[i]) * (v - zbar[i]);
  }
  LeveneResult res;
  res.df1 = static_cast<double>(k - 1);
  res.df2 = static_cast<double>(total - k);
  if (within <= 0.0) {
    // All deviations identical within groups; any between-group spread is infinite evidence.
    res.w = between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    res.p = between > 0.0 ? 0.0 : 1.0;
    return res;
  }
  res.w = (res.df2 / res.df1) * (between / within);
  res.p = f_upper_tail(res.df1, res.df2, res.w);
  return res;
}

std::vector<double> participant_means(const std::vector<TrialRecord>& records) {
  std::map<std::string, std::pair<double, int>> per;
  for (const auto& r : records) {
    if (r.excluded || r.phase != Phase::critical || !r.referent_code) continue;
    auto& cell = per[r.participant_id];
    cell.first += *r.referent_code;
    cell.second += 1;
  }
  std::vector<double> means;
  means.reserve(per.size());
  for (const auto& [pid, cell] : per) means.push_back(cell.first / cell.second);
  return means;
}

double per_participant_variance(const std::vector<TrialRecord>& records) {
  std::vector<double> means = participant_means(records);
  if (means.size() < 2) {
    throw ValidationError("per_participant_variance: need at least 2 participants with usable trials");
  }
  return sample_variance(means);
}

Descriptives compute_descriptives(const std::vector<TrialRecord>& records) {
  Descriptives d;
  d.n_records = static_cast<int>(records.size());
  for (const auto& r : records) {
    if (r.phase == Phase::critical) ++d.n_critical;
    if (r.excluded) ++d.n_excluded;
  }
  if (!records.empty()) {
    d.content_accuracy = content_accuracy(records);
    d.exclusion_rate = exclusion_rate(records);
  }
  try {
    d.yes_rate_critical = yes_rate(records, Phase::critical);
    d.has_yes_rate = true;
  } catch (const ValidationError&) {
  }
  std::vector<double> means = participant_means(records);
  d.n_participants = static_cast<int>(means.size());
  if (means.size() >= 2) {
    d.response_variance = sample_variance(means);
    d.has_response_variance = true;
    d.zero_response_variance = d.response_variance == 0.0;
  }
  return d;
}

std::string p_map_flag(double p) {
  if (p < 0.001) return "< .001";
  if (p < 0.01) return "< .01";
  if (p < 0.05) return "< .05";
  if (p < 0.1) return "< .1";
  return "";
}

namespace {

std::string fmt(double v, int precision = 4) {
  char buf[64];
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[64];
  if (std::isnan(v)) return "NA";
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string row_label(const ProportionRow& r) {
  std::string s = to_string(r.exposure) + " exposure / " + to_string(r.focus) + " question";
  if (r.verb) s += " / " + to_string(*r.verb);
  return s;
}

}  // namespace

std::string render_report_markdown(const ReportInputs& in) {
  std::ostringstream out;
  out << "# Referential priming analysis: " << to_string(in.experiment) << "\n\n";
  out << "- run fingerprint: " << in.fingerprint << "\n";
  out << "- root seed: " << in.root_seed << "\n\n";

  out << "## Model\n\n```\n" << canonical_form(in.binding) << "```\n\n";
  out << "- priors: fixed ~ Cauchy(0, " << fmt_g(in.priors.fixed_scale) << "); sd ~ half-Student-t("
      << fmt_g(in.priors.sd_df) << ", 0, " << fmt_g(in.priors.sd_scale) << "); correlation ~ LKJ("
      << fmt_g(in.priors.lkj_shape) << ")\n";
  out << "- sampler: " << in.sampler.chains << " chains x " << in.sampler.iterations
      << " iterations (" << in.sampler.warmup << " warmup), target_accept "
      << fmt_g(in.sampler.target_accept) << ", max tree depth " << in.sampler.max_tree_depth
      << ", seed " << in.sampler.seed << "\n";
  out << "- pooled posterior draws: " << in.fit.pooled_draws << "\n";
  out << "- divergent transitions: " << in.fit.divergences << "\n";
  for (const auto& w : in.fit.warnings) out << "- warning: " << w << "\n";
  out << "\n## Fixed effects\n\n";
  out << "| coefficient | mean | sd | 2.5% | 97.5% | R-hat | bulk ESS | p_MAP | |\n";
  out << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& c : in.fit.fixed) {
    out << "| " << c.name << " | " << fmt(c.mean) << " | " << fmt(c.sd) << " | " << fmt(c.q025)
        << " | " << fmt(c.q975) << " | " << fmt(c.rhat, 3) << " | " << fmt(c.ess_bulk, 0) << " | "
        << fmt(c.p_map) << " | " << p_map_flag(c.p_map) << " |\n";
  }

  out << "\n## Descriptives\n\n";
  out << "- records: " << in.descriptives.n_records << " (" << in.descriptives.n_critical
      << " critical), participants: " << in.descriptives.n_participants << "\n";
  out << "- content accuracy: " << fmt(in.descriptives.content_accuracy) << "\n";
  out << "- exclusion rate: " << fmt(in.descriptives.exclusion_rate) << "\n";
  out << "- yes-rate on critical reference questions: "
      << (in.descriptives.has_yes_rate ? fmt(in.descriptives.yes_rate_critical) : "NA") << "\n";
  out << "- per-participant response variance: "
      << (in.descriptives.has_response_variance ? fmt_g(in.descriptives.response_variance) : "NA")
      << "\n";
  if (in.descriptives.zero_response_variance) {
    out << "- WARNING: zero response variance across participants; responses carry no usable "
           "variation\n";
  }

  out << "\n## Condition proportions\n\n";
  out << "| condition | mean referent code | n |\n|---|---|---|\n";
  for (const auto& r : in.proportions.rows) {
    out << "| " << row_label(r) << " | " << fmt(r.proportion) << " | " << r.count << " |\n";
  }

  if (!in.comparisons.empty()) {
    out << "\n## Variance comparisons (Levene)\n\n";
    out << "| cohorts | var A | var B | W (median) | p (median) | W (mean) | p (mean) |\n";
    out << "|---|---|---|---|---|---|---|\n";
    for (const auto& c : in.comparisons) {
      out << "| " << c.label_a << " vs " << c.label_b << " | " << fmt_g(c.variance_a) << " | "
          << fmt_g(c.variance_b) << " | " << fmt(c.median_centered.w) << " | "
          << fmt(c.median_centered.p) << " | " << fmt(c.mean_centered.w) << " | "
          << fmt(c.mean_centered.p) << " |\n";
    }
  }

  out << "\n## Configuration fingerprint\n\n";
  out << "- temperatures:";
  for (double t : in.temperatures) out << " " << fmt(t, 3);
  out << "\n";
  return out.str();
}

std::string render_report_json(const ReportInputs& in) {
  ordered_json j;
  j["experiment"] = to_string(in.experiment);
  j["fingerprint"] = in.fingerprint;
  j["root_seed"] = in.root_seed;
  j["model"] = canonical_form(in.binding);
  j["priors"] = {{"fixed_scale", in.priors.fixed_scale},
                 {"sd_df", in.priors.sd_df},
                 {"sd_scale", in.priors.sd_scale},
                 {"lkj_shape", in.priors.lkj_shape}};
  j["sampler"] = {{"chains", in.sampler.chains},
                  {"iterations", in.sampler.iterations},
                  {"warmup", in.sampler.warmup},
                  {"target_accept", in.sampler.target_accept},
                  {"max_tree_depth", in.sampler.max_tree_depth},
                  {"seed", in.sampler.seed}};
  j["pooled_draws"] = in.fit.pooled_draws;
  j["divergences"] = in.fit.divergences;
  j["warnings"] = in.fit.warnings;
  ordered_json coefs = ordered_json::array();
  for (const auto& c : in.fit.fixed) {
    ordered_json row;
    row["name"] = c.name;
    row["mean"] = c.mean;
    row["sd"] = c.sd;
    row["q2.5"] = c.q025;
    row["q97.5"] = c.q975;
    row["rhat"] = std::isfinite(c.rhat) ? ordered_json(c.rhat) : ordered_json(nullptr);
    row["ess_bulk"] = std::isfinite(c.ess_bulk) ? ordered_json(c.ess_bulk) : ordered_json(nullptr);
    row["p_map"] = c.p_map;
    row["flag"] = p_map_flag(c.p_map);
    coefs.push_back(row);
  }
  j["fixed_effects"] = coefs;
  ordered_json props = ordered_json::array();
  for (const auto& r : in.proportions.rows) {
    ordered_json row;
    row["exposure"] = to_string(r.exposure);
    row["focus"] = to_string(r.focus);
    if (r.verb) row["verb_class"] = to_string(*r.verb);
    row["proportion"] = r.proportion;
    row["count"] = r.count;
    props.push_back(row);
  }
  j["condition_proportions"] = props;
  j["descriptives"] = {
      {"n_records", in.descriptives.n_records},
      {"n_critical", in.descriptives.n_critical},
      {"n_excluded", in.descriptives.n_excluded},
      {"n_participants", in.descriptives.n_participants},
      {"content_accuracy", in.descriptives.content_accuracy},
      {"exclusion_rate", in.descriptives.exclusion_rate},
      {"yes_rate_critical",
       in.descriptives.has_yes_rate ? ordered_json(in.descriptives.yes_rate_critical) : ordered_json(nullptr)},
      {"response_variance", in.descriptives.has_response_variance
                                ? ordered_json(in.descriptives.response_variance)
                                : ordered_json(nullptr)},
      {"zero_response_variance", in.descriptives.zero_response_variance}};
  ordered_json comps = ordered_json::array();
  for (const auto& c : in.comparisons) {
    ordered_json row;
    row["a"] = c.label_a;
    row["b"] = c.label_b;
    row["variance_a"] = c.variance_a;
    row["variance_b"] = c.variance_b;
    row["levene_median"] = {{"w", c.median_centered.w}, {"p", c.median_centered.p},
                            {"df1", c.median_centered.df1}, {"df2", c.median_centered.df2}};
    row["levene_mean"] = {{"w", c.mean_centered.w}, {"p", c.mean_centered.p},
                          {"df1", c.mean_centered.df1}, {"df2", c.mean_centered.df2}};
    comps.push_back(row);
  }
  j["variance_comparisons"] = comps;
  j["temperatures"] = in.temperatures;
  return j.dump(2) + "\n";
}

}  // namespace refprime
