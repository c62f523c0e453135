#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "refprime/analysis.hpp"
#include "refprime/errors.hpp"
#include "refprime/inference/diagnostics.hpp"
#include "refprime/llm_client.hpp"
#include "refprime/math/rng.hpp"
#include "refprime/runner.hpp"
#include "refprime/session.hpp"
#include "refprime/validate.hpp"
#include "refprime/version.hpp"

namespace py = pybind11;
using namespace refprime;

namespace {

py::dict record_to_dict(const TrialRecord& r) {
  py::dict d;
  d["participant_id"] = r.participant_id;
  d["item_id"] = r.item_id;
  d["phase"] = to_string(r.phase);
  d["verb_class"] = to_string(r.verb_class);
  d["exposure_condition"] = to_string(r.exposure_condition);
  d["ref_focus"] = to_string(r.ref_focus);
  d["content_raw"] = r.content_raw;
  d["content_parsed"] = to_string(r.content_parsed);
  d["content_correct"] = r.content_correct;
  d["ref_raw"] = r.ref_raw;
  d["ref_parsed"] = to_string(r.ref_parsed);
  if (r.referent_code) {
    d["referent_code"] = *r.referent_code;
  } else {
    d["referent_code"] = py::none();
  }
  d["excluded"] = r.excluded;
  return d;
}

TrialRecord record_from_dict(const py::dict& d) {
  TrialRecord r;
  r.participant_id = d["participant_id"].cast<std::string>();
  r.item_id = d["item_id"].cast<std::string>();
  r.phase = phase_from_string(d["phase"].cast<std::string>());
  r.verb_class = verb_class_from_string(d["verb_class"].cast<std::string>());
  r.exposure_condition = condition_from_string(d["exposure_condition"].cast<std::string>());
  r.ref_focus = focus_from_string(d["ref_focus"].cast<std::string>());
  if (d.contains("content_raw")) r.content_raw = d["content_raw"].cast<std::string>();
  if (d.contains("content_parsed")) {
    r.content_parsed = answer_parse_from_string(d["content_parsed"].cast<std::string>());
  }
  r.content_correct = d.contains("content_correct") ? d["content_correct"].cast<bool>() : true;
  if (d.contains("ref_raw")) r.ref_raw = d["ref_raw"].cast<std::string>();
  if (d.contains("ref_parsed")) {
    r.ref_parsed = answer_parse_from_string(d["ref_parsed"].cast<std::string>());
  }
  if (d.contains("referent_code") && !d["referent_code"].is_none()) {
    r.referent_code = d["referent_code"].cast<int>();
  }
  r.excluded = d.contains("excluded") ? d["excluded"].cast<bool>() : false;
  return r;
}

MockBias bias_from_dict(const py::dict& d) {
  MockBias bias;
  if (d.contains("yes_rate_ambiguous") && !d["yes_rate_ambiguous"].is_none()) {
    bias.yes_rate_ambiguous = d["yes_rate_ambiguous"].cast<double>();
  }
  if (d.contains("content_accuracy")) bias.content_accuracy = d["content_accuracy"].cast<double>();
  if (d.contains("goal_bias")) bias.goal_bias = d["goal_bias"].cast<double>();
  if (d.contains("seed")) bias.seed = d["seed"].cast<uint64_t>();
  if (d.contains("subject_bias_by_exposure")) {
    for (auto item : d["subject_bias_by_exposure"].cast<py::dict>()) {
      bias.subject_bias_by_exposure[condition_from_string(item.first.cast<std::string>())] =
          item.second.cast<double>();
    }
  }
  validate_bias(bias);
  return bias;
}

// All sessions of a mock cohort, in memory.
std::vector<TrialRecord> mock_cohort_records(const std::string& experiment, int cohort_size,
                                             uint64_t seed, const py::dict& bias_dict) {
  RunConfig config;
  config.experiment = experiment_from_string(experiment);
  config.cohort_size = cohort_size;
  config.root_seed = seed;
  config.mock_bias = bias_from_dict(bias_dict);
  auto [cond_a, cond_b] = legal_conditions(config.experiment);
  std::map<ExposureCondition, std::vector<StimulusItem>> items;
  for (ExposureCondition cond : {cond_a, cond_b}) {
    items[cond] = generate_templates(design_for(config, cond), derive_seed(seed, "items"));
  }
  std::vector<TrialRecord> all;
  auto cohort = build_cohort(config);
  for (size_t i = 0; i < cohort.size(); ++i) {
    auto schedule = build_schedule(cohort[i].design, items.at(cohort[i].design.exposure_condition),
                                   derive_seed(seed, "schedule", i));
    MockResponder responder(config.mock_bias, derive_seed(seed, "mock", i));
    SessionResult result = run_session(cohort[i], schedule, responder);
    all.insert(all.end(), result.records.begin(), result.records.end());
  }
  return all;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Referential-priming harness: stimulus generation, mock sessions, and Bayesian "
            "mixed-effects logistic regression";
  m.attr("__version__") = kVersion;

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<ParseError>(m, "ParseFailure");
  py::register_exception<ValidationError>(m, "ValidationFailure");

  m.def("assign_temperatures", &assign_temperatures, py::arg("n"), py::arg("lo"), py::arg("hi"),
        py::arg("seed"));
  m.def(
      "render_persona_prompt",
      [](const std::string& prefix, const std::string& name, const std::string& country,
         const std::string& pronoun) {
        return render_persona_prompt(Persona{prefix, name, country, pronoun});
      },
      py::arg("prefix"), py::arg("name"), py::arg("country"), py::arg("pronoun"));

  m.def(
      "parse_answer",
      [](const std::string& text) { return to_string(parse_answer(text)); }, py::arg("text"));
  m.def(
      "code_referent",
      [](const std::string& answer, const std::string& focus, const std::string& experiment) {
        return code_referent(answer_parse_from_string(answer), focus_from_string(focus),
                             experiment_from_string(experiment));
      },
      py::arg("answer"), py::arg("focus"), py::arg("experiment"));

  m.def(
      "generate_templates",
      [](const std::string& experiment, const std::string& condition, uint64_t seed) {
        auto design = make_design(experiment_from_string(experiment), condition_from_string(condition));
        auto items = generate_templates(design, seed);
        py::list out;
        for (const auto& item : items) {
          py::dict d;
          d["item_id"] = item.item_id;
          d["verb_class"] = to_string(item.verb_class);
          d["ambiguous"] = item.ambiguous;
          d["story_text"] = item.story_text;
          d["content_question"] = item.content_question;
          d["content_gold"] = item.content_gold;
          py::dict variants;
          for (const auto& [focus, q] : item.ref_question_variants) {
            variants[py::str(to_string(focus))] = q;
          }
          d["ref_question_variants"] = variants;
          out.append(d);
        }
        return out;
      },
      py::arg("experiment"), py::arg("condition"), py::arg("seed"));

  m.def("mock_cohort_records",
        [](const std::string& experiment, int cohort_size, uint64_t seed, const py::dict& bias) {
          py::list out;
          for (const auto& r : mock_cohort_records(experiment, cohort_size, seed, bias)) {
            out.append(record_to_dict(r));
          }
          return out;
        },
        py::arg("experiment"), py::arg("cohort_size"), py::arg("seed"), py::arg("bias"));

  m.def(
      "fit_records",
      [](const py::list& records_py, const std::string& experiment, int chains, int iterations,
         int warmup, double target_accept, uint64_t seed) {
        std::vector<TrialRecord> records;
        for (auto item : records_py) records.push_back(record_from_dict(item.cast<py::dict>()));
        apply_exclusions(records);
        std::vector<TrialRecord> usable;
        for (const auto& r : records) {
          if (!r.excluded && r.phase == Phase::critical && r.referent_code) usable.push_back(r);
        }
        auto binding = model_spec_for(experiment_from_string(experiment));
        DesignMatrix dm = build_design_matrix(usable, binding.spec);
        SamplerConfig config;
        config.chains = chains;
        config.iterations = iterations;
        config.warmup = warmup;
        config.target_accept = target_accept;
        config.seed = seed;
        PosteriorDraws draws = sample(dm, Priors{}, config);
        FitSummary fit = summarize(draws);
        py::dict out;
        out["pooled_draws"] = fit.pooled_draws;
        out["divergences"] = fit.divergences;
        py::list coefs;
        for (const auto& c : fit.fixed) {
          py::dict row;
          row["name"] = c.name;
          row["mean"] = c.mean;
          row["sd"] = c.sd;
          row["q2.5"] = c.q025;
          row["q97.5"] = c.q975;
          row["rhat"] = c.rhat;
          row["ess_bulk"] = c.ess_bulk;
          row["p_map"] = c.p_map;
          coefs.append(row);
        }
        out["fixed_effects"] = coefs;
        return out;
      },
      py::arg("records"), py::arg("experiment"), py::arg("chains") = 4, py::arg("iterations") = 1200,
      py::arg("warmup") = 400, py::arg("target_accept") = 0.9, py::arg("seed") = 1);

  m.def(
      "levene_test",
      [](const std::vector<std::vector<double>>& groups, const std::string& center) {
        LeveneCenter c = center == "mean" ? LeveneCenter::mean : LeveneCenter::median;
        LeveneResult res = levene_test(groups, c);
        py::dict out;
        out["w"] = res.w;
        out["df1"] = res.df1;
        out["df2"] = res.df2;
        out["p"] = res.p;
        return out;
      },
      py::arg("groups"), py::arg("center") = "median");

  m.def("p_map", &p_map, py::arg("draws"));

  m.def(
      "rhat_and_ess",
      [](const std::vector<std::vector<double>>& chains) {
        ConvergenceDiag d = rhat_and_ess(chains);
        return py::make_tuple(d.rhat, d.ess_bulk);
      },
      py::arg("chains"));

  m.def(
      "canonical_model",
      [](const std::string& experiment) {
        return canonical_form(model_spec_for(experiment_from_string(experiment)));
      },
      py::arg("experiment"));

  m.def(
      "condition_proportions",
      [](const py::list& records_py, const std::string& experiment) {
        std::vector<TrialRecord> records;
        for (auto item : records_py) records.push_back(record_from_dict(item.cast<py::dict>()));
        ProportionTable table =
            condition_proportions(records, experiment_from_string(experiment));
        py::list out;
        for (const auto& r : table.rows) {
          py::dict d;
          d["exposure"] = to_string(r.exposure);
          d["focus"] = to_string(r.focus);
          if (r.verb) d["verb_class"] = to_string(*r.verb);
          d["proportion"] = r.proportion;
          d["count"] = r.count;
          out.append(d);
        }
        return out;
      },
      py::arg("records"), py::arg("experiment"));
}
