#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "refprime/analysis.hpp"
#include "refprime/llm_client.hpp"
#include "refprime/session.hpp"

namespace refprime {

enum class ClientType { mock, remote };

// Full configuration of a run. Defaults reproduce the published setup:
// cohorts 24/24/60, temperatures in [0.2, 1.0], sampler 6 x 4000 with 1000
// warmup, target_accept 0.95 / 0.98 / 0.999 by experiment.
struct RunConfig {
  Experiment experiment = Experiment::e1a;
  uint64_t root_seed = 1;
  int cohort_size = 0;  // 0 = per-experiment default (24, 24, 60)
  double temperature_lo = 0.2;
  double temperature_hi = 1.0;
  bool persona_enabled = false;
  std::string instruction_header;

  std::optional<int> n_initial_exposures;
  std::optional<int> n_interleaved_exposures;
  std::optional<int> n_critical;

  ClientType client_type = ClientType::mock;
  MockBias mock_bias;
  EndpointConfig endpoint;
  int remote_max_tokens = 8;

  SamplerConfig sampler;
  bool target_accept_overridden = false;

  std::string out_dir = "run-out";
  int concurrency = 2;
  std::string lexicon_path;   // empty = built-in lexicon
  std::string stimuli_path;   // empty = synthesize templates; else load this file
  // When set, every participant gets freshly generated items instead of the
  // shared per-condition lists (the assignment scheme the source studies do
  // not pin down). Incompatible with stimuli_path.
  bool per_participant_items = false;
  bool save_draws = true;

  std::vector<std::string> persona_surnames = {"Smith", "Lee",    "Brown", "Taylor",
                                               "Walker", "Davis", "Clark", "Hughes"};
  std::vector<std::string> persona_countries = {"the United States", "England", "Australia"};
};

int default_cohort_size(Experiment e);
double default_target_accept(Experiment e);

RunConfig run_config_from_json_text(const std::string& text);
RunConfig load_run_config(const std::string& path);
// Canonical config serialization; out_dir is excluded so that identical
// configurations in different directories share a fingerprint.
std::string canonical_config_json(const RunConfig& config);
std::string config_fingerprint(const RunConfig& config);

// Resolved per-experiment pieces of a run.
ExperimentDesign design_for(const RunConfig& config, ExposureCondition condition);
std::vector<ParticipantProfile> build_cohort(const RunConfig& config);

struct RunSummary {
  int total = 0;
  int completed = 0;
  int skipped = 0;  // already done on a resumed run
  std::vector<std::string> failed;  // participant ids
};

// Executes every session of the configured experiment into config.out_dir.
// Already-completed participants (done marker present) are skipped, so
// reruns resume. Returns per-participant outcomes; the merged records table
// is rebuilt from all completed participants.
RunSummary run_experiment(const RunConfig& config);

struct AnalyzeOptions {
  std::optional<uint64_t> sampler_seed;
  std::optional<SamplerConfig> sampler_override;
  // Replaces the experiment's built-in regression specification.
  std::optional<std::string> model_spec_path;
  bool save_draws = true;
  // Label/path pairs of cohorts to compare against via Levene tests on
  // per-participant means.
  std::vector<std::pair<std::string, std::string>> compare;
};

struct AnalyzeResult {
  FitSummary fit;
  ReportInputs report;
  std::string report_markdown;
  std::string report_json;
};

// Exclusions, design matrix, sampling, summaries, and report files written
// into out_dir (report.md, report.json, fit.json, proportions.tsv, and
// draws.csv unless disabled).
AnalyzeResult analyze_records(const std::vector<TrialRecord>& records, Experiment experiment,
                              const RunConfig& config, const std::string& out_dir,
                              const AnalyzeOptions& options);

// Re-render report.md/report.json from a completed analysis directory.
void rerender_report(const std::string& out_dir);

}  // namespace refprime
