#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "refprime/errors.hpp"
#include "refprime/runner.hpp"
#include "refprime/validate.hpp"
#include "refprime/version.hpp"

namespace {

namespace fs = std::filesystem;
using namespace refprime;

constexpr int kExitOk = 0;
constexpr int kExitPartialFailure = 1;
constexpr int kExitConfigError = 2;

struct CommonOpts {
  std::string config_path;
  std::string experiment;
  std::string out;
  uint64_t seed = 0;
  bool seed_set = false;
  bool mock = false;
};

RunConfig assemble_config(const CommonOpts& opts) {
  RunConfig config;
  if (!opts.config_path.empty()) config = load_run_config(opts.config_path);
  if (!opts.experiment.empty()) config.experiment = experiment_from_string(opts.experiment);
  if (opts.seed_set) config.root_seed = opts.seed;
  if (opts.mock) config.client_type = ClientType::mock;
  if (!opts.out.empty()) config.out_dir = opts.out;
  return config;
}

int cmd_run(const CommonOpts& opts, bool resume) {
  RunConfig config = assemble_config(opts);
  (void)resume;  // reruns always resume; the flag documents intent
  RunSummary summary = run_experiment(config);
  std::printf("run: %d participants (%d completed, %d resumed, %zu failed) -> %s\n", summary.total,
              summary.completed, summary.skipped, summary.failed.size(), config.out_dir.c_str());
  if (!summary.failed.empty()) {
    std::printf("failed participants:");
    for (const auto& pid : summary.failed) std::printf(" %s", pid.c_str());
    std::printf("\n");
    return kExitPartialFailure;
  }
  return kExitOk;
}

int cmd_analyze(const CommonOpts& opts, const std::string& records_path,
                const std::vector<std::string>& compare, bool no_draws,
                const std::string& model_spec_path) {
  RunConfig config = assemble_config(opts);
  std::string records_file = records_path;
  if (records_file.empty()) records_file = (fs::path(config.out_dir) / "records.tsv").string();
  fs::path run_dir = fs::path(records_file).parent_path();
  if (opts.out.empty() && !opts.config_path.empty()) {
    // analysis lands next to the records unless --out says otherwise
    config.out_dir = run_dir.string();
  }
  if (opts.out.empty() && opts.config_path.empty()) config.out_dir = run_dir.string();

  // Pick up the run's manifest so the analysis inherits seed and experiment.
  fs::path manifest = run_dir / "manifest.json";
  if (opts.config_path.empty() && fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::stringstream ss;
    ss << in.rdbuf();
    auto m = nlohmann::ordered_json::parse(ss.str());
    if (opts.experiment.empty() && m.contains("experiment")) {
      config.experiment = experiment_from_string(m["experiment"].get<std::string>());
    }
    if (!opts.seed_set && m.contains("root_seed")) config.root_seed = m["root_seed"].get<uint64_t>();
    if (m.contains("config")) {
      RunConfig from_manifest = run_config_from_json_text(m["config"].dump());
      from_manifest.experiment = config.experiment;
      from_manifest.root_seed = config.root_seed;
      from_manifest.out_dir = config.out_dir;
      config = from_manifest;
    }
  }

  AnalyzeOptions options;
  options.save_draws = !no_draws && config.save_draws;
  if (!model_spec_path.empty()) options.model_spec_path = model_spec_path;
  if (opts.seed_set) options.sampler_seed = derive_seed(opts.seed, "sampler");
  for (const auto& spec : compare) {
    size_t eq = spec.find('=');
    if (eq == std::string::npos) {
      options.compare.emplace_back(fs::path(spec).stem().string(), spec);
    } else {
      options.compare.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
    }
  }

  auto records = read_records(records_file);
  AnalyzeResult result = analyze_records(records, config.experiment, config, config.out_dir, options);
  std::printf("analyze: %s, %d pooled draws, %d divergences -> %s/report.md\n",
              to_string(config.experiment).c_str(), result.fit.pooled_draws,
              result.fit.divergences, config.out_dir.c_str());
  for (const auto& c : result.fit.fixed) {
    std::printf("  %-18s mean %8.4f  sd %7.4f  p_MAP %.4f %s\n", c.name.c_str(), c.mean, c.sd,
                c.p_map, p_map_flag(c.p_map).c_str());
  }
  return kExitOk;
}

int cmd_validate(const std::string& selector, uint64_t seed) {
  ValidateReport report = run_validation(selector, seed);
  std::string text = format_validation(report);
  std::fputs(text.c_str(), stdout);
  std::printf("validate: %s\n", report.all_pass() ? "all selected suites pass" : "FAILURES PRESENT");
  return kExitOk;  // failures are report content, not process failures
}

int cmd_report(const std::string& dir) {
  rerender_report(dir);
  std::printf("report: refreshed %s/report.md\n", dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Referential-priming experiment harness for completion-style language models"};
  app.set_version_flag("--version", refprime::kVersion);
  app.require_subcommand(1);

  CommonOpts opts;
  bool resume = false;
  std::string records_path;
  std::vector<std::string> compare;
  std::string model_spec_path;
  bool no_draws = false;
  std::string selector = "all";
  uint64_t validate_seed = 20240214;
  std::string report_dir;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "Run configuration JSON file");
    cmd->add_option("--experiment", opts.experiment, "Experiment id: e1a, e2a, e2b");
    cmd->add_option("--seed", opts.seed, "Root seed")->each([&](const std::string&) {
      opts.seed_set = true;
    });
    cmd->add_flag("--mock", opts.mock, "Use the deterministic mock participant");
    cmd->add_option("--out", opts.out, "Output directory");
  };

  CLI::App* run = app.add_subcommand("run", "Execute all sessions of an experiment");
  add_common(run);
  run->add_flag("--resume", resume, "Resume an interrupted run (completed participants are skipped)");

  CLI::App* analyze = app.add_subcommand("analyze", "Fit the regression and render reports");
  add_common(analyze);
  analyze->add_option("--records", records_path, "Trial records table (default: <out>/records.tsv)");
  analyze->add_option("--compare", compare,
                      "label=records.tsv of another cohort for Levene variance comparison");
  analyze->add_flag("--no-draws", no_draws, "Skip writing draws.csv");
  analyze->add_option("--model-spec", model_spec_path,
                      "JSON model specification replacing the built-in binding");

  CLI::App* validate = app.add_subcommand("validate", "Run the built-in oracle suites");
  validate->add_option("--suite", selector, "all or subset: gradient,grid,recovery,pmap,levene");
  validate->add_option("--seed", validate_seed, "Suite seed");

  CLI::App* report = app.add_subcommand("report", "Re-render reports from a completed analysis");
  report->add_option("--out", report_dir, "Analysis directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(opts, resume);
    if (analyze->parsed()) return cmd_analyze(opts, records_path, compare, no_draws, model_spec_path);
    if (validate->parsed()) return cmd_validate(selector, validate_seed);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const refprime::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfigError;
  } catch (const refprime::ApiError& e) {
    std::fprintf(stderr, "client error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfigError;
  }
  return kExitOk;
}
