#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "refprime/errors.hpp"
#include "refprime/runner.hpp"

using namespace refprime;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("refprime-runner-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_mock_config(const fs::path& out, uint64_t seed = 1001) {
  RunConfig c;
  c.experiment = Experiment::e1a;
  c.root_seed = seed;
  c.cohort_size = 4;
  c.client_type = ClientType::mock;
  c.mock_bias.content_accuracy = 1.0;
  c.mock_bias.subject_bias_by_exposure = {{ExposureCondition::subject, 0.9},
                                          {ExposureCondition::nonsubject, 0.3}};
  c.out_dir = out.string();
  c.concurrency = 2;
  return c;
}

}  // namespace

TEST_CASE("paper defaults are wired in") {
  CHECK(default_cohort_size(Experiment::e1a) == 24);
  CHECK(default_cohort_size(Experiment::e2a) == 24);
  CHECK(default_cohort_size(Experiment::e2b) == 60);
  CHECK(default_target_accept(Experiment::e1a) == 0.95);
  CHECK(default_target_accept(Experiment::e2a) == 0.98);
  CHECK(default_target_accept(Experiment::e2b) == 0.999);
  RunConfig c;
  CHECK(c.temperature_lo == 0.2);
  CHECK(c.temperature_hi == 1.0);
  CHECK(c.sampler.chains == 6);
  CHECK(c.sampler.iterations == 4000);
  CHECK(c.sampler.warmup == 1000);
}

TEST_CASE("config json parses with overrides and validates") {
  std::string text = R"({
    "experiment": "e2b",
    "root_seed": 99,
    "cohort_size": 8,
    "temperature": {"lo": 0.3, "hi": 0.9},
    "persona": {"enabled": true, "surnames": ["Reed"], "countries": ["England"]},
    "design": {"n_critical": 4},
    "client": {"type": "mock", "mock": {"content_accuracy": 0.8,
               "subject_bias_by_exposure": {"goal": 0.7}}},
    "sampler": {"chains": 2, "iterations": 500, "warmup": 200},
    "concurrency": 3
  })";
  RunConfig c = run_config_from_json_text(text);
  CHECK(c.experiment == Experiment::e2b);
  CHECK(c.root_seed == 99);
  CHECK(c.cohort_size == 8);
  CHECK(c.temperature_lo == 0.3);
  CHECK(c.persona_enabled);
  REQUIRE(c.n_critical.has_value());
  CHECK(*c.n_critical == 4);
  CHECK(c.mock_bias.content_accuracy == 0.8);
  CHECK(c.mock_bias.subject_bias_by_exposure.at(ExposureCondition::goal) == 0.7);
  CHECK(c.sampler.chains == 2);
  CHECK(c.concurrency == 3);
  CHECK_FALSE(c.target_accept_overridden);

  CHECK_THROWS_AS(run_config_from_json_text("{"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json_text(R"({"client": {"type": "webscale"}})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json_text(R"({"sampler": {"warmup": 5000}})"), ConfigError);
}

TEST_CASE("fingerprints ignore the output directory but track the seed") {
  RunConfig a = small_mock_config("dir-a");
  RunConfig b = small_mock_config("dir-b");
  CHECK(config_fingerprint(a) == config_fingerprint(b));
  RunConfig c = small_mock_config("dir-a", 2002);
  CHECK(config_fingerprint(a) != config_fingerprint(c));
}

TEST_CASE("cohorts alternate conditions and carry unique temperatures") {
  RunConfig config = small_mock_config("unused");
  config.cohort_size = 6;
  auto cohort = build_cohort(config);
  REQUIRE(cohort.size() == 6);
  for (size_t i = 0; i < cohort.size(); ++i) {
    CHECK(cohort[i].design.exposure_condition ==
          (i % 2 == 0 ? ExposureCondition::subject : ExposureCondition::nonsubject));
    for (size_t j = i + 1; j < cohort.size(); ++j) {
      CHECK(cohort[i].temperature != cohort[j].temperature);
    }
    CHECK_FALSE(cohort[i].persona.has_value());
  }
  config.persona_enabled = true;
  auto personas = build_cohort(config);
  CHECK(personas[0].persona.has_value());
}

TEST_CASE("a mock run persists everything and resumes to zero new sessions") {
  TempDir dir("resume");
  RunConfig config = small_mock_config(dir.path);
  RunSummary first = run_experiment(config);
  CHECK(first.total == 4);
  CHECK(first.completed == 4);
  CHECK(first.skipped == 0);
  CHECK(first.failed.empty());
  CHECK(fs::exists(dir.path / "manifest.json"));
  CHECK(fs::exists(dir.path / "items.jsonl"));
  CHECK(fs::exists(dir.path / "cohort.tsv"));
  for (int i = 1; i <= 4; ++i) {
    char pid[8];
    std::snprintf(pid, sizeof(pid), "p%03d", i);
    CHECK(fs::exists(dir.path / "participants" / (std::string(pid) + ".records.tsv")));
    CHECK(fs::exists(dir.path / "participants" / (std::string(pid) + ".transcript.txt")));
    CHECK(fs::exists(dir.path / "participants" / (std::string(pid) + ".log.jsonl")));
    CHECK(fs::exists(dir.path / "participants" / (std::string(pid) + ".done")));
  }
  auto records = read_records((dir.path / "records.tsv").string());
  CHECK(records.size() == 4u * 44u);
  std::string merged_before = slurp(dir.path / "records.tsv");

  RunSummary second = run_experiment(config);
  CHECK(second.completed == 0);
  CHECK(second.skipped == 4);
  CHECK(slurp(dir.path / "records.tsv") == merged_before);
}

TEST_CASE("a changed configuration cannot reuse a run directory") {
  TempDir dir("fingerprint");
  RunConfig config = small_mock_config(dir.path);
  run_experiment(config);
  RunConfig other = small_mock_config(dir.path, 2002);
  CHECK_THROWS_AS(run_experiment(other), ConfigError);
}

TEST_CASE("remote runs fail fast without credentials") {
  TempDir dir("remote");
  RunConfig config = small_mock_config(dir.path);
  config.client_type = ClientType::remote;
  config.endpoint.api_key_env = "REFPRIME_ABSENT_KEY";
  unsetenv("REFPRIME_ABSENT_KEY");
  CHECK_THROWS_AS(run_experiment(config), ApiError);
  CHECK_FALSE(fs::exists(dir.path / "records.tsv"));
}

TEST_CASE("analysis writes reports deterministically across directories") {
  TempDir dir_a("analyze-a");
  TempDir dir_b("analyze-b");
  for (const fs::path* out : {&dir_a.path, &dir_b.path}) {
    RunConfig config = small_mock_config(*out);
    config.cohort_size = 8;
    run_experiment(config);
    auto records = read_records((*out / "records.tsv").string());
    AnalyzeOptions options;
    options.save_draws = false;
    SamplerConfig small;
    small.chains = 2;
    small.iterations = 900;
    small.warmup = 300;
    small.target_accept = 0.9;
    options.sampler_override = small;
    analyze_records(records, config.experiment, config, out->string(), options);
  }
  CHECK(slurp(dir_a.path / "records.tsv") == slurp(dir_b.path / "records.tsv"));
  CHECK(slurp(dir_a.path / "report.md") == slurp(dir_b.path / "report.md"));
  CHECK(slurp(dir_a.path / "report.json") == slurp(dir_b.path / "report.json"));
  CHECK(slurp(dir_a.path / "fit.json") == slurp(dir_b.path / "fit.json"));
  CHECK(fs::exists(dir_a.path / "proportions.tsv"));
  CHECK_FALSE(fs::exists(dir_a.path / "draws.csv"));

  // report re-rendering is idempotent
  std::string before = slurp(dir_a.path / "report.md");
  rerender_report(dir_a.path.string());
  CHECK(slurp(dir_a.path / "report.md") == before);
}

TEST_CASE("an e2b cohort runs and fits end to end") {
  TempDir dir("e2b");
  RunConfig config;
  config.experiment = Experiment::e2b;
  config.root_seed = 777;
  config.cohort_size = 6;
  config.client_type = ClientType::mock;
  config.mock_bias.content_accuracy = 1.0;
  config.mock_bias.subject_bias_by_exposure = {{ExposureCondition::goal, 0.5},
                                               {ExposureCondition::source, 0.5}};
  config.mock_bias.goal_bias = 0.8;
  config.out_dir = dir.path.string();
  RunSummary summary = run_experiment(config);
  CHECK(summary.completed == 6);
  auto records = read_records((dir.path / "records.tsv").string());
  CHECK(records.size() == 6u * 36u);  // 12 + 12 exposures, 12 criticals
  AnalyzeOptions options;
  options.save_draws = true;
  SamplerConfig small;
  small.chains = 2;
  small.iterations = 900;
  small.warmup = 300;
  small.target_accept = 0.9;
  options.sampler_override = small;
  AnalyzeResult result =
      analyze_records(records, Experiment::e2b, config, dir.path.string(), options);
  CHECK(result.fit.fixed.size() == 8);  // intercept + 3 mains + 3 two-way + 1 three-way
  CHECK(fs::exists(dir.path / "draws.csv"));
  std::string header;
  std::ifstream draws(dir.path / "draws.csv");
  std::getline(draws, header);
  CHECK(header == "chain,draw,parameter,value");
  // strong configured goal bias shows up positive under the goal=1 coding
  bool found = false;
  for (const auto& row : result.fit.fixed) {
    if (row.name == "b_Vc") found = true;
  }
  CHECK(found);
}

TEST_CASE("externally supplied stimulus files drive both conditions") {
  TempDir dir("stimuli");
  // Build a pool holding exposure items for both conditions plus criticals.
  auto subj_items = generate_templates(make_design(Experiment::e1a, ExposureCondition::subject), 5);
  auto nons_items =
      generate_templates(make_design(Experiment::e1a, ExposureCondition::nonsubject), 5);
  std::vector<StimulusItem> pool = subj_items;
  for (const auto& item : nons_items) {
    if (!item.ambiguous) pool.push_back(item);  // criticals are shared already
  }
  fs::path stim = dir.path / "pool.jsonl";
  write_stimuli(stim.string(), pool);

  RunConfig config = small_mock_config(dir.path / "run");
  config.stimuli_path = stim.string();
  RunSummary summary = run_experiment(config);
  CHECK(summary.completed == 4);
  auto records = read_records((dir.path / "run" / "records.tsv").string());
  CHECK(records.size() == 4u * 44u);
}

TEST_CASE("per-participant item generation is available and distinct") {
  TempDir dir("per-participant");
  RunConfig config = small_mock_config(dir.path);
  config.cohort_size = 2;
  config.per_participant_items = true;
  RunSummary summary = run_experiment(config);
  CHECK(summary.completed == 2);
  auto records = read_records((dir.path / "records.tsv").string());
  CHECK(records.size() == 2u * 44u);
  std::set<std::string> p1_items, p2_items;
  for (const auto& r : records) {
    (r.participant_id == "p001" ? p1_items : p2_items).insert(r.item_id);
  }
  for (const auto& id : p1_items) CHECK(p2_items.count(id) == 0);
  CHECK(fs::exists(dir.path / "participants" / "p001.items.jsonl"));
  CHECK_THROWS_AS(run_config_from_json_text(
                      R"({"per_participant_items": true, "stimuli_path": "x.jsonl"})"),
                  ConfigError);
}

TEST_CASE("instruction headers lead every prompt of a session") {
  TempDir dir("header");
  RunConfig config = small_mock_config(dir.path);
  config.cohort_size = 1;
  config.instruction_header = "Answer every question with Yes or No.";
  run_experiment(config);
  std::string transcript = slurp(dir.path / "participants" / "p001.transcript.txt");
  CHECK(transcript.rfind(config.instruction_header, 0) == 0);
  std::string log = slurp(dir.path / "participants" / "p001.log.jsonl");
  std::string first_line = log.substr(0, log.find('\n'));
  CHECK(first_line.find("Answer every question with Yes or No.") != std::string::npos);
}

TEST_CASE("analysis refuses a fully excluded record set") {
  TempDir dir("excluded");
  RunConfig config = small_mock_config(dir.path);
  config.mock_bias.content_accuracy = 0.0;  // every trial excluded
  run_experiment(config);
  auto records = read_records((dir.path / "records.tsv").string());
  AnalyzeOptions options;
  CHECK_THROWS_AS(analyze_records(records, config.experiment, config, dir.path.string(), options),
                  ValidationError);
}
