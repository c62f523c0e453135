#include "refprime/runner.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "refprime/errors.hpp"
#include "refprime/math/rng.hpp"
#include "refprime/math/special.hpp"
#include "refprime/version.hpp"

namespace refprime {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

int default_cohort_size(Experiment e) { return e == Experiment::e2b ? 60 : 24; }

double default_target_accept(Experiment e) {
  switch (e) {
    case Experiment::e1a: return 0.95;
    case Experiment::e2a: return 0.98;
    case Experiment::e2b: return 0.999;
  }
  return 0.95;
}

namespace {

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ParseError("cannot open for writing: " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Resolve per-experiment defaults into explicit values.
RunConfig resolved(const RunConfig& in) {
  RunConfig c = in;
  if (c.cohort_size <= 0) c.cohort_size = default_cohort_size(c.experiment);
  if (!c.target_accept_overridden) c.sampler.target_accept = default_target_accept(c.experiment);
  return c;
}

}  // namespace

ExperimentDesign design_for(const RunConfig& config, ExposureCondition condition) {
  ExperimentDesign d = make_design(config.experiment, condition);
  if (config.n_initial_exposures) d.n_initial_exposures = *config.n_initial_exposures;
  if (config.n_interleaved_exposures) d.n_interleaved_exposures = *config.n_interleaved_exposures;
  if (config.n_critical) d.n_critical = *config.n_critical;
  d.seed = config.root_seed;
  validate_design(d);
  return d;
}

RunConfig run_config_from_json_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  try {
    if (j.contains("experiment")) c.experiment = experiment_from_string(j["experiment"]);
    c.root_seed = j.value("root_seed", c.root_seed);
    c.cohort_size = j.value("cohort_size", 0);
    if (j.contains("temperature")) {
      c.temperature_lo = j["temperature"].value("lo", c.temperature_lo);
      c.temperature_hi = j["temperature"].value("hi", c.temperature_hi);
    }
    if (j.contains("persona")) {
      c.persona_enabled = j["persona"].value("enabled", false);
      if (j["persona"].contains("surnames")) {
        c.persona_surnames = j["persona"]["surnames"].get<std::vector<std::string>>();
      }
      if (j["persona"].contains("countries")) {
        c.persona_countries = j["persona"]["countries"].get<std::vector<std::string>>();
      }
    }
    c.instruction_header = j.value("instruction_header", std::string());
    if (j.contains("design")) {
      const auto& d = j["design"];
      if (d.contains("n_initial_exposures")) c.n_initial_exposures = d["n_initial_exposures"].get<int>();
      if (d.contains("n_interleaved_exposures")) {
        c.n_interleaved_exposures = d["n_interleaved_exposures"].get<int>();
      }
      if (d.contains("n_critical")) c.n_critical = d["n_critical"].get<int>();
    }
    if (j.contains("client")) {
      const auto& cl = j["client"];
      std::string type = cl.value("type", std::string("mock"));
      if (type == "mock") {
        c.client_type = ClientType::mock;
      } else if (type == "remote") {
        c.client_type = ClientType::remote;
      } else {
        throw ConfigError("client.type must be mock or remote");
      }
      if (cl.contains("mock")) {
        const auto& m = cl["mock"];
        if (m.contains("yes_rate_ambiguous") && !m["yes_rate_ambiguous"].is_null()) {
          c.mock_bias.yes_rate_ambiguous = m["yes_rate_ambiguous"].get<double>();
        }
        c.mock_bias.content_accuracy = m.value("content_accuracy", 1.0);
        c.mock_bias.goal_bias = m.value("goal_bias", 0.0);
        c.mock_bias.seed = m.value("seed", 0ull);
        if (m.contains("subject_bias_by_exposure")) {
          for (const auto& [key, value] : m["subject_bias_by_exposure"].items()) {
            c.mock_bias.subject_bias_by_exposure[condition_from_string(key)] = value.get<double>();
          }
        }
        validate_bias(c.mock_bias);
      }
      if (cl.contains("remote")) {
        const auto& r = cl["remote"];
        c.endpoint.base_url = r.value("base_url", c.endpoint.base_url);
        c.endpoint.completions_path = r.value("completions_path", c.endpoint.completions_path);
        c.endpoint.model_name = r.value("model", c.endpoint.model_name);
        c.endpoint.api_format = r.value("api_format", c.endpoint.api_format);
        if (c.endpoint.api_format != "completions" && c.endpoint.api_format != "chat") {
          throw ConfigError("client.remote.api_format must be completions or chat");
        }
        c.endpoint.api_key_env = r.value("api_key_env", c.endpoint.api_key_env);
        c.endpoint.requests_per_minute = r.value("requests_per_minute", c.endpoint.requests_per_minute);
        c.endpoint.timeout_seconds = r.value("timeout_seconds", c.endpoint.timeout_seconds);
        c.endpoint.retry.max_retries = r.value("max_retries", c.endpoint.retry.max_retries);
        c.remote_max_tokens = r.value("max_tokens", c.remote_max_tokens);
      }
    }
    if (j.contains("sampler")) {
      const auto& s = j["sampler"];
      c.sampler.chains = s.value("chains", c.sampler.chains);
      c.sampler.iterations = s.value("iterations", c.sampler.iterations);
      c.sampler.warmup = s.value("warmup", c.sampler.warmup);
      if (s.contains("target_accept") && !s["target_accept"].is_null()) {
        c.sampler.target_accept = s["target_accept"].get<double>();
        c.target_accept_overridden = true;
      }
      c.sampler.max_tree_depth = s.value("max_tree_depth", c.sampler.max_tree_depth);
      c.sampler.fixed_length = s.value("fixed_length", c.sampler.fixed_length);
      c.sampler.leapfrog_steps = s.value("leapfrog_steps", c.sampler.leapfrog_steps);
      c.sampler.threads = s.value("threads", c.sampler.threads);
    }
    c.out_dir = j.value("out_dir", c.out_dir);
    c.concurrency = j.value("concurrency", c.concurrency);
    c.lexicon_path = j.value("lexicon_path", std::string());
    c.stimuli_path = j.value("stimuli_path", std::string());
    c.per_participant_items = j.value("per_participant_items", false);
    c.save_draws = j.value("save_draws", true);
    if (c.per_participant_items && !c.stimuli_path.empty()) {
      throw ConfigError("per_participant_items cannot be combined with stimuli_path");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.concurrency < 1) throw ConfigError("concurrency must be >= 1");
  validate_sampler_config(c.sampler);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  return run_config_from_json_text(read_file(path));
}

std::string canonical_config_json(const RunConfig& in) {
  RunConfig c = resolved(in);
  ordered_json j;
  j["experiment"] = to_string(c.experiment);
  j["root_seed"] = c.root_seed;
  j["cohort_size"] = c.cohort_size;
  j["temperature"] = {{"lo", c.temperature_lo}, {"hi", c.temperature_hi}};
  j["persona"] = {{"enabled", c.persona_enabled},
                  {"surnames", c.persona_surnames},
                  {"countries", c.persona_countries}};
  j["instruction_header"] = c.instruction_header;
  ordered_json design;
  auto [cond_a, cond_b] = legal_conditions(c.experiment);
  ExperimentDesign d = design_for(c, cond_a);
  design["n_initial_exposures"] = d.n_initial_exposures;
  design["n_interleaved_exposures"] = d.n_interleaved_exposures;
  design["n_critical"] = d.n_critical;
  j["design"] = design;
  ordered_json client;
  client["type"] = c.client_type == ClientType::mock ? "mock" : "remote";
  if (c.client_type == ClientType::mock) {
    ordered_json m;
    m["yes_rate_ambiguous"] =
        c.mock_bias.yes_rate_ambiguous ? ordered_json(*c.mock_bias.yes_rate_ambiguous) : ordered_json(nullptr);
    m["content_accuracy"] = c.mock_bias.content_accuracy;
    ordered_json biases;
    for (const auto& [cond, p] : c.mock_bias.subject_bias_by_exposure) biases[to_string(cond)] = p;
    m["subject_bias_by_exposure"] = biases;
    m["goal_bias"] = c.mock_bias.goal_bias;
    m["seed"] = c.mock_bias.seed;
    client["mock"] = m;
  } else {
    client["remote"] = {{"base_url", c.endpoint.base_url},
                        {"completions_path", c.endpoint.completions_path},
                        {"model", c.endpoint.model_name},
                        {"api_format", c.endpoint.api_format},
                        {"api_key_env", c.endpoint.api_key_env},
                        {"requests_per_minute", c.endpoint.requests_per_minute},
                        {"timeout_seconds", c.endpoint.timeout_seconds},
                        {"max_retries", c.endpoint.retry.max_retries},
                        {"max_tokens", c.remote_max_tokens}};
  }
  j["client"] = client;
  j["sampler"] = {{"chains", c.sampler.chains},
                  {"iterations", c.sampler.iterations},
                  {"warmup", c.sampler.warmup},
                  {"target_accept", c.sampler.target_accept},
                  {"max_tree_depth", c.sampler.max_tree_depth},
                  {"fixed_length", c.sampler.fixed_length},
                  {"leapfrog_steps", c.sampler.leapfrog_steps}};
  j["lexicon_path"] = c.lexicon_path;
  j["stimuli_path"] = c.stimuli_path;
  j["per_participant_items"] = c.per_participant_items;
  (void)cond_b;
  return j.dump(2) + "\n";
}

std::string config_fingerprint(const RunConfig& config) {
  return hex64(fnv1a64(canonical_config_json(config)));
}

std::vector<ParticipantProfile> build_cohort(const RunConfig& in) {
  RunConfig c = resolved(in);
  auto [cond_a, cond_b] = legal_conditions(c.experiment);
  std::vector<double> temps = assign_temperatures(c.cohort_size, c.temperature_lo, c.temperature_hi,
                                                  derive_seed(c.root_seed, "temperatures"));
  Rng persona_rng(derive_seed(c.root_seed, "persona"));
  std::vector<ParticipantProfile> cohort;
  cohort.reserve(static_cast<size_t>(c.cohort_size));
  for (int i = 0; i < c.cohort_size; ++i) {
    ParticipantProfile p;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "p%03d", i + 1);
    p.participant_id = idbuf;
    p.temperature = temps[static_cast<size_t>(i)];
    p.design = design_for(c, i % 2 == 0 ? cond_a : cond_b);
    if (c.persona_enabled) {
      if (c.persona_surnames.empty() || c.persona_countries.empty()) {
        throw ConfigError("persona pools must be nonempty when persona is enabled");
      }
      Persona persona;
      bool male = persona_rng.bernoulli(0.5);
      persona.prefix = male ? "Mr." : "Ms.";
      persona.gender_pronoun = male ? "He" : "She";
      persona.name = c.persona_surnames[persona_rng.below(c.persona_surnames.size())];
      persona.country = c.persona_countries[persona_rng.below(c.persona_countries.size())];
      p.persona = persona;
    }
    cohort.push_back(std::move(p));
  }
  return cohort;
}

namespace {

std::string cohort_tsv(const std::vector<ParticipantProfile>& cohort,
                       const std::vector<std::string>& status) {
  std::ostringstream out;
  out << "participant_id\texposure_condition\ttemperature\tpersona\tstatus\n";
  char buf[32];
  for (size_t i = 0; i < cohort.size(); ++i) {
    const auto& p = cohort[i];
    std::snprintf(buf, sizeof(buf), "%.3f", p.temperature);
    out << p.participant_id << '\t' << to_string(p.design.exposure_condition) << '\t' << buf << '\t';
    if (p.persona) {
      out << p.persona->prefix << ' ' << p.persona->name << " / " << p.persona->country << " / "
          << p.persona->gender_pronoun;
    } else {
      out << "-";
    }
    out << '\t' << status[i] << "\n";
  }
  return out.str();
}

std::string request_log_jsonl(const std::vector<RequestLogEntry>& log) {
  std::ostringstream out;
  for (const auto& e : log) {
    ordered_json j;
    j["slot"] = e.slot_position;
    j["kind"] = e.kind == QuestionKind::content ? "content" : "reference";
    j["prompt"] = e.prompt;
    j["response"] = e.raw_response;
    out << j.dump() << "\n";
  }
  return out.str();
}

std::string transcript_text(const Transcript& t) {
  std::string s = serialize_transcript(t);
  if (s.empty() || s.back() != '\n') s += "\n";
  return s;
}

}  // namespace

RunSummary run_experiment(const RunConfig& in) {
  RunConfig c = resolved(in);
  validate_sampler_config(c.sampler);
  if (c.cohort_size < 1) throw ConfigError("cohort_size must be >= 1");

  fs::path out(c.out_dir);
  fs::create_directories(out / "participants");
  std::string fingerprint = config_fingerprint(c);
  fs::path manifest_path = out / "manifest.json";
  if (fs::exists(manifest_path)) {
    ordered_json m = ordered_json::parse(read_file(manifest_path));
    std::string existing = m.value("fingerprint", std::string());
    if (existing != fingerprint) {
      throw ConfigError("output directory " + c.out_dir +
                        " holds a run with a different configuration (fingerprint " + existing +
                        " vs " + fingerprint + "); use a fresh --out");
    }
  } else {
    ordered_json m;
    m["tool"] = "refprime";
    m["version"] = kVersion;
    m["fingerprint"] = fingerprint;
    m["root_seed"] = c.root_seed;
    m["experiment"] = to_string(c.experiment);
    m["config"] = ordered_json::parse(canonical_config_json(c));
    write_file_atomic(manifest_path, m.dump(2) + "\n");
  }

  const Lexicon lexicon = c.lexicon_path.empty() ? default_lexicon() : load_lexicon(c.lexicon_path);
  auto [cond_a, cond_b] = legal_conditions(c.experiment);
  std::map<ExposureCondition, std::vector<StimulusItem>> items;
  if (!c.stimuli_path.empty()) {
    // One externally supplied pool serves both conditions; the scheduler
    // selects condition-consistent exposure items from it.
    std::vector<StimulusItem> pool = load_stimuli(c.stimuli_path);
    items[cond_a] = pool;
    items[cond_b] = std::move(pool);
  } else if (!c.per_participant_items) {
    for (ExposureCondition cond : {cond_a, cond_b}) {
      items[cond] = generate_templates(design_for(c, cond), derive_seed(c.root_seed, "items"), lexicon);
    }
  }
  if (!c.per_participant_items) {
    // Union of both condition sets; shared critical items appear once.
    std::vector<StimulusItem> all;
    std::set<std::string> seen;
    for (ExposureCondition cond : {cond_a, cond_b}) {
      for (const auto& item : items[cond]) {
        if (seen.insert(item.item_id).second) all.push_back(item);
      }
    }
    std::ostringstream ss;
    for (const auto& item : all) ss << stimulus_to_json_line(item) << "\n";
    write_file_atomic(out / "items.jsonl", ss.str());
  }

  std::vector<ParticipantProfile> cohort = build_cohort(c);

  std::unique_ptr<HttpCompletionClient> remote;
  if (c.client_type == ClientType::remote) {
    remote = std::make_unique<HttpCompletionClient>(c.endpoint);
    remote->api_key();  // fail fast on missing credentials, before any session
  }

  RunSummary summary;
  summary.total = static_cast<int>(cohort.size());
  std::vector<std::string> status(cohort.size(), "pending");
  std::mutex status_mu;

  auto run_one = [&](size_t i) {
    const ParticipantProfile& profile = cohort[i];
    fs::path base = out / "participants" / profile.participant_id;
    fs::path done = base;
    done += ".done";
    fs::path failed = base;
    failed += ".failed";
    if (fs::exists(done)) {
      std::lock_guard<std::mutex> lock(status_mu);
      status[i] = "done";
      ++summary.skipped;
      return;
    }
    try {
      ExperimentDesign design = profile.design;
      std::vector<StimulusItem> own_items;
      if (c.per_participant_items) {
        own_items = generate_templates(design, derive_seed(c.root_seed, "items", static_cast<uint64_t>(i)),
                                       lexicon);
        for (auto& item : own_items) item.item_id += "-" + profile.participant_id;
        std::ostringstream ss;
        for (const auto& item : own_items) ss << stimulus_to_json_line(item) << "\n";
        fs::path items_path = base;
        items_path += ".items.jsonl";
        write_file_atomic(items_path, ss.str());
      }
      std::vector<TrialSlot> schedule = build_schedule(
          design, c.per_participant_items ? own_items : items.at(design.exposure_condition),
          derive_seed(c.root_seed, "schedule", static_cast<uint64_t>(i)));
      std::unique_ptr<Responder> responder;
      if (c.client_type == ClientType::mock) {
        responder = std::make_unique<MockResponder>(
            c.mock_bias, derive_seed(c.root_seed, "mock", static_cast<uint64_t>(i)));
      } else {
        responder =
            std::make_unique<RemoteResponder>(*remote, c.endpoint.model_name, c.remote_max_tokens);
      }
      SessionResult result =
          run_session(profile, schedule, *responder, AnswerLexicon{}, c.instruction_header);
      fs::path records_path = base;
      records_path += ".records.tsv";
      write_file_atomic(records_path, records_to_tsv(result.records));
      fs::path transcript_path = base;
      transcript_path += ".transcript.txt";
      write_file_atomic(transcript_path, transcript_text(result.transcript));
      fs::path log_path = base;
      log_path += ".log.jsonl";
      write_file_atomic(log_path, request_log_jsonl(result.log));
      std::lock_guard<std::mutex> lock(status_mu);
      if (result.failure) {
        write_file_atomic(failed, *result.failure + "\n");
        status[i] = "failed";
        summary.failed.push_back(profile.participant_id);
      } else {
        if (fs::exists(failed)) fs::remove(failed);
        write_file_atomic(done, "ok\n");
        status[i] = "done";
        ++summary.completed;
      }
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(status_mu);
      write_file_atomic(failed, std::string(e.what()) + "\n");
      status[i] = "failed";
      summary.failed.push_back(profile.participant_id);
    }
  };

  int workers = std::min<int>(c.concurrency, static_cast<int>(cohort.size()));
  if (workers <= 1) {
    for (size_t i = 0; i < cohort.size(); ++i) run_one(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&]() {
        while (true) {
          size_t i = next.fetch_add(1);
          if (i >= cohort.size()) return;
          run_one(i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  write_file_atomic(out / "cohort.tsv", cohort_tsv(cohort, status));

  // Merged table over all completed participants, in cohort order.
  std::vector<TrialRecord> merged;
  for (const auto& profile : cohort) {
    fs::path records_path = out / "participants" / (profile.participant_id + ".records.tsv");
    fs::path done = out / "participants" / (profile.participant_id + ".done");
    if (!fs::exists(records_path) || !fs::exists(done)) continue;
    auto part = read_records(records_path.string());
    merged.insert(merged.end(), part.begin(), part.end());
  }
  write_file_atomic(out / "records.tsv", records_to_tsv(merged));
  std::sort(summary.failed.begin(), summary.failed.end());
  return summary;
}

namespace {

std::vector<double> temperatures_from_cohort_file(const fs::path& path) {
  std::vector<double> out;
  if (!fs::exists(path)) return out;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t a = line.find('\t');
    size_t b = line.find('\t', a + 1);
    size_t cpos = line.find('\t', b + 1);
    if (a == std::string::npos || b == std::string::npos) continue;
    out.push_back(std::stod(line.substr(b + 1, cpos - b - 1)));
  }
  return out;
}

std::string proportions_tsv(const ProportionTable& table) {
  std::ostringstream out;
  out << "exposure_condition\tref_focus\tverb_class\tproportion\tcount\n";
  char buf[32];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.proportion);
    out << to_string(r.exposure) << '\t' << to_string(r.focus) << '\t'
        << (r.verb ? to_string(*r.verb) : std::string("-")) << '\t' << buf << '\t' << r.count
        << "\n";
  }
  return out.str();
}

}  // namespace

AnalyzeResult analyze_records(const std::vector<TrialRecord>& records_in, Experiment experiment,
                              const RunConfig& in, const std::string& out_dir,
                              const AnalyzeOptions& options) {
  RunConfig c = resolved(in);
  std::vector<TrialRecord> records = records_in;
  apply_exclusions(records);

  std::vector<TrialRecord> usable;
  for (const auto& r : records) {
    if (!r.excluded && r.phase == Phase::critical && r.referent_code) usable.push_back(r);
  }
  if (usable.empty()) {
    throw ValidationError("analyze: no non-excluded critical records with referent codes");
  }

  ExperimentModelBinding binding = model_spec_for(experiment);
  if (options.model_spec_path) binding.spec = load_model_spec(*options.model_spec_path);
  DesignMatrix dm = build_design_matrix(usable, binding.spec);

  SamplerConfig sampler = options.sampler_override ? *options.sampler_override : c.sampler;
  if (!options.sampler_override && !c.target_accept_overridden) {
    sampler.target_accept = default_target_accept(experiment);
  }
  sampler.seed = options.sampler_seed ? *options.sampler_seed : derive_seed(c.root_seed, "sampler");
  validate_sampler_config(sampler);

  Priors priors;
  PosteriorDraws draws = sample(dm, priors, sampler);
  FitSummary fit = summarize(draws);

  ReportInputs rep;
  rep.experiment = experiment;
  rep.fingerprint = config_fingerprint(c);
  rep.root_seed = c.root_seed;
  rep.binding = binding;
  rep.sampler = sampler;
  rep.priors = priors;
  rep.fit = fit;
  rep.proportions = condition_proportions(records, experiment);
  rep.descriptives = compute_descriptives(records);
  rep.temperatures = temperatures_from_cohort_file(fs::path(out_dir) / "cohort.tsv");

  std::vector<double> own_means = participant_means(records);
  for (const auto& [label, path] : options.compare) {
    std::vector<TrialRecord> other = read_records(path);
    apply_exclusions(other);
    std::vector<double> other_means = participant_means(other);
    VarianceComparison comp;
    comp.label_a = "this-run";
    comp.label_b = label;
    comp.variance_a = own_means.size() >= 2 ? sample_variance(own_means) : 0.0;
    comp.variance_b = other_means.size() >= 2 ? sample_variance(other_means) : 0.0;
    comp.median_centered = levene_test({own_means, other_means}, LeveneCenter::median);
    comp.mean_centered = levene_test({own_means, other_means}, LeveneCenter::mean);
    rep.comparisons.push_back(std::move(comp));
  }

  AnalyzeResult result;
  result.fit = fit;
  result.report = rep;
  result.report_markdown = render_report_markdown(rep);
  result.report_json = render_report_json(rep);

  fs::path out(out_dir);
  fs::create_directories(out);
  write_file_atomic(out / "report.md", result.report_markdown);
  write_file_atomic(out / "report.json", result.report_json);
  {
    ordered_json fj;
    fj["pooled_draws"] = fit.pooled_draws;
    fj["chains"] = fit.chains;
    fj["divergences"] = fit.divergences;
    ordered_json coefs = ordered_json::array();
    for (const auto& cf : fit.fixed) {
      coefs.push_back({{"name", cf.name},
                       {"mean", cf.mean},
                       {"sd", cf.sd},
                       {"q2.5", cf.q025},
                       {"q97.5", cf.q975},
                       {"rhat", cf.rhat},
                       {"ess_bulk", cf.ess_bulk},
                       {"p_map", cf.p_map}});
    }
    fj["fixed_effects"] = coefs;
    write_file_atomic(out / "fit.json", fj.dump(2) + "\n");
  }
  write_file_atomic(out / "proportions.tsv", proportions_tsv(rep.proportions));
  if (options.save_draws) write_draws_csv((out / "draws.csv").string(), draws);
  return result;
}

void rerender_report(const std::string& out_dir) {
  fs::path out(out_dir);
  ordered_json j = ordered_json::parse(read_file(out / "report.json"));
  ReportInputs rep;
  rep.experiment = experiment_from_string(j.at("experiment").get<std::string>());
  rep.fingerprint = j.value("fingerprint", std::string());
  rep.root_seed = j.value("root_seed", 0ull);
  rep.binding = model_spec_for(rep.experiment);
  rep.sampler.chains = j["sampler"]["chains"].get<int>();
  rep.sampler.iterations = j["sampler"]["iterations"].get<int>();
  rep.sampler.warmup = j["sampler"]["warmup"].get<int>();
  rep.sampler.target_accept = j["sampler"]["target_accept"].get<double>();
  rep.sampler.max_tree_depth = j["sampler"]["max_tree_depth"].get<int>();
  rep.sampler.seed = j["sampler"]["seed"].get<uint64_t>();
  rep.priors.fixed_scale = j["priors"]["fixed_scale"].get<double>();
  rep.priors.sd_df = j["priors"]["sd_df"].get<double>();
  rep.priors.sd_scale = j["priors"]["sd_scale"].get<double>();
  rep.priors.lkj_shape = j["priors"]["lkj_shape"].get<double>();
  rep.fit.pooled_draws = j["pooled_draws"].get<int>();
  rep.fit.divergences = j["divergences"].get<int>();
  rep.fit.chains = rep.sampler.chains;
  for (const auto& w : j["warnings"]) rep.fit.warnings.push_back(w.get<std::string>());
  for (const auto& row : j["fixed_effects"]) {
    CoefficientSummary cs;
    cs.name = row["name"].get<std::string>();
    cs.mean = row["mean"].get<double>();
    cs.sd = row["sd"].get<double>();
    cs.q025 = row["q2.5"].get<double>();
    cs.q975 = row["q97.5"].get<double>();
    cs.rhat = row["rhat"].is_null() ? std::numeric_limits<double>::quiet_NaN()
                                    : row["rhat"].get<double>();
    cs.ess_bulk = row["ess_bulk"].is_null() ? std::numeric_limits<double>::quiet_NaN()
                                            : row["ess_bulk"].get<double>();
    cs.p_map = row["p_map"].get<double>();
    rep.fit.fixed.push_back(std::move(cs));
  }
  for (const auto& row : j["condition_proportions"]) {
    ProportionRow pr;
    pr.exposure = condition_from_string(row["exposure"].get<std::string>());
    pr.focus = focus_from_string(row["focus"].get<std::string>());
    if (row.contains("verb_class")) pr.verb = verb_class_from_string(row["verb_class"].get<std::string>());
    pr.proportion = row["proportion"].get<double>();
    pr.count = row["count"].get<int>();
    rep.proportions.rows.push_back(pr);
  }
  const auto& d = j["descriptives"];
  rep.descriptives.n_records = d["n_records"].get<int>();
  rep.descriptives.n_critical = d["n_critical"].get<int>();
  rep.descriptives.n_excluded = d["n_excluded"].get<int>();
  rep.descriptives.n_participants = d["n_participants"].get<int>();
  rep.descriptives.content_accuracy = d["content_accuracy"].get<double>();
  rep.descriptives.exclusion_rate = d["exclusion_rate"].get<double>();
  if (!d["yes_rate_critical"].is_null()) {
    rep.descriptives.yes_rate_critical = d["yes_rate_critical"].get<double>();
    rep.descriptives.has_yes_rate = true;
  }
  if (!d["response_variance"].is_null()) {
    rep.descriptives.response_variance = d["response_variance"].get<double>();
    rep.descriptives.has_response_variance = true;
  }
  rep.descriptives.zero_response_variance = d["zero_response_variance"].get<bool>();
  for (const auto& row : j["variance_comparisons"]) {
    VarianceComparison comp;
    comp.label_a = row["a"].get<std::string>();
    comp.label_b = row["b"].get<std::string>();
    comp.variance_a = row["variance_a"].get<double>();
    comp.variance_b = row["variance_b"].get<double>();
    comp.median_centered = {row["levene_median"]["w"].get<double>(),
                            row["levene_median"]["df1"].get<double>(),
                            row["levene_median"]["df2"].get<double>(),
                            row["levene_median"]["p"].get<double>()};
    comp.mean_centered = {row["levene_mean"]["w"].get<double>(),
                          row["levene_mean"]["df1"].get<double>(),
                          row["levene_mean"]["df2"].get<double>(),
                          row["levene_mean"]["p"].get<double>()};
    rep.comparisons.push_back(std::move(comp));
  }
  for (const auto& t : j["temperatures"]) rep.temperatures.push_back(t.get<double>());
  write_file_atomic(out / "report.md", render_report_markdown(rep));
  write_file_atomic(out / "report.json", render_report_json(rep));
}

}  // namespace refprime
