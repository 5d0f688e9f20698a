// covdl command-line driver: simulate | learn | eval | run-all.
// Exit codes: 0 ok, 1 runtime failure, 2 configuration error, 3 optimizer did
// not converge (artifacts are still written).

#include "covdl/covdl.h"
#include "experiment_config.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using covdl_cli::ConfigError;
using covdl_cli::ExperimentConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNoConvergence = 3;

struct RuntimeFailure : std::runtime_error {
  covdl_status status;
  RuntimeFailure(covdl_status s, const std::string& what) : std::runtime_error(what), status(s) {}
};

void check(covdl_status s, const std::string& what) {
  if (s == COVDL_OK) return;
  throw RuntimeFailure(s, what + ": " + covdl_status_name(s) + " (" + covdl_last_error() + ")");
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Matrix = std::unique_ptr<covdl_matrix, Deleter<covdl_matrix, covdl_matrix_free>>;
using Truth = std::unique_ptr<covdl_truth, Deleter<covdl_truth, covdl_truth_free>>;
using Dataset = std::unique_ptr<covdl_dataset, Deleter<covdl_dataset, covdl_dataset_free>>;
using Result = std::unique_ptr<covdl_result, Deleter<covdl_result, covdl_result_free>>;
using Report = std::unique_ptr<covdl_report, Deleter<covdl_report, covdl_report_free>>;

std::string fetch_text(covdl_status (*fn)(const covdl_report*, char*, size_t, size_t*),
                       const covdl_report* r) {
  size_t needed = 0;
  check(fn(r, nullptr, 0, &needed), "report size");
  std::string buf(needed, '\0');
  check(fn(r, buf.data(), buf.size(), &needed), "report text");
  buf.resize(needed - 1);
  return buf;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
  if (!out) throw RuntimeFailure(COVDL_E_IO, "cannot write " + p.string());
}

void save(const covdl_matrix* m, const fs::path& p) {
  check(covdl_matrix_save(m, p.string().c_str()), "writing " + p.string());
}

Matrix load(const fs::path& p) {
  covdl_matrix* m = nullptr;
  check(covdl_matrix_load(p.string().c_str(), &m), "reading " + p.string());
  return Matrix(m);
}

void prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw ConfigError("output directory cannot be created: " + dir.string());
  const fs::path probe = dir / ".covdl_write_probe";
  {
    std::ofstream t(probe);
    if (!t) throw ConfigError("output directory is not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

void run_simulate(const ExperimentConfig& cfg) {
  if (!cfg.scenario) throw ConfigError("simulate needs a synthetic 'scenario' in the config");
  const fs::path out = cfg.output_dir;
  const covdl_scenario sc = cfg.resolved_scenario();

  covdl_truth* raw = nullptr;
  check(covdl_simulate(&sc, &raw), "simulate");
  Truth truth(raw);

  covdl_matrix* m = nullptr;
  check(covdl_truth_recording(truth.get(), &m), "recording");
  save(Matrix(m).get(), out / "recording.cvdl");
  check(covdl_truth_mixing(truth.get(), &m), "mixing");
  save(Matrix(m).get(), out / "a_true.cvdl");
  check(covdl_truth_powers(truth.get(), &m), "powers");
  save(Matrix(m).get(), out / "powers_true.cvdl");

  std::string sets = "segment,active_sources\n";
  const int64_t segments = covdl_truth_segment_count(truth.get());
  std::vector<int64_t> idx(static_cast<size_t>(sc.sources));
  for (int64_t s = 0; s < segments; ++s) {
    size_t count = 0;
    check(covdl_truth_active_set(truth.get(), s, idx.data(), idx.size(), &count), "active set");
    sets += std::to_string(s) + ',';
    for (size_t i = 0; i < count; ++i) sets += (i ? " " : "") + std::to_string(idx[i]);
    sets += '\n';
  }
  write_file(out / "active_sets.csv", sets);

  std::string meta;
  meta += "channels = " + std::to_string(sc.channels) + "\n";
  meta += "sources = " + std::to_string(sc.sources) + "\n";
  meta += "active = " + std::to_string(sc.active) + "\n";
  char line[128];
  std::snprintf(line, sizeof line, "sample_rate = %.17g\n", sc.sample_rate);
  meta += line;
  std::snprintf(line, sizeof line, "duration_seconds = %.17g\n", sc.duration_seconds);
  meta += line;
  std::snprintf(line, sizeof line, "segment_seconds = %.17g\n", sc.segment_seconds);
  meta += line;
  meta += "power_segments = " + std::to_string(segments) + "\n";
  meta += "seed = " + std::to_string(sc.seed) + "\n";
  meta += "coherence_cap_met = " + std::to_string(covdl_truth_coherence_cap_met(truth.get())) + "\n";
  write_file(out / "metadata.txt", meta);
  std::cout << "simulate: wrote " << segments << " power segments to " << out.string() << "\n";
}

// Returns false when the optimizer did not converge.
bool run_learn(const ExperimentConfig& cfg) {
  const fs::path out = cfg.output_dir;
  const fs::path input = cfg.external ? fs::path(cfg.external->recording) : out / "recording.cvdl";
  if (!fs::exists(input))
    throw ConfigError("recording not found: " + input.string() + " (run simulate first)");
  Matrix rec = load(input);

  const int64_t channels = covdl_matrix_rows(rec.get());
  const covdl_learn_options opts = cfg.resolved_learn();
  if (opts.mode == COVDL_MODE_COVDL2 && opts.sources >= channels * (channels + 1) / 2)
    throw ConfigError("mode covdl2 needs N < M(M+1)/2; the lifted dictionary is overcomplete, use covdl1");

  covdl_dataset* ds = nullptr;
  check(covdl_lift(rec.get(), cfg.sample_rate(), &cfg.segmentation, &ds), "lift");
  Dataset dataset(ds);
  rec.reset();

  covdl_result* raw = nullptr;
  check(covdl_learn(dataset.get(), &opts, &raw), "learn");
  Result result(raw);

  covdl_matrix* m = nullptr;
  check(covdl_result_mixing(result.get(), &m), "a_hat");
  save(Matrix(m).get(), out / "a_hat.cvdl");
  if (opts.estimate_powers) {
    check(covdl_result_powers(result.get(), &m), "powers");
    save(Matrix(m).get(), out / "powers_hat.cvdl");
  }

  std::vector<double> trace(covdl_result_trace_length(result.get()));
  if (!trace.empty()) check(covdl_result_trace(result.get(), trace.data(), trace.size()), "trace");
  std::string csv = "iteration,objective\n";
  char line[64];
  for (size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.17g\n", i, trace[i]);
    csv += line;
  }
  write_file(out / "objective_trace.csv", csv);

  size_t needed = 0;
  check(covdl_result_diagnostics(result.get(), nullptr, 0, &needed), "diagnostics");
  std::string diag(needed, '\0');
  check(covdl_result_diagnostics(result.get(), diag.data(), diag.size(), &needed), "diagnostics");
  diag.resize(needed - 1);
  write_file(out / "diagnostics.txt", diag);

  for (size_t i = 0; i < covdl_result_warning_count(result.get()); ++i)
    std::cerr << "warning: " << covdl_result_warning(result.get(), i) << "\n";
  const bool converged = covdl_result_converged(result.get()) != 0;
  std::cout << "learn: mode "
            << (covdl_result_mode(result.get()) == COVDL_MODE_COVDL1 ? "covdl1" : "covdl2")
            << (converged ? ", converged" : ", NOT converged") << "\n";
  return converged;
}

void run_eval(const ExperimentConfig& cfg) {
  const fs::path out = cfg.output_dir;
  fs::path truth_path = out / "a_true.cvdl";
  if (cfg.external) {
    if (cfg.external->a_true.empty())
      throw ConfigError("eval needs external.a_true for external data");
    truth_path = cfg.external->a_true;
  }
  const fs::path est_path = out / "a_hat.cvdl";
  for (const auto& p : {truth_path, est_path})
    if (!fs::exists(p)) throw ConfigError("missing artifact: " + p.string());
  Matrix a_true = load(truth_path);
  Matrix a_est = load(est_path);
  if (covdl_matrix_rows(a_true.get()) != covdl_matrix_rows(a_est.get()))
    throw ConfigError("a_true and a_hat have different channel counts");

  covdl_report* raw = nullptr;
  check(covdl_evaluate(a_true.get(), a_est.get(), cfg.threshold, &raw), "evaluate");
  Report rep(raw);
  write_file(out / "report.txt", fetch_text(covdl_report_text, rep.get()));
  write_file(out / "correlations.csv", fetch_text(covdl_report_csv, rep.get()));
  std::cout << "eval: recovered " << covdl_report_recovered(rep.get()) << ", ratio "
            << covdl_report_ratio(rep.get()) << "\n";
}

struct Overrides {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int32_t> threads;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required();
  cmd->add_option("--seed", o.seed, "Seed override");
  cmd->add_option("--out", o.out, "Output directory override");
  cmd->add_option("--threads", o.threads, "Worker thread cap (0 = hardware)");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig cfg = covdl_cli::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();
  check(covdl_set_max_threads(cfg.threads), "threads");
  prepare_output(cfg.output_dir);
  write_file(fs::path(cfg.output_dir) / "config.resolved.json", covdl_cli::serialize_config(cfg));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Overcomplete mixing matrix identification from segment covariances"};
  app.require_subcommand(1);
  Overrides o;
  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic recording and ground truth");
  CLI::App* lrn = app.add_subcommand("learn", "Estimate the mixing matrix from a recording");
  CLI::App* evl = app.add_subcommand("eval", "Score an estimate against the reference");
  CLI::App* all = app.add_subcommand("run-all", "simulate, learn and eval in sequence");
  for (CLI::App* c : {sim, lrn, evl, all}) add_common(c, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const ExperimentConfig cfg = resolve(o);
    if (sim->parsed()) {
      run_simulate(cfg);
      return kExitOk;
    }
    if (lrn->parsed()) return run_learn(cfg) ? kExitOk : kExitNoConvergence;
    if (evl->parsed()) {
      run_eval(cfg);
      return kExitOk;
    }
    if (cfg.scenario) run_simulate(cfg);
    const bool converged = run_learn(cfg);
    if (cfg.scenario || !cfg.external->a_true.empty()) run_eval(cfg);
    return converged ? kExitOk : kExitNoConvergence;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const RuntimeFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.status == COVDL_E_INVALID_ARGUMENT) return kExitConfig;
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
