#include "experiment_config.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace covdl_cli {
namespace {

using nlohmann::json;

int preset_index(const std::string& name) {
  if (name == "scenario1") return 1;
  if (name == "scenario2") return 2;
  if (name == "scenario3") return 3;
  throw ConfigError("unknown scenario preset '" + name + "' (expected scenario1|scenario2|scenario3)");
}

const char* mode_text(int32_t mode) {
  switch (mode) {
    case COVDL_MODE_COVDL1: return "covdl1";
    case COVDL_MODE_COVDL2: return "covdl2";
    default: return "auto";
  }
}

int32_t mode_value(const std::string& s) {
  if (s == "auto") return COVDL_MODE_AUTO;
  if (s == "covdl1") return COVDL_MODE_COVDL1;
  if (s == "covdl2") return COVDL_MODE_COVDL2;
  throw ConfigError("unknown mode '" + s + "' (expected auto|covdl1|covdl2)");
}

int32_t rule_value(const std::string& s) {
  if (s == "mod") return COVDL_UPDATE_MOD;
  if (s == "ksvd") return COVDL_UPDATE_KSVD;
  throw ConfigError("unknown update_rule '" + s + "' (expected mod|ksvd)");
}

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const json& obj, const char* key, T& dst) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    dst = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

void read_flag(const json& obj, const char* key, int32_t& dst) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_boolean()) throw ConfigError(std::string("'") + key + "' must be true or false");
  dst = it->get<bool>() ? 1 : 0;
}

const json& object_at(const json& obj, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_object()) throw ConfigError(std::string("'") + key + "' must be an object");
  return v;
}

// Preset-specific analysis: segments aligned with the 2 s power schedule,
// sparsity equal to the number of active sources, one dictionary start.
void apply_preset_analysis(ExperimentConfig& cfg) {
  const covdl_scenario& s = cfg.scenario->params;
  cfg.segmentation.segment_seconds = s.segment_seconds;
  cfg.segmentation.overlap_ratio = 0.0;
  const int64_t dim = s.channels * (s.channels + 1) / 2;
  cfg.learn.sparsity_k = std::max<int64_t>(1, std::min<int64_t>(s.active, dim - 1));
  cfg.learn.dict_restarts = 1;
}

void parse_scenario(const json& v, ExperimentConfig& cfg) {
  SyntheticScenario sc;
  if (v.is_string()) {
    sc.preset = v.get<std::string>();
    covdl_scenario_preset(preset_index(sc.preset), &sc.params);
    cfg.scenario = sc;
    apply_preset_analysis(cfg);
    return;
  }
  if (!v.is_object()) throw ConfigError("'scenario' must be a preset name or an object");
  reject_unknown(v,
                 {"preset", "channels", "sources", "active", "duration_seconds", "sample_rate",
                  "segment_seconds", "power_low", "power_high", "ar_order", "coherence_cap",
                  "noise_level"},
                 "scenario");
  read(v, "preset", sc.preset);
  if (!sc.preset.empty()) {
    covdl_scenario_preset(preset_index(sc.preset), &sc.params);
  } else {
    covdl_scenario_preset(1, &sc.params);
  }
  auto& p = sc.params;
  read(v, "channels", p.channels);
  read(v, "sources", p.sources);
  read(v, "active", p.active);
  read(v, "duration_seconds", p.duration_seconds);
  read(v, "sample_rate", p.sample_rate);
  read(v, "segment_seconds", p.segment_seconds);
  read(v, "power_low", p.power_low);
  read(v, "power_high", p.power_high);
  read(v, "ar_order", p.ar_order);
  read(v, "coherence_cap", p.coherence_cap);
  read(v, "noise_level", p.noise_level);
  cfg.scenario = sc;
  apply_preset_analysis(cfg);
}

void parse_analysis(const json& a, ExperimentConfig& cfg) {
  reject_unknown(a, {"segmentation", "mode", "dictionary", "optimizer", "estimate_powers"}, "analysis");
  if (a.contains("segmentation")) {
    const json& s = object_at(a, "segmentation");
    reject_unknown(s, {"segment_seconds", "overlap_ratio", "center", "frobenius"}, "segmentation");
    read(s, "segment_seconds", cfg.segmentation.segment_seconds);
    read(s, "overlap_ratio", cfg.segmentation.overlap_ratio);
    read_flag(s, "center", cfg.segmentation.center);
    read_flag(s, "frobenius", cfg.segmentation.frobenius);
  }
  if (a.contains("mode")) {
    std::string m;
    read(a, "mode", m);
    cfg.learn.mode = mode_value(m);
  }
  if (a.contains("dictionary")) {
    const json& d = object_at(a, "dictionary");
    reject_unknown(d, {"sparsity_k", "max_iters", "tol", "update_rule", "nonneg", "restarts", "rank1_atoms"},
                   "dictionary");
    read(d, "sparsity_k", cfg.learn.sparsity_k);
    read(d, "max_iters", cfg.learn.dict_max_iters);
    read(d, "tol", cfg.learn.dict_tol);
    if (d.contains("update_rule")) {
      std::string r;
      read(d, "update_rule", r);
      cfg.learn.update_rule = rule_value(r);
    }
    read_flag(d, "nonneg", cfg.learn.nonneg);
    read(d, "restarts", cfg.learn.dict_restarts);
    read_flag(d, "rank1_atoms", cfg.learn.rank1_atoms);
  }
  if (a.contains("optimizer")) {
    const json& o = object_at(a, "optimizer");
    reject_unknown(o, {"restarts", "max_iters", "grad_tol", "lbfgs", "memory"}, "optimizer");
    read(o, "restarts", cfg.learn.restarts);
    read(o, "max_iters", cfg.learn.opt_max_iters);
    read(o, "grad_tol", cfg.learn.grad_tol);
    read_flag(o, "lbfgs", cfg.learn.use_lbfgs);
    read(o, "memory", cfg.learn.memory);
  }
  read_flag(a, "estimate_powers", cfg.learn.estimate_powers);
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  covdl_segmentation_default(&segmentation);
  covdl_learn_options_default(&learn);
}

int64_t ExperimentConfig::sources() const {
  if (scenario) return scenario->params.sources;
  if (external) return external->sources;
  return 0;
}

double ExperimentConfig::sample_rate() const {
  if (scenario) return scenario->params.sample_rate;
  if (external) return external->sample_rate;
  return 0.0;
}

void ExperimentConfig::validate(bool check_paths) const {
  if (scenario.has_value() == external.has_value())
    throw ConfigError("exactly one of 'scenario' or 'external' must be given");
  if (external) {
    if (external->recording.empty()) throw ConfigError("external.recording is required");
    if (!(external->sample_rate > 0.0)) throw ConfigError("external.sample_rate must be positive");
    if (external->sources < 1) throw ConfigError("external.sources must be >= 1");
    if (check_paths) {
      if (!std::filesystem::exists(external->recording))
        throw ConfigError("external.recording not found: " + external->recording);
      if (!external->a_true.empty() && !std::filesystem::exists(external->a_true))
        throw ConfigError("external.a_true not found: " + external->a_true);
    }
  }
  if (scenario) {
    const auto& p = scenario->params;
    if (p.channels < 2 || p.sources < 1) throw ConfigError("scenario needs channels >= 2 and sources >= 1");
    if (p.active < 1 || p.active > p.sources) throw ConfigError("scenario.active must lie in [1, sources]");
    const int64_t dim = p.channels * (p.channels + 1) / 2;
    if (learn.mode == COVDL_MODE_COVDL2 && p.sources >= dim)
      throw ConfigError("mode covdl2 needs N < M(M+1)/2 (here N = " + std::to_string(p.sources) +
                        ", M(M+1)/2 = " + std::to_string(dim) +
                        "); the lifted dictionary is overcomplete, use covdl1");
  }
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("eval.threshold must lie in (0, 1]");
  if (!(segmentation.segment_seconds > 0.0)) throw ConfigError("segment_seconds must be positive");
  if (!(segmentation.overlap_ratio >= 0.0 && segmentation.overlap_ratio < 1.0))
    throw ConfigError("overlap_ratio must lie in [0, 1)");
  if (learn.sparsity_k < 1) throw ConfigError("dictionary.sparsity_k must be >= 1");
  if (learn.dict_max_iters < 1 || learn.opt_max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(learn.dict_tol > 0.0) || !(learn.grad_tol > 0.0)) throw ConfigError("tolerances must be positive");
  if (learn.restarts < 1) throw ConfigError("optimizer.restarts must be >= 1");
  if (learn.dict_restarts < 0) throw ConfigError("dictionary.restarts must be >= 0");
  if (learn.memory < 0) throw ConfigError("optimizer.memory must be >= 0");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

covdl_learn_options ExperimentConfig::resolved_learn() const {
  covdl_learn_options o = learn;
  o.sources = sources();
  o.dict_seed = seed;
  o.opt_seed = seed;
  return o;
}

covdl_scenario ExperimentConfig::resolved_scenario() const {
  covdl_scenario s = scenario.value().params;
  s.seed = seed;
  return s;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  reject_unknown(root, {"scenario", "external", "analysis", "eval", "output_dir", "seed", "threads"}, "config");

  ExperimentConfig cfg;
  if (root.contains("scenario")) parse_scenario(root.at("scenario"), cfg);
  if (root.contains("external")) {
    const json& e = object_at(root, "external");
    reject_unknown(e, {"recording", "sample_rate", "sources", "a_true"}, "external");
    ExternalData ext;
    read(e, "recording", ext.recording);
    read(e, "sample_rate", ext.sample_rate);
    read(e, "sources", ext.sources);
    read(e, "a_true", ext.a_true);
    cfg.external = ext;
  }
  if (root.contains("analysis")) parse_analysis(object_at(root, "analysis"), cfg);
  if (root.contains("eval")) {
    const json& ev = object_at(root, "eval");
    reject_unknown(ev, {"threshold"}, "eval");
    read(ev, "threshold", cfg.threshold);
  }
  read(root, "output_dir", cfg.output_dir);
  read(root, "seed", cfg.seed);
  read(root, "threads", cfg.threads);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json root = json::object();
  if (cfg.scenario) {
    const auto& p = cfg.scenario->params;
    json s = {{"channels", p.channels},
              {"sources", p.sources},
              {"active", p.active},
              {"duration_seconds", p.duration_seconds},
              {"sample_rate", p.sample_rate},
              {"segment_seconds", p.segment_seconds},
              {"power_low", p.power_low},
              {"power_high", p.power_high},
              {"ar_order", p.ar_order},
              {"coherence_cap", p.coherence_cap},
              {"noise_level", p.noise_level}};
    if (!cfg.scenario->preset.empty()) s["preset"] = cfg.scenario->preset;
    root["scenario"] = s;
  }
  if (cfg.external) {
    const auto& e = *cfg.external;
    root["external"] = {{"recording", e.recording},
                        {"sample_rate", e.sample_rate},
                        {"sources", e.sources},
                        {"a_true", e.a_true}};
  }
  const auto& l = cfg.learn;
  root["analysis"] = {
      {"segmentation",
       {{"segment_seconds", cfg.segmentation.segment_seconds},
        {"overlap_ratio", cfg.segmentation.overlap_ratio},
        {"center", cfg.segmentation.center != 0},
        {"frobenius", cfg.segmentation.frobenius != 0}}},
      {"mode", mode_text(l.mode)},
      {"dictionary",
       {{"sparsity_k", l.sparsity_k},
        {"max_iters", l.dict_max_iters},
        {"tol", l.dict_tol},
        {"update_rule", l.update_rule == COVDL_UPDATE_KSVD ? "ksvd" : "mod"},
        {"nonneg", l.nonneg != 0},
        {"restarts", l.dict_restarts},
        {"rank1_atoms", l.rank1_atoms != 0}}},
      {"optimizer",
       {{"restarts", l.restarts},
        {"max_iters", l.opt_max_iters},
        {"grad_tol", l.grad_tol},
        {"lbfgs", l.use_lbfgs != 0},
        {"memory", l.memory}}},
      {"estimate_powers", l.estimate_powers != 0}};
  root["eval"] = {{"threshold", cfg.threshold}};
  root["output_dir"] = cfg.output_dir;
  root["seed"] = cfg.seed;
  root["threads"] = cfg.threads;
  return root.dump(2) + "\n";
}

ExperimentConfig preset_config(const std::string& name) {
  return parse_config("{\"scenario\": \"" + name + "\"}");
}

}  // namespace covdl_cli
