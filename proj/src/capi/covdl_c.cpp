#include "covdl/covdl.h"

#include "cov_dl.hpp"
#include "errors.hpp"
#include "evalmatch.hpp"
#include "matrix_io.hpp"
#include "parallel.hpp"
#include "simgen.hpp"

#include <cstring>
#include <new>
#include <sstream>
#include <string>

struct covdl_matrix {
  Eigen::MatrixXd m;
};
struct covdl_truth {
  covdl::GroundTruth gt;
};
struct covdl_dataset {
  covdl::CovarianceDataset ds;
};
struct covdl_result {
  covdl::LearnOutcome outcome;
};
struct covdl_report {
  covdl::RecoveryReport rep;
  std::string text;
  std::string csv;
};

namespace {

thread_local std::string g_last_error;

covdl_status from_code(covdl::ErrorCode code) {
  switch (code) {
    case covdl::ErrorCode::invalid_argument: return COVDL_E_INVALID_ARGUMENT;
    case covdl::ErrorCode::dimension: return COVDL_E_DIMENSION;
    case covdl::ErrorCode::empty_plan: return COVDL_E_EMPTY_PLAN;
    case covdl::ErrorCode::rank_deficient: return COVDL_E_RANK_DEFICIENT;
    case covdl::ErrorCode::numerical: return COVDL_E_NUMERICAL;
    case covdl::ErrorCode::io: return COVDL_E_IO;
  }
  return COVDL_E_INTERNAL;
}

covdl_status set_error(covdl_status status, std::string msg) {
  g_last_error = std::move(msg);
  return status;
}

template <class F>
covdl_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return COVDL_OK;
  } catch (const covdl::Error& e) {
    return set_error(from_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(COVDL_E_NO_MEMORY, "out of memory");
  } catch (const std::exception& e) {
    return set_error(COVDL_E_INTERNAL, e.what());
  } catch (...) {
    return set_error(COVDL_E_INTERNAL, "unknown exception");
  }
}

#define COVDL_REQUIRE(cond, what) \
  if (!(cond)) return set_error(COVDL_E_INVALID_ARGUMENT, what)

covdl_status copy_text(const std::string& s, char* buffer, size_t capacity, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buffer) return COVDL_OK;
  if (capacity < s.size() + 1)
    return set_error(COVDL_E_BUFFER_TOO_SMALL, "buffer too small for text output");
  std::memcpy(buffer, s.c_str(), s.size() + 1);
  return COVDL_OK;
}

covdl_status wrap(const Eigen::MatrixXd& m, covdl_matrix** out) {
  return guarded([&] { *out = new covdl_matrix{m}; });
}

covdl::ScenarioConfig to_core(const covdl_scenario& s) {
  covdl::ScenarioConfig c;
  c.channels = s.channels;
  c.sources = s.sources;
  c.active = s.active;
  c.duration_seconds = s.duration_seconds;
  c.sample_rate = s.sample_rate;
  c.segment_seconds = s.segment_seconds;
  c.power_low = s.power_low;
  c.power_high = s.power_high;
  c.ar_order = s.ar_order;
  c.coherence_cap = s.coherence_cap;
  c.noise_level = s.noise_level;
  c.seed = s.seed;
  return c;
}

covdl::VechWeighting weighting(int32_t frobenius) {
  return frobenius ? covdl::VechWeighting::frobenius : covdl::VechWeighting::plain;
}

}  // namespace

extern "C" {

const char* covdl_last_error(void) { return g_last_error.c_str(); }

const char* covdl_status_name(covdl_status status) {
  switch (status) {
    case COVDL_OK: return "ok";
    case COVDL_E_INVALID_ARGUMENT: return "invalid argument";
    case COVDL_E_DIMENSION: return "dimension mismatch";
    case COVDL_E_EMPTY_PLAN: return "empty segmentation plan";
    case COVDL_E_RANK_DEFICIENT: return "rank deficient";
    case COVDL_E_NUMERICAL: return "numerical failure";
    case COVDL_E_IO: return "i/o error";
    case COVDL_E_BUFFER_TOO_SMALL: return "buffer too small";
    case COVDL_E_NO_MEMORY: return "out of memory";
    case COVDL_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* covdl_version(void) { return "0.1.0"; }

covdl_status covdl_set_max_threads(int32_t threads) {
  COVDL_REQUIRE(threads >= 0, "thread count must be >= 0");
  covdl::set_max_threads(static_cast<std::size_t>(threads));
  return COVDL_OK;
}

int32_t covdl_max_threads(void) { return static_cast<int32_t>(covdl::max_threads()); }

covdl_mode covdl_select_mode(int64_t channels, int64_t sources) {
  if (channels <= 0 || sources <= 0) return COVDL_MODE_AUTO;
  return covdl::select_mode(channels, sources) == covdl::Mode::covdl1 ? COVDL_MODE_COVDL1
                                                                      : COVDL_MODE_COVDL2;
}

covdl_status covdl_matrix_create(int64_t rows, int64_t cols, const double* row_major,
                                 covdl_matrix** out) {
  COVDL_REQUIRE(out, "out is NULL");
  COVDL_REQUIRE(rows >= 0 && cols >= 0, "negative matrix size");
  return guarded([&] {
    auto* h = new covdl_matrix{Eigen::MatrixXd::Zero(rows, cols)};
    if (row_major)
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) h->m(r, c) = row_major[r * cols + c];
    *out = h;
  });
}

void covdl_matrix_free(covdl_matrix* m) { delete m; }

int64_t covdl_matrix_rows(const covdl_matrix* m) { return m ? m->m.rows() : -1; }

int64_t covdl_matrix_cols(const covdl_matrix* m) { return m ? m->m.cols() : -1; }

covdl_status covdl_matrix_get(const covdl_matrix* m, int64_t row, int64_t col, double* value) {
  COVDL_REQUIRE(m && value, "NULL argument");
  if (row < 0 || col < 0 || row >= m->m.rows() || col >= m->m.cols())
    return set_error(COVDL_E_DIMENSION, "matrix index out of range");
  *value = m->m(row, col);
  return COVDL_OK;
}

covdl_status covdl_matrix_copy(const covdl_matrix* m, double* row_major, size_t capacity) {
  COVDL_REQUIRE(m && row_major, "NULL argument");
  const auto rows = m->m.rows(), cols = m->m.cols();
  if (capacity < static_cast<size_t>(rows * cols))
    return set_error(COVDL_E_BUFFER_TOO_SMALL, "buffer smaller than rows * cols");
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) row_major[r * cols + c] = m->m(r, c);
  return COVDL_OK;
}

covdl_status covdl_matrix_load(const char* path, covdl_matrix** out) {
  COVDL_REQUIRE(path && out, "NULL argument");
  return guarded([&] { *out = new covdl_matrix{covdl::load_matrix(path)}; });
}

covdl_status covdl_matrix_save(const covdl_matrix* m, const char* path) {
  COVDL_REQUIRE(m && path, "NULL argument");
  return guarded([&] { covdl::save_matrix(path, m->m); });
}

covdl_status covdl_scenario_preset(int32_t scenario, covdl_scenario* out) {
  COVDL_REQUIRE(out, "out is NULL");
  return guarded([&] {
    const auto c = covdl::ScenarioConfig::preset(scenario);
    *out = covdl_scenario{c.channels,    c.sources,          c.active,     c.duration_seconds,
                          c.sample_rate, c.segment_seconds,  c.power_low,  c.power_high,
                          c.ar_order,    c.coherence_cap,    c.noise_level, c.seed};
  });
}

covdl_status covdl_simulate(const covdl_scenario* scenario, covdl_truth** out) {
  COVDL_REQUIRE(scenario && out, "NULL argument");
  return guarded([&] { *out = new covdl_truth{covdl::simulate(to_core(*scenario))}; });
}

void covdl_truth_free(covdl_truth* t) { delete t; }

covdl_status covdl_truth_recording(const covdl_truth* t, covdl_matrix** out) {
  COVDL_REQUIRE(t && out, "NULL argument");
  return wrap(t->gt.recording.data, out);
}

covdl_status covdl_truth_mixing(const covdl_truth* t, covdl_matrix** out) {
  COVDL_REQUIRE(t && out, "NULL argument");
  return wrap(t->gt.a_true.columns(), out);
}

covdl_status covdl_truth_powers(const covdl_truth* t, covdl_matrix** out) {
  COVDL_REQUIRE(t && out, "NULL argument");
  return wrap(t->gt.segment_powers, out);
}

int64_t covdl_truth_segment_count(const covdl_truth* t) {
  return t ? static_cast<int64_t>(t->gt.active_sets.size()) : -1;
}

covdl_status covdl_truth_active_set(const covdl_truth* t, int64_t s, int64_t* indices,
                                    size_t capacity, size_t* count) {
  COVDL_REQUIRE(t, "NULL argument");
  if (s < 0 || s >= static_cast<int64_t>(t->gt.active_sets.size()))
    return set_error(COVDL_E_DIMENSION, "segment index out of range");
  const auto& set = t->gt.active_sets[static_cast<size_t>(s)];
  if (count) *count = set.size();
  if (!indices) return COVDL_OK;
  if (capacity < set.size()) return set_error(COVDL_E_BUFFER_TOO_SMALL, "index buffer too small");
  for (size_t i = 0; i < set.size(); ++i) indices[i] = set[i];
  return COVDL_OK;
}

int32_t covdl_truth_coherence_cap_met(const covdl_truth* t) {
  return t && t->gt.coherence_cap_met ? 1 : 0;
}

void covdl_segmentation_default(covdl_segmentation* out) {
  if (!out) return;
  const covdl::SegmentationPlan p;
  *out = covdl_segmentation{p.segment_seconds, p.overlap_ratio, p.center ? 1 : 0,
                            p.weighting == covdl::VechWeighting::frobenius ? 1 : 0};
}

covdl_status covdl_lift(const covdl_matrix* recording, double sample_rate,
                        const covdl_segmentation* plan, covdl_dataset** out) {
  COVDL_REQUIRE(recording && plan && out, "NULL argument");
  return guarded([&] {
    covdl::ChannelRecording rec{recording->m, sample_rate};
    covdl::SegmentationPlan p;
    p.segment_seconds = plan->segment_seconds;
    p.overlap_ratio = plan->overlap_ratio;
    p.center = plan->center != 0;
    p.weighting = weighting(plan->frobenius);
    *out = new covdl_dataset{covdl::lift(rec, p)};
  });
}

covdl_status covdl_dataset_from_lifted(const covdl_matrix* lifted, int32_t frobenius,
                                       covdl_dataset** out) {
  COVDL_REQUIRE(lifted && out, "NULL argument");
  return guarded(
      [&] { *out = new covdl_dataset{covdl::dataset_from_lifted(lifted->m, weighting(frobenius))}; });
}

void covdl_dataset_free(covdl_dataset* d) { delete d; }

int64_t covdl_dataset_channels(const covdl_dataset* d) { return d ? d->ds.channels : -1; }

int64_t covdl_dataset_segment_count(const covdl_dataset* d) {
  return d ? d->ds.segment_count() : -1;
}

covdl_status covdl_dataset_lifted(const covdl_dataset* d, covdl_matrix** out) {
  COVDL_REQUIRE(d && out, "NULL argument");
  return wrap(d->ds.lifted, out);
}

void covdl_learn_options_default(covdl_learn_options* out) {
  if (!out) return;
  const covdl::DictLearnConfig dc;
  const covdl::Covdl2Config oc;
  *out = covdl_learn_options{};
  out->sources = 0;
  out->mode = COVDL_MODE_AUTO;
  out->sparsity_k = dc.sparsity_k;
  out->dict_max_iters = dc.max_iters;
  out->dict_tol = dc.tol;
  out->update_rule = dc.update_rule == covdl::UpdateRule::ksvd ? COVDL_UPDATE_KSVD : COVDL_UPDATE_MOD;
  out->nonneg = dc.nonneg ? 1 : 0;
  out->dict_seed = dc.seed;
  out->dict_restarts = covdl::SearchConfig{}.restarts;
  out->rank1_atoms = 1;
  out->restarts = oc.restarts;
  out->opt_max_iters = oc.max_iters;
  out->grad_tol = oc.grad_tol;
  out->use_lbfgs = oc.use_lbfgs ? 1 : 0;
  out->memory = oc.memory;
  out->opt_seed = oc.seed;
  out->estimate_powers = 1;
}

covdl_status covdl_learn(const covdl_dataset* d, const covdl_learn_options* o,
                         covdl_result** out) {
  COVDL_REQUIRE(d && o && out, "NULL argument");
  COVDL_REQUIRE(o->mode >= COVDL_MODE_AUTO && o->mode <= COVDL_MODE_COVDL2, "unknown mode");
  COVDL_REQUIRE(o->update_rule == COVDL_UPDATE_MOD || o->update_rule == COVDL_UPDATE_KSVD,
                "unknown update rule");
  COVDL_REQUIRE(o->dict_restarts >= 0, "dict_restarts must be >= 0");
  return guarded([&] {
    covdl::LearnOptions lo;
    lo.sources = o->sources;
    if (o->mode == COVDL_MODE_COVDL1) lo.mode = covdl::Mode::covdl1;
    if (o->mode == COVDL_MODE_COVDL2) lo.mode = covdl::Mode::covdl2;
    lo.dictionary.sparsity_k = o->sparsity_k;
    lo.dictionary.max_iters = o->dict_max_iters;
    lo.dictionary.tol = o->dict_tol;
    lo.dictionary.update_rule =
        o->update_rule == COVDL_UPDATE_KSVD ? covdl::UpdateRule::ksvd : covdl::UpdateRule::mod;
    lo.dictionary.nonneg = o->nonneg != 0;
    lo.dictionary.seed = o->dict_seed;
    if (o->dict_restarts == 0) {
      lo.dictionary_search.reset();
    } else {
      lo.dictionary_search->restarts = o->dict_restarts;
    }
    lo.rank1_atoms = o->rank1_atoms != 0;
    lo.optimizer.restarts = o->restarts;
    lo.optimizer.max_iters = o->opt_max_iters;
    lo.optimizer.grad_tol = o->grad_tol;
    lo.optimizer.use_lbfgs = o->use_lbfgs != 0;
    lo.optimizer.memory = o->memory;
    lo.optimizer.seed = o->opt_seed;
    lo.estimate_segment_powers = o->estimate_powers != 0;
    *out = new covdl_result{covdl::learn(d->ds, lo)};
  });
}

void covdl_result_free(covdl_result* r) { delete r; }

covdl_mode covdl_result_mode(const covdl_result* r) {
  if (!r) return COVDL_MODE_AUTO;
  return r->outcome.result.mode == covdl::Mode::covdl1 ? COVDL_MODE_COVDL1 : COVDL_MODE_COVDL2;
}

int32_t covdl_result_converged(const covdl_result* r) {
  return r && r->outcome.result.converged ? 1 : 0;
}

covdl_status covdl_result_mixing(const covdl_result* r, covdl_matrix** out) {
  COVDL_REQUIRE(r && out, "NULL argument");
  return wrap(r->outcome.result.a_hat, out);
}

covdl_status covdl_result_powers(const covdl_result* r, covdl_matrix** out) {
  COVDL_REQUIRE(r && out, "NULL argument");
  return wrap(r->outcome.powers.powers, out);
}

size_t covdl_result_trace_length(const covdl_result* r) {
  return r ? r->outcome.result.objective_trace.size() : 0;
}

covdl_status covdl_result_trace(const covdl_result* r, double* values, size_t capacity) {
  COVDL_REQUIRE(r && values, "NULL argument");
  const auto& tr = r->outcome.result.objective_trace;
  if (capacity < tr.size()) return set_error(COVDL_E_BUFFER_TOO_SMALL, "trace buffer too small");
  std::copy(tr.begin(), tr.end(), values);
  return COVDL_OK;
}

size_t covdl_result_warning_count(const covdl_result* r) {
  return r ? r->outcome.result.warnings.size() : 0;
}

const char* covdl_result_warning(const covdl_result* r, size_t i) {
  if (!r || i >= r->outcome.result.warnings.size()) return nullptr;
  return r->outcome.result.warnings[i].c_str();
}

covdl_status covdl_result_diagnostics(const covdl_result* r, char* buffer, size_t capacity,
                                      size_t* needed) {
  COVDL_REQUIRE(r, "NULL argument");
  const auto& res = r->outcome.result;
  std::ostringstream os;
  os.precision(17);
  os << "mode = " << covdl::mode_name(res.mode) << '\n';
  os << "converged = " << (res.converged ? 1 : 0) << '\n';
  os << "channels = " << res.a_hat.rows() << '\n';
  os << "sources = " << res.a_hat.cols() << '\n';
  os << "trace_length = " << res.objective_trace.size() << '\n';
  if (!res.objective_trace.empty()) os << "final_objective = " << res.objective_trace.back() << '\n';
  if (res.mode == covdl::Mode::covdl1) {
    os << "degenerate_columns = " << res.degenerate_columns.size() << '\n';
    os << "tied_columns = " << res.tied_columns.size() << '\n';
    if (res.rank1_residuals.size() > 0)
      os << "max_rank1_residual = " << res.rank1_residuals.maxCoeff() << '\n';
  } else {
    os << "projector_mismatch = " << res.projector_mismatch << '\n';
    os << "stationarity = " << res.stationarity << '\n';
    os << "explained_energy = " << res.explained_energy << '\n';
    os << "best_restart = " << res.best_restart << '\n';
    for (size_t i = 0; i < res.restart_values.size(); ++i)
      os << "restart." << i << " = " << res.restart_values[i] << '\n';
  }
  const auto& resid = r->outcome.powers.residuals;
  if (resid.size() > 0) os << "mean_power_residual = " << resid.mean() << '\n';
  for (size_t i = 0; i < res.warnings.size(); ++i)
    os << "warning." << i << " = " << res.warnings[i] << '\n';
  return copy_text(os.str(), buffer, capacity, needed);
}

covdl_status covdl_evaluate(const covdl_matrix* a_true, const covdl_matrix* a_est,
                            double threshold, covdl_report** out) {
  COVDL_REQUIRE(a_true && a_est && out, "NULL argument");
  return guarded([&] {
    auto rep = covdl::report(a_true->m, a_est->m, threshold);
    auto* h = new covdl_report{std::move(rep), {}, {}};
    h->text = h->rep.to_text();
    h->csv = h->rep.to_csv();
    *out = h;
  });
}

void covdl_report_free(covdl_report* r) { delete r; }

double covdl_report_ratio(const covdl_report* r) { return r ? r->rep.recovery_ratio : 0.0; }

int64_t covdl_report_recovered(const covdl_report* r) {
  return r ? static_cast<int64_t>(r->rep.recovered) : -1;
}

size_t covdl_report_pair_count(const covdl_report* r) {
  return r ? r->rep.matched_pairs.size() : 0;
}

covdl_status covdl_report_pair(const covdl_report* r, size_t i, int64_t* true_index,
                               int64_t* est_index, double* correlation) {
  COVDL_REQUIRE(r, "NULL argument");
  if (i >= r->rep.matched_pairs.size()) return set_error(COVDL_E_DIMENSION, "pair index out of range");
  const auto& p = r->rep.matched_pairs[i];
  if (true_index) *true_index = p.true_index;
  if (est_index) *est_index = p.est_index;
  if (correlation) *correlation = p.correlation;
  return COVDL_OK;
}

covdl_status covdl_report_text(const covdl_report* r, char* buffer, size_t capacity,
                               size_t* needed) {
  COVDL_REQUIRE(r, "NULL argument");
  return copy_text(r->text, buffer, capacity, needed);
}

covdl_status covdl_report_csv(const covdl_report* r, char* buffer, size_t capacity,
                              size_t* needed) {
  COVDL_REQUIRE(r, "NULL argument");
  return copy_text(r->csv, buffer, capacity, needed);
}

}  // extern "C"
