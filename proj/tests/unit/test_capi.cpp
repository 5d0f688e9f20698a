#include <doctest.h>

#include "covdl/covdl.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

covdl_scenario tiny_scenario() {
  covdl_scenario s;
  REQUIRE(covdl_scenario_preset(3, &s) == COVDL_OK);
  s.channels = 4;
  s.sources = 6;
  s.active = 6;
  s.duration_seconds = 120;
  s.seed = 3;
  return s;
}

}  // namespace

TEST_CASE("matrix handles") {
  const double vals[6] = {1, 2, 3, 4, 5, 6};
  covdl_matrix* m = nullptr;
  REQUIRE(covdl_matrix_create(2, 3, vals, &m) == COVDL_OK);
  CHECK(covdl_matrix_rows(m) == 2);
  CHECK(covdl_matrix_cols(m) == 3);
  double v = 0;
  CHECK(covdl_matrix_get(m, 1, 0, &v) == COVDL_OK);
  CHECK(v == 4.0);
  CHECK(covdl_matrix_get(m, 2, 0, &v) == COVDL_E_DIMENSION);
  CHECK(std::strlen(covdl_last_error()) > 0);

  double out[6] = {};
  CHECK(covdl_matrix_copy(m, out, 5) == COVDL_E_BUFFER_TOO_SMALL);
  CHECK(covdl_matrix_copy(m, out, 6) == COVDL_OK);
  CHECK(std::memcmp(out, vals, sizeof vals) == 0);

  const fs::path dir = fs::temp_directory_path() / "covdl_capi";
  fs::create_directories(dir);
  for (const char* name : {"m.cvdl", "m.csv"}) {
    const std::string p = (dir / name).string();
    REQUIRE(covdl_matrix_save(m, p.c_str()) == COVDL_OK);
    covdl_matrix* back = nullptr;
    REQUIRE(covdl_matrix_load(p.c_str(), &back) == COVDL_OK);
    double b[6];
    covdl_matrix_copy(back, b, 6);
    CHECK(std::memcmp(b, vals, sizeof vals) == 0);
    covdl_matrix_free(back);
  }
  covdl_matrix* missing = nullptr;
  CHECK(covdl_matrix_load((dir / "nope.cvdl").string().c_str(), &missing) == COVDL_E_IO);
  CHECK(missing == nullptr);
  covdl_matrix_free(m);

  CHECK(covdl_matrix_create(2, 2, nullptr, nullptr) == COVDL_E_INVALID_ARGUMENT);
  CHECK(covdl_matrix_create(-1, 2, nullptr, &m) == COVDL_E_INVALID_ARGUMENT);
  REQUIRE(covdl_matrix_create(2, 2, nullptr, &m) == COVDL_OK);
  CHECK(covdl_matrix_get(m, 1, 1, &v) == COVDL_OK);
  CHECK(v == 0.0);
  covdl_matrix_free(m);
  covdl_matrix_free(nullptr);
}

TEST_CASE("misc entry points") {
  CHECK(std::string(covdl_version()) == "0.1.0");
  CHECK(covdl_select_mode(8, 40) == COVDL_MODE_COVDL1);
  CHECK(covdl_select_mode(32, 64) == COVDL_MODE_COVDL2);
  CHECK(covdl_set_max_threads(-1) == COVDL_E_INVALID_ARGUMENT);
  CHECK(covdl_set_max_threads(2) == COVDL_OK);
  CHECK(covdl_max_threads() == 2);
  CHECK(covdl_set_max_threads(0) == COVDL_OK);
  CHECK(std::string(covdl_status_name(COVDL_E_IO)) == "i/o error");
  covdl_scenario s;
  CHECK(covdl_scenario_preset(9, &s) == COVDL_E_INVALID_ARGUMENT);
  CHECK(covdl_scenario_preset(2, &s) == COVDL_OK);
  CHECK(s.sources == 64);
}

TEST_CASE("simulate, lift, learn and evaluate through the C API") {
  const covdl_scenario sc = tiny_scenario();
  covdl_truth* truth = nullptr;
  REQUIRE(covdl_simulate(&sc, &truth) == COVDL_OK);
  CHECK(covdl_truth_segment_count(truth) == 60);
  size_t count = 0;
  CHECK(covdl_truth_active_set(truth, 0, nullptr, 0, &count) == COVDL_OK);
  CHECK(count == 6);
  std::vector<int64_t> idx(2);
  CHECK(covdl_truth_active_set(truth, 0, idx.data(), idx.size(), &count) == COVDL_E_BUFFER_TOO_SMALL);
  CHECK(covdl_truth_active_set(truth, 60, nullptr, 0, &count) == COVDL_E_DIMENSION);

  covdl_matrix* rec = nullptr;
  covdl_matrix* a_true = nullptr;
  covdl_matrix* powers = nullptr;
  REQUIRE(covdl_truth_recording(truth, &rec) == COVDL_OK);
  REQUIRE(covdl_truth_mixing(truth, &a_true) == COVDL_OK);
  REQUIRE(covdl_truth_powers(truth, &powers) == COVDL_OK);
  CHECK(covdl_matrix_rows(rec) == 4);
  CHECK(covdl_matrix_cols(rec) == 12000);
  CHECK(covdl_matrix_cols(a_true) == 6);
  CHECK(covdl_matrix_cols(powers) == 60);

  covdl_segmentation plan;
  covdl_segmentation_default(&plan);
  CHECK(plan.segment_seconds == 2.0);
  CHECK(plan.overlap_ratio == 0.5);
  plan.overlap_ratio = 0.0;
  covdl_dataset* ds = nullptr;
  REQUIRE(covdl_lift(rec, sc.sample_rate, &plan, &ds) == COVDL_OK);
  CHECK(covdl_dataset_channels(ds) == 4);
  CHECK(covdl_dataset_segment_count(ds) == 60);

  covdl_learn_options opts;
  covdl_learn_options_default(&opts);
  opts.sources = 6;
  covdl_result* res = nullptr;
  REQUIRE(covdl_learn(ds, &opts, &res) == COVDL_OK);
  CHECK(covdl_result_mode(res) == COVDL_MODE_COVDL2);
  covdl_matrix* a_hat = nullptr;
  REQUIRE(covdl_result_mixing(res, &a_hat) == COVDL_OK);
  CHECK(covdl_matrix_rows(a_hat) == 4);
  CHECK(covdl_matrix_cols(a_hat) == 6);
  std::vector<double> trace(covdl_result_trace_length(res));
  REQUIRE(!trace.empty());
  CHECK(covdl_result_trace(res, trace.data(), trace.size()) == COVDL_OK);
  size_t needed = 0;
  CHECK(covdl_result_diagnostics(res, nullptr, 0, &needed) == COVDL_OK);
  std::string diag(needed, '\0');
  CHECK(covdl_result_diagnostics(res, diag.data(), diag.size(), &needed) == COVDL_OK);
  CHECK(diag.find("mode = covdl2") != std::string::npos);

  covdl_report* rep = nullptr;
  REQUIRE(covdl_evaluate(a_true, a_hat, 0.99, &rep) == COVDL_OK);
  const double ratio = covdl_report_ratio(rep);
  CHECK(ratio >= 0.0);
  CHECK(ratio <= 1.0);
  CHECK(covdl_report_pair_count(rep) == 6);
  int64_t t = -1, e = -1;
  double c = -1;
  CHECK(covdl_report_pair(rep, 0, &t, &e, &c) == COVDL_OK);
  CHECK(t == 0);
  CHECK(covdl_report_pair(rep, 6, &t, &e, &c) == COVDL_E_DIMENSION);

  CHECK(covdl_report_text(rep, nullptr, 0, &needed) == COVDL_OK);
  std::vector<char> small(4);
  CHECK(covdl_report_text(rep, small.data(), small.size(), &needed) == COVDL_E_BUFFER_TOO_SMALL);
  std::string text(needed, '\0');
  CHECK(covdl_report_text(rep, text.data(), text.size(), &needed) == COVDL_OK);
  CHECK(text.find("recovery_ratio") != std::string::npos);
  CHECK(covdl_report_csv(rep, nullptr, 0, &needed) == COVDL_OK);

  covdl_report* self = nullptr;
  REQUIRE(covdl_evaluate(a_true, a_true, 0.99, &self) == COVDL_OK);
  CHECK(covdl_report_ratio(self) == 1.0);
  CHECK(covdl_evaluate(a_true, a_true, 0.0, &self) == COVDL_E_INVALID_ARGUMENT);

  opts.mode = COVDL_MODE_COVDL2;
  opts.sources = 10;
  covdl_result* bad = nullptr;
  CHECK(covdl_learn(ds, &opts, &bad) == COVDL_E_INVALID_ARGUMENT);
  CHECK(std::string(covdl_last_error()).find("covdl1") != std::string::npos);
  opts.mode = 7;
  CHECK(covdl_learn(ds, &opts, &bad) == COVDL_E_INVALID_ARGUMENT);

  opts.mode = COVDL_MODE_AUTO;
  opts.sources = 12;
  opts.sparsity_k = 3;
  opts.dict_max_iters = 20;
  opts.dict_restarts = -1;
  CHECK(covdl_learn(ds, &opts, &bad) == COVDL_E_INVALID_ARGUMENT);
  for (int32_t restarts : {0, 2}) {
    opts.dict_restarts = restarts;
    covdl_result* one = nullptr;
    REQUIRE(covdl_learn(ds, &opts, &one) == COVDL_OK);
    CHECK(covdl_result_mode(one) == COVDL_MODE_COVDL1);
    CHECK(covdl_result_trace_length(one) >= 2);
    covdl_result_free(one);
  }

  covdl_report_free(self);
  covdl_report_free(rep);
  covdl_matrix_free(a_hat);
  covdl_result_free(res);
  covdl_dataset_free(ds);
  covdl_matrix_free(powers);
  covdl_matrix_free(a_true);
  covdl_matrix_free(rec);
  covdl_truth_free(truth);
}

TEST_CASE("lift errors map to status codes") {
  covdl_matrix* rec = nullptr;
  REQUIRE(covdl_matrix_create(2, 100, nullptr, &rec) == COVDL_OK);
  covdl_segmentation plan;
  covdl_segmentation_default(&plan);
  covdl_dataset* ds = nullptr;
  CHECK(covdl_lift(rec, 10.0, &plan, &ds) == COVDL_OK);
  CHECK(covdl_dataset_segment_count(ds) == 9);
  covdl_dataset_free(ds);
  CHECK(covdl_lift(rec, 100.0, &plan, &ds) == COVDL_E_EMPTY_PLAN);
  CHECK(covdl_lift(rec, 100.0, nullptr, &ds) == COVDL_E_INVALID_ARGUMENT);
  covdl_matrix* lifted = nullptr;
  REQUIRE(covdl_matrix_create(5, 3, nullptr, &lifted) == COVDL_OK);
  CHECK(covdl_dataset_from_lifted(lifted, 0, &ds) == COVDL_E_DIMENSION);
  covdl_matrix_free(lifted);
  covdl_matrix_free(rec);
}
