/* Exercises the C interface from C. */

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "entroloss.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

#define EXPECT_OK(call)                                                           \
  do {                                                                            \
    entl_status st_ = (call);                                                     \
    if (st_ != ENTL_OK) {                                                         \
      fprintf(stderr, "%s:%d: %s -> %s (%s)\n", __FILE__, __LINE__, #call,         \
              entl_status_name(st_), entl_last_error());                          \
      ++failures;                                                                 \
    }                                                                             \
  } while (0)

static size_t epochs_seen = 0;

static void on_epoch(const entl_epoch* rec, void* user) {
  (void)user;
  if (rec->epoch == epochs_seen) ++epochs_seen;
}

static const char* kTiny =
    "{\"input_side\":16,\"conv_channels\":[3,2],\"dense_sizes\":[4],"
    "\"dropout_after_dense\":1,\"seed\":5}";

static void test_entropy(void) {
  double v = 0.0;
  EXPECT_OK(entl_cross_entropy(1.0, 0.5, 2.0, &v));
  EXPECT(fabs(v - 0.5) <= 1e-12);
  EXPECT_OK(entl_cross_entropy(1.0, 0.5, 1.0, &v));
  EXPECT(fabs(v - log(2.0)) <= 1e-12);
  EXPECT_OK(entl_entropy(1.0, 1.5, &v));
  EXPECT(v == 0.0);
  EXPECT_OK(entl_cross_entropy_grad(1.0, 0.5, 1.0, &v));
  EXPECT(fabs(v + 2.0) <= 1e-12);
  EXPECT(entl_entropy(0.5, 0.5, &v) == ENTL_ERR_DOMAIN);
  EXPECT(strstr(entl_last_error(), "alpha") != NULL);
  EXPECT(entl_entropy(0.5, 1.0, NULL) == ENTL_ERR_INVALID_ARGUMENT);
  EXPECT(strcmp(entl_status_name(ENTL_ERR_IO), "i/o error") == 0);
  EXPECT(strcmp(entl_status_name((entl_status)42), "unknown status") == 0);
  EXPECT(strlen(entl_version()) > 0);
}

static void test_model_and_data(const char* scratch) {
  entl_dataset* ds = NULL;
  entl_dataset* tr = NULL;
  entl_dataset* va = NULL;
  entl_model* m = NULL;
  entl_model* back = NULL;
  size_t n = 0, u = 0, i = 0;
  int label = -1;
  double p = 0.0, q = 0.0;
  char* json = NULL;
  char ckpt[512], cfg[512];

  EXPECT(entl_dataset_synth(1, 0.5, 1, 0.15, &ds) == ENTL_ERR_DOMAIN);
  EXPECT_OK(entl_dataset_synth(20, 0.5, 7, 0.15, &ds));
  EXPECT_OK(entl_dataset_size(ds, &n));
  EXPECT(n == 20);
  EXPECT_OK(entl_dataset_counts(ds, &u, &i));
  EXPECT(u == 10 && i == 10);
  EXPECT_OK(entl_dataset_label(ds, 0, &label));
  EXPECT(label == 0 || label == 1);
  EXPECT(entl_dataset_label(ds, 20, &label) != ENTL_OK);
  EXPECT_OK(entl_dataset_split(ds, 0.7, 1, 0, &tr, &va));
  EXPECT_OK(entl_dataset_size(tr, &n));
  EXPECT(n == 14);

  EXPECT_OK(entl_model_create(NULL, &m));
  EXPECT_OK(entl_model_param_count(m, &n));
  EXPECT(n == 126713);
  entl_model_free(m);
  m = NULL;
  EXPECT_OK(entl_model_create("{\"input_side\":4,\"conv_channels\":[1],\"dense_sizes\":[1],"
                              "\"dropout_after_dense\":0}",
                              &m));
  EXPECT_OK(entl_model_param_count(m, &n));
  EXPECT(n == 15);
  entl_model_free(m);
  m = NULL;
  EXPECT(entl_model_create("{not json", &m) == ENTL_ERR_INVALID_ARGUMENT);
  EXPECT(entl_model_create("{\"input_side\":15}", &m) == ENTL_ERR_DOMAIN);

  EXPECT_OK(entl_model_create(kTiny, &m));
  /* 128-pixel images against a 16-pixel model. */
  EXPECT(entl_model_predict(m, ds, 0, &p) == ENTL_ERR_SHAPE);
  entl_dataset_free(ds);
  entl_dataset_free(tr);
  entl_dataset_free(va);
  ds = tr = va = NULL;

  /* The C API synthesises 128-pixel frames; a narrow 128-pixel net from here on. */
  EXPECT_OK(entl_dataset_synth(20, 0.5, 7, 0.15, &ds));
  entl_model_free(m);
  m = NULL;
  EXPECT_OK(entl_model_create("{\"conv_channels\":[2,2,2,2,2],\"dense_sizes\":[4],"
                              "\"dropout_after_dense\":1,\"seed\":5}",
                              &m));
  EXPECT_OK(entl_model_predict(m, ds, 3, &p));
  EXPECT(p > 0.0 && p < 1.0);
  EXPECT_OK(entl_model_config_json(m, &json));
  EXPECT(json != NULL && strstr(json, "conv_channels") != NULL);
  entl_string_free(json);

  snprintf(ckpt, sizeof ckpt, "%s/model.bin", scratch);
  snprintf(cfg, sizeof cfg, "%s/model.json", scratch);
  EXPECT_OK(entl_model_save(m, ckpt, cfg));
  EXPECT_OK(entl_model_load(ckpt, cfg, &back));
  EXPECT_OK(entl_model_predict(back, ds, 3, &q));
  EXPECT(p == q);
  EXPECT(entl_model_load("/nonexistent/x.bin", cfg, &back) == ENTL_ERR_IO);

  {
    entl_gradcheck_result gc;
    EXPECT_OK(entl_gradcheck(m, ds, 0, 1.3, 10, 1e-5, 1, 1e-5, &gc));
    EXPECT(gc.smooth_count == 10);
    EXPECT(gc.max_relative_error <= 1e-4);
    EXPECT(entl_gradcheck(m, ds, 0, 0.5, 10, 1e-5, 1, 1e-5, &gc) == ENTL_ERR_DOMAIN);
  }

  /* Training with a per-epoch callback, then reports. */
  EXPECT_OK(entl_dataset_split(ds, 0.7, 1, 0, &tr, &va));
  {
    entl_report* r = NULL;
    entl_metrics met;
    entl_epoch e;
    char csv[512], svg[512];
    EXPECT_OK(entl_train(m, tr, va, "{\"epochs\":2,\"loss\":{\"alpha\":1.1},\"batch_size\":4}",
                         on_epoch, NULL, &r));
    EXPECT(epochs_seen == 2);
    EXPECT_OK(entl_report_epoch_count(r, &n));
    EXPECT(n == 2);
    EXPECT_OK(entl_report_epoch(r, 1, &e));
    EXPECT(e.epoch == 1);
    EXPECT_OK(entl_report_final_metrics(r, &met));
    EXPECT(met.tp + met.fp + met.tn + met.fn == 6);
    snprintf(csv, sizeof csv, "%s/report.csv", scratch);
    snprintf(svg, sizeof svg, "%s/loss.svg", scratch);
    EXPECT_OK(entl_report_write_csv(r, csv));
    EXPECT_OK(entl_report_write_svg(r, 5, svg));
    entl_report_free(r);
    r = NULL;
    EXPECT_OK(entl_report_read_csv(csv, &r));
    EXPECT_OK(entl_report_epoch_count(r, &n));
    EXPECT(n == 2);
    EXPECT(entl_report_final_metrics(r, &met) == ENTL_ERR_STATE);
    entl_report_free(r);
    EXPECT(entl_train(m, tr, va, "{\"epochs\":0}", NULL, NULL, &r) == ENTL_ERR_DOMAIN);
  }

  entl_model_free(back);
  entl_model_free(m);
  entl_dataset_free(tr);
  entl_dataset_free(va);
  entl_dataset_free(ds);
}

static void test_reports_and_metrics(void) {
  const double val[8] = {1.0, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4};
  entl_epoch recs[8];
  entl_report* r = NULL;
  int found = 0;
  size_t epoch = 99, k;
  entl_metrics met;
  double p1[4] = {0.99, 0.99, 0.99, 0.99};
  int labels[4] = {1, 0, 1, 0};

  for (k = 0; k < 8; ++k) {
    recs[k].epoch = k;
    recs[k].train_loss = 1.0 - 0.1 * (double)k;
    recs[k].val_loss = val[k];
    recs[k].train_accuracy = 0.5;
    recs[k].val_accuracy = 0.5;
  }
  EXPECT_OK(entl_report_from_records(recs, 8, &r));
  EXPECT_OK(entl_report_detect_overfitting(r, 5, &found, &epoch));
  EXPECT(found == 1 && epoch == 1);
  entl_report_free(r);

  EXPECT_OK(entl_evaluate_predictions(p1, labels, 4, 0.5, &met));
  EXPECT(met.has_sensitivity && met.sensitivity == 1.0);
  EXPECT(met.has_specificity && met.specificity == 0.0);
  EXPECT(entl_evaluate_predictions(p1, labels, 0, 0.5, &met) == ENTL_ERR_DOMAIN);
}

static void test_sweep(const char* scratch) {
  entl_dataset* ds = NULL;
  entl_sweep* s = NULL;
  const double alphas[2] = {1.0, 2.0};
  const size_t counts[2] = {1, 2};
  size_t n = 0;
  char grid[512], lng[512];
  double a;
  size_t e;
  int ok;
  entl_metrics met;
  const char* err = NULL;

  EXPECT_OK(entl_dataset_synth(12, 0.5, 3, 0.15, &ds));
  EXPECT_OK(entl_sweep_run(ds,
                           "{\"conv_channels\":[2,2,2,2,2],\"dense_sizes\":[4],"
                           "\"dropout_after_dense\":1}",
                           "{\"batch_size\":4}", alphas, 2, counts, 2, 0.7, 0, 0, 1, &s));
  EXPECT_OK(entl_sweep_cell_count(s, &n));
  EXPECT(n == 4);
  EXPECT_OK(entl_sweep_succeeded(s, &n));
  EXPECT(n == 4);
  EXPECT_OK(entl_sweep_cell(s, 3, &a, &e, &ok, &met, &err));
  EXPECT(a == 2.0 && e == 2 && ok == 1);
  snprintf(grid, sizeof grid, "%s/grid.csv", scratch);
  snprintf(lng, sizeof lng, "%s/long.csv", scratch);
  EXPECT_OK(entl_sweep_write_csv(s, grid, lng));
  {
    FILE* f = fopen(grid, "r");
    char line[256] = {0};
    EXPECT(f != NULL);
    if (f) {
      EXPECT(fgets(line, sizeof line, f) != NULL);
      EXPECT(strcmp(line, "epochs,alpha=1,alpha=2\n") == 0);
      fclose(f);
    }
  }
  entl_sweep_free(s);
  s = NULL;
  EXPECT(entl_sweep_run(ds, NULL, NULL, alphas, 0, counts, 2, 0.7, 0, 0, 1, &s) ==
         ENTL_ERR_DOMAIN);
  entl_dataset_free(ds);
}

int main(int argc, char** argv) {
  const char* scratch = argc > 1 ? argv[1] : ".";
  test_entropy();
  test_reports_and_metrics();
  test_model_and_data(scratch);
  test_sweep(scratch);
  entl_model_free(NULL);
  entl_dataset_free(NULL);
  if (failures) {
    fprintf(stderr, "%d C API check(s) failed\n", failures);
    return 1;
  }
  printf("C API: all checks passed\n");
  return 0;
}
