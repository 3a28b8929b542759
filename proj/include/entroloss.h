#ifndef ENTROLOSS_H
#define ENTROLOSS_H

/*
 * C interface to the entroloss library: entropy losses, the frame-quality
 * classifier, dataset handling, training, sweeps and diagnostics.
 *
 * Every fallible call returns an entl_status. On failure the message is
 * available from entl_last_error() on the same thread until the next call.
 * Handles are opaque; each *_free accepts NULL. Strings returned through
 * char** out-parameters are released with entl_string_free.
 *
 * Labels: 0 = uninformative, 1 = informative. Probabilities are p(informative).
 */

#include <stddef.h>
#include <stdint.h>

#if defined(ENTL_BUILDING_LIBRARY)
#define ENTL_API __attribute__((visibility("default")))
#else
#define ENTL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum entl_status {
  ENTL_OK = 0,
  ENTL_ERR_INVALID_ARGUMENT = 1, /* NULL pointer, malformed JSON or list */
  ENTL_ERR_DOMAIN = 2,           /* value outside an operation's domain */
  ENTL_ERR_SHAPE = 3,            /* tensor or image shape mismatch */
  ENTL_ERR_IO = 4,               /* file missing, unreadable or unwritable */
  ENTL_ERR_NUMERICAL = 5,        /* non-finite loss during training */
  ENTL_ERR_STATE = 6,            /* call made in the wrong state */
  ENTL_ERR_INTERNAL = 7
} entl_status;

typedef struct entl_dataset entl_dataset;
typedef struct entl_model entl_model;
typedef struct entl_report entl_report;
typedef struct entl_sweep entl_sweep;

typedef struct entl_epoch {
  size_t epoch; /* counts from 0 */
  double train_loss;
  double val_loss;
  double train_accuracy;
  double val_accuracy;
} entl_epoch;

typedef struct entl_metrics {
  size_t tp, fp, tn, fn;
  double accuracy;
  double sensitivity; /* valid only when has_sensitivity */
  double specificity; /* valid only when has_specificity */
  int has_sensitivity;
  int has_specificity;
} entl_metrics;

typedef void (*entl_epoch_callback)(const entl_epoch* record, void* user);

ENTL_API const char* entl_version(void);
ENTL_API const char* entl_last_error(void);
ENTL_API const char* entl_status_name(entl_status status);
ENTL_API void entl_string_free(char* s);

/* Entropy. alpha == 1 is Shannon; alpha < 1 is a domain error. */
ENTL_API entl_status entl_entropy(double p1, double alpha, double* out);
ENTL_API entl_status entl_cross_entropy(double q1, double p1, double alpha, double* out);
/* d/dp1 of entl_cross_entropy with p0 = 1 - p1, at the clamped point. */
ENTL_API entl_status entl_cross_entropy_grad(double q1, double p1, double alpha, double* out);

/* Datasets. */
ENTL_API entl_status entl_dataset_synth(size_t n, double informative_fraction, uint64_t seed,
                                        double noise_sigma, entl_dataset** out);
ENTL_API entl_status entl_dataset_load_dir(const char* root, entl_dataset** out);
/* Writes PNGs plus manifest.json under root. */
ENTL_API entl_status entl_dataset_export(const entl_dataset* ds, const char* root);
ENTL_API entl_status entl_dataset_size(const entl_dataset* ds, size_t* out);
ENTL_API entl_status entl_dataset_counts(const entl_dataset* ds, size_t* uninformative,
                                         size_t* informative);
ENTL_API entl_status entl_dataset_label(const entl_dataset* ds, size_t index, int* label);
/* group_by_prefix keeps samples whose ids share a prefix in one partition. */
ENTL_API entl_status entl_dataset_split(const entl_dataset* ds, double train_fraction,
                                        uint64_t seed, int group_by_prefix,
                                        entl_dataset** train, entl_dataset** val);
ENTL_API void entl_dataset_free(entl_dataset* ds);

/* Models. config_json is a model configuration object; NULL or "{}" gives the
 * defaults. */
ENTL_API entl_status entl_model_create(const char* config_json, entl_model** out);
ENTL_API entl_status entl_model_config_json(const entl_model* m, char** out);
ENTL_API entl_status entl_model_param_count(const entl_model* m, size_t* out);
ENTL_API entl_status entl_model_predict(const entl_model* m, const entl_dataset* ds, size_t index,
                                        double* p1);
ENTL_API entl_status entl_model_save(const entl_model* m, const char* checkpoint_path,
                                     const char* config_path);
ENTL_API entl_status entl_model_load(const char* checkpoint_path, const char* config_path,
                                     entl_model** out);
ENTL_API void entl_model_free(entl_model* m);

/* Canonical JSON for a (possibly partial) training configuration. */
ENTL_API entl_status entl_train_config_resolve(const char* train_json, char** out);
/* Canonical JSON for a (possibly partial) model configuration. */
ENTL_API entl_status entl_model_config_resolve(const char* model_json, char** out);

/* Training updates the model in place. */
ENTL_API entl_status entl_train(entl_model* m, const entl_dataset* train, const entl_dataset* val,
                                const char* train_config_json, entl_epoch_callback on_epoch,
                                void* user, entl_report** out);

/* Reports. */
ENTL_API entl_status entl_report_from_records(const entl_epoch* records, size_t n,
                                              entl_report** out);
ENTL_API entl_status entl_report_read_csv(const char* path, entl_report** out);
ENTL_API entl_status entl_report_epoch_count(const entl_report* r, size_t* out);
ENTL_API entl_status entl_report_epoch(const entl_report* r, size_t index, entl_epoch* out);
/* Validation metrics after the last epoch; STATE error for reports not
 * produced by entl_train. */
ENTL_API entl_status entl_report_final_metrics(const entl_report* r, entl_metrics* out);
ENTL_API entl_status entl_report_write_csv(const entl_report* r, const char* path);
/* patience 0 disables the overfitting marker. */
ENTL_API entl_status entl_report_write_svg(const entl_report* r, size_t patience,
                                           const char* path);
/* *found = 0 when no onset exists. */
ENTL_API entl_status entl_report_detect_overfitting(const entl_report* r, size_t patience,
                                                    int* found, size_t* epoch);
ENTL_API void entl_report_free(entl_report* r);

/* Evaluation. Predicted label is 1 iff p1 >= threshold. */
ENTL_API entl_status entl_evaluate(const entl_model* m, const entl_dataset* ds, double threshold,
                                   entl_metrics* out);
ENTL_API entl_status entl_evaluate_predictions(const double* p1, const int* labels, size_t n,
                                               double threshold, entl_metrics* out);

/* Sweeps over alpha x epoch counts. */
ENTL_API entl_status entl_sweep_run(const entl_dataset* ds, const char* model_config_json,
                                    const char* train_config_json, const double* alphas,
                                    size_t n_alphas, const size_t* epoch_counts,
                                    size_t n_epoch_counts, double train_fraction,
                                    uint64_t split_seed, int group_by_prefix,
                                    size_t max_parallel, entl_sweep** out);
ENTL_API entl_status entl_sweep_cell_count(const entl_sweep* s, size_t* out);
ENTL_API entl_status entl_sweep_succeeded(const entl_sweep* s, size_t* out);
/* error may be NULL; *error stays valid until entl_sweep_free. */
ENTL_API entl_status entl_sweep_cell(const entl_sweep* s, size_t index, double* alpha,
                                     size_t* epochs, int* ok, entl_metrics* metrics,
                                     const char** error);
/* Either path may be NULL. */
ENTL_API entl_status entl_sweep_write_csv(const entl_sweep* s, const char* grid_path,
                                          const char* long_path);
ENTL_API void entl_sweep_free(entl_sweep* s);

typedef struct entl_gradcheck_result {
  double max_relative_error;     /* over resolved entries on one smooth piece */
  double max_relative_error_all; /* including kink-crossing entries */
  size_t smooth_count;
  size_t kink_count; /* entries whose +-step crossed a ReLU/max-pool/clamp switch */
  size_t unresolved_count; /* gradients too small for the quotient to resolve */
  int complete; /* 0 when the draw budget ran out before n_samples entries qualified */
} entl_gradcheck_result;

/* Finite-difference check of the whole network on sample `index` of ds with
 * its own label as target; n_samples resolved smooth entries are collected.
 * An entry is unresolved when rounding alone could show a relative error
 * above max_resolution. */
ENTL_API entl_status entl_gradcheck(const entl_model* m, const entl_dataset* ds, size_t index,
                                    double alpha, size_t n_samples, double step, uint64_t seed,
                                    double max_resolution, entl_gradcheck_result* out);

#ifdef __cplusplus
}
#endif

#endif
