/*
 * proxydml C API.
 *
 * Every function returns a pdml_status; on failure pdml_last_error() holds a
 * message for the calling thread. Objects behind opaque handles are owned by
 * the caller and released with the matching *_free function. Strings returned
 * from a handle stay valid until that handle is freed.
 *
 * Array layouts are row-major: embeddings are N x D, proxies are C x K x D.
 */
#ifndef PROXYDML_H
#define PROXYDML_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(PDML_BUILDING_LIBRARY)
#    define PDML_API __declspec(dllexport)
#  else
#    define PDML_API __declspec(dllimport)
#  endif
#else
#  define PDML_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pdml_status {
  PDML_OK = 0,
  PDML_ERR_INVALID_ARGUMENT = 1,
  PDML_ERR_INVALID_CONFIG = 2,
  PDML_ERR_SHAPE_MISMATCH = 3,
  PDML_ERR_ZERO_VECTOR = 4,
  PDML_ERR_EMPTY_BATCH = 5,
  PDML_ERR_INVALID_K = 6,
  PDML_ERR_NO_POSITIVES = 7,
  PDML_ERR_EMPTY_RESULT_SET = 8,
  PDML_ERR_SPEC_INFEASIBLE = 9,
  PDML_ERR_TOO_FEW_CLASSES = 10,
  PDML_ERR_PARSE = 11,
  PDML_ERR_DIMENSION_MISMATCH = 12,
  PDML_ERR_IO = 13,
  PDML_ERR_BATCH_TOO_SMALL = 14,
  PDML_ERR_NON_FINITE = 15,
  PDML_ERR_EMPTY_GALLERY = 16,
  /* The computation ran but its result failed a check (gradcheck, table1). */
  PDML_ERR_CHECK_FAILED = 17,
  PDML_ERR_INTERNAL = 18
} pdml_status;

PDML_API const char* pdml_version(void);
PDML_API const char* pdml_status_string(pdml_status status);
/* Message for the most recent failure on this thread; "" if none. */
PDML_API const char* pdml_last_error(void);

/* ---- losses ------------------------------------------------------------ */

typedef enum pdml_loss_kind { PDML_LOSS_SOFTTRIPLE = 0, PDML_LOSS_MPA = 1 } pdml_loss_kind;

typedef enum pdml_similarity_mode {
  PDML_SIM_SOFTMAX = 0,
  PDML_SIM_MAX = 1,
  PDML_SIM_MEAN = 2
} pdml_similarity_mode;

typedef struct pdml_loss_config {
  double gamma;
  double lambda;
  double delta;
  double alpha;
  double tau;
  int loss_kind;       /* pdml_loss_kind */
  int similarity_mode; /* pdml_similarity_mode */
} pdml_loss_config;

PDML_API void pdml_loss_config_default(pdml_loss_config* cfg);

/* Loss of raw (unnormalized) embeddings and proxies; both are L2-normalized
 * internally. labels are in [0, num_classes). */
PDML_API pdml_status pdml_loss_forward(const pdml_loss_config* cfg, const double* embeddings,
                                       const int32_t* labels, size_t n, size_t dim,
                                       const double* proxies, size_t num_classes,
                                       size_t proxies_per_class, double* loss_out);

/* As pdml_loss_forward, plus gradients with respect to the raw inputs.
 * d_embeddings holds n*dim values, d_proxies num_classes*proxies_per_class*dim. */
PDML_API pdml_status pdml_loss_backward(const pdml_loss_config* cfg, const double* embeddings,
                                        const int32_t* labels, size_t n, size_t dim,
                                        const double* proxies, size_t num_classes,
                                        size_t proxies_per_class, double* loss_out,
                                        double* d_embeddings, double* d_proxies);

/* Proxies must already be unit-norm. */
PDML_API pdml_status pdml_center_regularizer(const double* proxies, size_t num_classes,
                                             size_t proxies_per_class, size_t dim, double* out);

/* ---- ranking metrics --------------------------------------------------- */

typedef enum pdml_metric {
  PDML_METRIC_RECALL = 0,
  PDML_METRIC_PRECISION = 1,
  PDML_METRIC_MAP_AT_K = 2,
  PDML_METRIC_MAP_AT_R = 3, /* k is ignored */
  PDML_METRIC_NDCG = 4
} pdml_metric;

/* relevance[i] is nonzero when rank i (0 = nearest) is a positive. The value
 * is on the 0..100 scale. */
PDML_API pdml_status pdml_metric_value(int metric, const uint8_t* relevance, size_t length,
                                       size_t total_positives, size_t k, double* out);

/* ---- datasets ---------------------------------------------------------- */

typedef struct pdml_dataset pdml_dataset;

typedef struct pdml_synth_spec {
  size_t num_classes;
  size_t centers_per_class;
  size_t samples_per_center;
  size_t dim;
  double center_spread; /* minimum angle between true centers, radians */
  double cluster_noise;
  uint64_t seed;
  int antipodal; /* nonzero: exactly two centers at u and -u */
} pdml_synth_spec;

PDML_API void pdml_synth_spec_default(pdml_synth_spec* spec);
PDML_API pdml_status pdml_dataset_generate(const pdml_synth_spec* spec, pdml_dataset** out);
PDML_API pdml_status pdml_dataset_load(const char* path, pdml_dataset** out);
/* Writes the CSV and a `<path>.meta.json` sidecar. */
PDML_API pdml_status pdml_dataset_save(const pdml_dataset* ds, const char* path);
PDML_API size_t pdml_dataset_rows(const pdml_dataset* ds);
PDML_API size_t pdml_dataset_dim(const pdml_dataset* ds);
/* Copies rows*dim features / rows labels into caller buffers. */
PDML_API pdml_status pdml_dataset_copy(const pdml_dataset* ds, double* features, int32_t* labels);
PDML_API void pdml_dataset_free(pdml_dataset* ds);

/* ---- experiment commands ----------------------------------------------- */

typedef struct pdml_report pdml_report;

typedef struct pdml_run_options {
  const char* out_dir; /* NULL: use the config's output_dir */
  size_t jobs;         /* 0 or 1: sequential */
  int has_seed;        /* nonzero: override train and data seeds */
  uint64_t seed;
  int write_files;     /* nonzero: write report/log files */
} pdml_run_options;

PDML_API void pdml_run_options_default(pdml_run_options* opts);

/* Train and evaluate per the JSON config. Writes report.json and
 * train_log.csv under the output directory. */
PDML_API pdml_status pdml_run(const char* config_json, const pdml_run_options* opts,
                              pdml_report** out);

/* One run per (K, seed); writes ksweep.csv and ksweep_summary.json. */
PDML_API pdml_status pdml_ksweep(const char* config_json, const size_t* k_values,
                                 size_t num_k_values, size_t num_seeds,
                                 const pdml_run_options* opts, pdml_report** out);

typedef struct pdml_gradcheck_options {
  uint64_t seed;
  size_t dim;
  double step;
  double tolerance;
  int corrupt_mpa_positive; /* fault injection for testing the checker */
} pdml_gradcheck_options;

PDML_API void pdml_gradcheck_options_default(pdml_gradcheck_options* opts);

/* PDML_ERR_CHECK_FAILED when any gradient disagrees; *out is set either way. */
PDML_API pdml_status pdml_gradcheck(const pdml_gradcheck_options* opts, pdml_report** out);

/* PDML_ERR_CHECK_FAILED when a reference cell is off by more than 0.05. */
PDML_API pdml_status pdml_table1(pdml_report** out);

/* Exactly one of relevance_path / embeddings_path must be non-NULL. */
PDML_API pdml_status pdml_eval(const char* relevance_path, const char* embeddings_path,
                               const size_t* ks, size_t num_ks, const pdml_run_options* opts,
                               pdml_report** out);

PDML_API const char* pdml_report_json(const pdml_report* report);
PDML_API const char* pdml_report_text(const pdml_report* report);
PDML_API void pdml_report_free(pdml_report* report);

#ifdef __cplusplus
}
#endif

#endif /* PROXYDML_H */
