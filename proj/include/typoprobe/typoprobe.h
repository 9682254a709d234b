#ifndef TYPOPROBE_TYPOPROBE_H
#define TYPOPROBE_TYPOPROBE_H

/* C interface to the typoprobe library.
 *
 * Every fallible call returns a tp_status. On failure a message is available
 * from tp_last_error() on the calling thread until its next library call.
 * Strings returned through char** out-parameters are owned by the caller and
 * released with tp_string_free().
 */

#include <stddef.h>
#include <stdint.h>

#if defined(TYPOPROBE_BUILDING)
#define TP_API __attribute__((visibility("default")))
#else
#define TP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tp_status {
    TP_OK = 0,
    TP_ERR_VALIDATION = 1,
    TP_ERR_BAD_INPUT = 2,
    TP_ERR_MISSING_DATA = 3,
    TP_ERR_NUMERICAL = 4,
    TP_ERR_IO = 5,
    TP_ERR_PARSE = 6,
    TP_ERR_BAD_MAGIC = 7,
    TP_ERR_TRUNCATED = 8,
    TP_ERR_UNSUPPORTED_VERSION = 9,
    TP_ERR_FORMAT = 10,
    TP_ERR_DIMENSION_MISMATCH = 11,
    TP_ERR_INVALID_ARGUMENT = 12,
    TP_ERR_INTERNAL = 99
} tp_status;

typedef enum tp_dtype { TP_F32 = 0, TP_F64 = 1 } tp_dtype;

typedef struct tp_matrix tp_matrix;
typedef struct tp_probe tp_probe;

TP_API const char* tp_version(void);
TP_API const char* tp_last_error(void);
TP_API const char* tp_status_name(tp_status status);
TP_API void tp_string_free(char* s);

/* Suppresses info-level progress lines on stderr. */
TP_API void tp_set_quiet(int quiet);

/* Embedding matrices. `data` holds count*dim values, row-major. */
TP_API tp_status tp_matrix_create(const char* language, const char* encoder_name, int layer_index, uint32_t dim,
                                  uint64_t count, tp_dtype dtype, const double* data, tp_matrix** out);
TP_API tp_status tp_matrix_read(const char* path, tp_matrix** out);
TP_API tp_status tp_matrix_write(const tp_matrix* m, const char* path);
TP_API void tp_matrix_free(tp_matrix* m);

TP_API uint64_t tp_matrix_rows(const tp_matrix* m);
TP_API uint32_t tp_matrix_dim(const tp_matrix* m);
TP_API tp_dtype tp_matrix_dtype(const tp_matrix* m);
TP_API int tp_matrix_layer(const tp_matrix* m);
/* Borrowed; valid while m lives. */
TP_API const double* tp_matrix_data(const tp_matrix* m);
TP_API const char* tp_matrix_language(const tp_matrix* m);
TP_API const char* tp_matrix_encoder(const tp_matrix* m);
TP_API const char* tp_matrix_provenance(const tp_matrix* m);

/* 1 x dim f64 matrix holding the column means of m. */
TP_API tp_status tp_centroid(const tp_matrix* m, tp_matrix** out);
TP_API tp_status tp_self_neutralise(const tp_matrix* m, tp_matrix** out);
/* Subtracts the centroid of `neutraliser` from every row of m. */
TP_API tp_status tp_cross_neutralise(const tp_matrix* m, const tp_matrix* neutraliser, tp_matrix** out);

/* Probes saved by a run (probes/<task>.json). */
TP_API tp_status tp_probe_load(const char* json_path, tp_probe** out);
TP_API void tp_probe_free(tp_probe* p);
TP_API size_t tp_probe_dim(const tp_probe* p);
TP_API size_t tp_probe_classes(const tp_probe* p);
/* Borrowed label of class `index`, NULL when out of range. */
TP_API const char* tp_probe_label(const tp_probe* p, size_t index);
/* probs receives tp_probe_classes(p) class probabilities. */
TP_API tp_status tp_probe_forward(const tp_probe* p, const double* x, size_t dim, double* probs);
/* predictions receives tp_matrix_rows(m) class indices. */
TP_API tp_status tp_probe_predict(const tp_probe* p, const tp_matrix* m, int32_t* predictions);
TP_API tp_status tp_probe_accuracy(const tp_probe* p, const tp_matrix* m, int32_t gold, double* accuracy);

/* Generates a synthetic corpus from a JSON spec into out_dir. A non-NULL
 * seed overrides the seed given in the synthetic spec. */
TP_API tp_status tp_synth(const char* spec_path, const char* out_dir, const uint64_t* seed);

typedef struct tp_run_options {
    int has_seed;
    uint64_t seed;
    int has_layer;
    int layer;
    int has_threshold;
    double threshold;
    const char* modes;    /* comma-separated baseline,self,cross; NULL keeps the plan's */
    const char* formats;  /* comma-separated csv,json,md,all; NULL means all */
    const char* out_root; /* NULL: <plan dir>/runs */
    size_t threads;       /* 0: TYPOPROBE_THREADS or hardware concurrency */
} tp_run_options;

TP_API void tp_run_options_init(tp_run_options* options);
/* Runs a plan. run_dir (optional) receives the run directory path. */
TP_API tp_status tp_run(const char* plan_path, const tp_run_options* options, char** run_dir);

/* Checks hashes, header agreement and coverage of a manifest. Returns TP_OK
 * when the check ran; *consistent tells whether it passed. report_json
 * (optional) receives the full report. */
TP_API tp_status tp_validate_manifest(const char* manifest_path, int* consistent, char** report_json);

#ifdef __cplusplus
}
#endif

#endif
