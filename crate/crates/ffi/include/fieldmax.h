#ifndef FIELDMAX_H
#define FIELDMAX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum FmStatus {
  FM_STATUS_OK = 0,
  FM_STATUS_NULL_POINTER = 1,
  FM_STATUS_INVALID_UTF8 = 2,
  FM_STATUS_INVALID_ARGUMENT = 3,
  FM_STATUS_DEGENERATE_SHAPE = 4,
  FM_STATUS_NOT_POSITIVE_DEFINITE = 5,
  FM_STATUS_EMBEDDING_NOT_PSD = 6,
  FM_STATUS_SHAPE_MISMATCH = 7,
  FM_STATUS_ORDER_VIOLATION = 8,
  FM_STATUS_TARGET_OUT_OF_RANGE = 9,
  FM_STATUS_PARSE_ERROR = 10,
  FM_STATUS_IO_ERROR = 11,
  FM_STATUS_BUFFER_TOO_SMALL = 12,
  FM_STATUS_PANIC = 13,
} FmStatus;

// Stationary covariance family.
typedef struct FmModel FmModel;

// Gaussian field sampler bound to a model and a grid.
typedef struct FmSampler FmSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static string.
const char *fm_version(void);

// Message of the last failed call on this thread, or null. Valid until
// the next call into the library from the same thread.
const char *fm_last_error_message(void);

// Static name of a status code.
const char *fm_status_name(enum FmStatus status);

// Create a covariance model. `family` is `independent`, `geometric`
// (`a` = θ) or `polynomial` (`a` = C, `b` = α).
//
// # Safety
// `family` must be a valid C string and `out` a valid pointer.
enum FmStatus fm_model_new(const char *family, double a, double b, struct FmModel **out);

// # Safety
// `model` must come from [`fm_model_new`] and not be used afterwards.
void fm_model_free(struct FmModel *model);

// Correlation at lag (j1, j2).
//
// # Safety
// `model` and `out` must be valid pointers.
enum FmStatus fm_model_covariance(const struct FmModel *model, int64_t j1, int64_t j2, double *out);

// Sampler for an `n1` x `n2` grid. Grids above `dense_threshold` cells
// use circulant embedding; pass 0 for the default threshold.
//
// # Safety
// `model` and `out` must be valid pointers.
enum FmStatus fm_sampler_new(const struct FmModel *model,
                             size_t n1,
                             size_t n2,
                             size_t dense_threshold,
                             struct FmSampler **out);

// # Safety
// `sampler` must come from [`fm_sampler_new`] and not be used afterwards.
void fm_sampler_free(struct FmSampler *sampler);

// `independent`, `dense` or `spectral`; a static string, null on a null handle.
//
// # Safety
// `sampler` must be null or valid.
const char *fm_sampler_method(const struct FmSampler *sampler);

// Draw replication `index` of master seed `seed` into `values`
// (row-major, `len` must equal n1·n2).
//
// # Safety
// `sampler` must be valid and `values` must point to `len` writable doubles.
enum FmStatus fm_sampler_sample(const struct FmSampler *sampler,
                                uint64_t seed,
                                uint64_t index,
                                double *values,
                                size_t len);

// Level u with `cells` · tail(u) = `target`. `tail` is `gaussian`,
// `chi(d)` or `orderstat(d,r)`.
//
// # Safety
// `tail` must be a valid C string and `out` a valid pointer.
enum FmStatus fm_calibrate_level(const char *tail, double cells, double target, double *out);

// P(X > u) for the named tail.
//
// # Safety
// `tail` must be a valid C string and `out` a valid pointer.
enum FmStatus fm_tail(const char *tail, double u, double *out);

// E[exp(−λκ − (1−λ)τ)] for `lambda` given as `point(p)`,
// `twopoint(p1,p2,w)` or `beta(a,b)`.
//
// # Safety
// `lambda` must be a valid C string and `out` a valid pointer.
enum FmStatus fm_limit_value(const char *lambda, double kappa, double tau, double *out);

// E_λ[(λ Φ(v) + (1−λ) Φ(u))^N] for an independent field.
//
// # Safety
// `lambda` must be a valid C string and `out` a valid pointer.
enum FmStatus fm_exact_iid_joint(const char *lambda,
                                 double phi_u,
                                 double phi_v,
                                 uint64_t cells,
                                 double *out);

// P(X > h, Y > k) for a standard bivariate normal pair.
//
// # Safety
// `out` must be a valid pointer.
enum FmStatus fm_bvn_upper_orthant(double h, double k, double rho, double *out);

// Run an experiment from configuration text. `kind` is `simulate`,
// `asclt`, `calibrate`, `diagnose` or `limit`. When `out_dir` is not null
// the result files are written there. The run summary is returned as a
// JSON string in `out_json`, to be released with [`fm_string_free`].
//
// # Safety
// `kind` and `config` must be valid C strings, `out_dir` null or a valid
// C string, `out_json` a valid pointer.
enum FmStatus fm_run_experiment(const char *kind,
                                const char *config,
                                const char *out_dir,
                                char **out_json);

// Release a string returned by this library.
//
// # Safety
// `s` must be null or a string from this library not yet freed.
void fm_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* FIELDMAX_H */
