/* C interface of the neurolan simulation and inference engine.
 *
 * Generated by cbindgen from crates/ffi; do not edit by hand. */

#ifndef NEUROLAN_H
#define NEUROLAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible call.
typedef enum nl_status_t {
  // Success.
  NL_OK = 0,
  // A required pointer argument was null.
  NL_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  NL_INVALID_UTF8 = 2,
  // Malformed configuration or JSON input.
  NL_CONFIG = 3,
  // A parameter vector violated the model's admissible box.
  NL_PARAM_DOMAIN = 4,
  // Invalid runtime input (dimensions, horizons, indices, …).
  NL_INVALID_INPUT = 5,
  // A numerical operation failed.
  NL_NUMERICS = 6,
  // Panic or other unexpected internal failure.
  NL_INTERNAL = 7,
} nl_status_t;

// Fit handle; create with `nl_fit`, destroy with `nl_fit_free`.
typedef struct nl_fit_t nl_fit_t;

// Model handle; create with `nl_model_from_json`, destroy with
// `nl_model_free`.
typedef struct nl_model_t nl_model_t;

// Simulated trajectory handle; create with `nl_simulate` or
// `nl_record_from_jsonl`, destroy with `nl_record_free`.
typedef struct nl_record_t nl_record_t;

// Plain-data summary of a fit, safe to copy across the boundary.
typedef struct nl_fit_summary_t {
  // 1 when the gradient test passed at the returned parameter.
  uint8_t converged;
  // 1 when some coordinate of the maximizer sits on the box boundary.
  uint8_t at_boundary;
  // Newton iterations spent on the winning start.
  uint64_t iterations;
  // Log-likelihood ratio of the maximizer against the reference point.
  double log_likelihood_ratio;
  // Infinity norm of the projected gradient at the maximizer.
  double gradient_norm;
} nl_fit_summary_t;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the error message of the last failing call on this thread as a
// newly allocated string, or null when no call has failed. Free the result
// with `nl_string_free`.
char *nl_last_error_message(void);

// Frees a string previously returned by this library.
//
// # Safety
// `s` must be null or a pointer obtained from a `neurolan` function that
// documents `nl_string_free` as its deallocator, not yet freed.
void nl_string_free(char *s);

// Builds a model from the JSON text of a model section, e.g.
//
// ```json
// {"drift": {"type": "zero"}, "reset": {"type": "none"},
//  "mark_law": {"type": "dirac", "value": 0.2},
//  "initial_law": {"type": "uniform", "min": 0.0, "max": 1.0},
//  "rate": {"family": "constant"},
//  "theta_box": {"lower": [0.2], "upper": [3.0]}}
// ```
//
// On success writes a new handle to `out`; free it with `nl_model_free`.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer.
enum nl_status_t nl_model_from_json(const char *json, struct nl_model_t **out);

// Destroys a model handle; null is ignored.
//
// # Safety
// `model` must be null or an unfreed handle from `nl_model_from_json`.
void nl_model_free(struct nl_model_t *model);

// Writes the parameter dimension of the model to `out`.
//
// # Safety
// `model` must be a valid handle and `out` a valid pointer.
enum nl_status_t nl_model_param_dim(const struct nl_model_t *model, size_t *out);

// Simulates `n` neurons over `[0, horizon]` at the true parameter
// `theta_star` (length `theta_len`) and writes a new record handle to
// `out`; free it with `nl_record_free`. Equal seeds reproduce the record
// bit for bit.
//
// # Safety
// `model` must be a valid handle, `theta_star` must point to `theta_len`
// readable doubles, and `out` must be a valid pointer.
enum nl_status_t nl_simulate(const struct nl_model_t *model,
                             const double *theta_star,
                             size_t theta_len,
                             size_t n,
                             double horizon,
                             uint64_t seed,
                             struct nl_record_t **out);

// Destroys a record handle; null is ignored.
//
// # Safety
// `record` must be null or an unfreed record handle.
void nl_record_free(struct nl_record_t *record);

// Writes the number of spike events in the record to `out`.
//
// # Safety
// `record` must be a valid handle and `out` a valid pointer.
enum nl_status_t nl_record_event_count(const struct nl_record_t *record, size_t *out);

// Serializes the record to its JSON-lines wire format as a newly allocated
// string; free it with `nl_string_free`. The text reloads bit-identically
// through `nl_record_from_jsonl`.
//
// # Safety
// `record` must be a valid handle and `out` a valid pointer.
enum nl_status_t nl_record_to_jsonl(const struct nl_record_t *record, char **out);

// Reloads a record from its JSON-lines wire format under the given model
// and writes a new handle to `out`; free it with `nl_record_free`.
//
// # Safety
// `model` must be a valid handle, `jsonl` a valid NUL-terminated string,
// and `out` a valid pointer.
enum nl_status_t nl_record_from_jsonl(const struct nl_model_t *model,
                                      const char *jsonl,
                                      struct nl_record_t **out);

// Writes the path log-likelihood ratio of `theta` against `theta_ref`
// (both of length `theta_len`) to `out`.
//
// # Safety
// `record` must be a valid handle, both parameter pointers must point to
// `theta_len` readable doubles, and `out` must be a valid pointer.
enum nl_status_t nl_log_likelihood_ratio(const struct nl_record_t *record,
                                         const double *theta,
                                         const double *theta_ref,
                                         size_t theta_len,
                                         double *out);

// Writes the score (log-likelihood gradient) at `theta` into the caller's
// buffer `out`, which must hold `theta_len` doubles.
//
// # Safety
// `record` must be a valid handle, `theta` must point to `theta_len`
// readable doubles, and `out` to `theta_len` writable doubles.
enum nl_status_t nl_score(const struct nl_record_t *record,
                          const double *theta,
                          size_t theta_len,
                          double *out);

// Fits the maximum-likelihood parameter on the record and writes a new fit
// handle to `out`; free it with `nl_fit_free`.
//
// `options_json` may be null for defaults, or the JSON text of an
// estimator section, e.g. `{"max_iterations": 200, "grad_tolerance": 1e-10}`.
//
// # Safety
// `record` must be a valid handle, `options_json` null or a valid
// NUL-terminated string, and `out` a valid pointer.
enum nl_status_t nl_fit(const struct nl_record_t *record,
                        const char *options_json,
                        struct nl_fit_t **out);

// Destroys a fit handle; null is ignored.
//
// # Safety
// `fit` must be null or an unfreed fit handle.
void nl_fit_free(struct nl_fit_t *fit);

// Copies the fitted parameter into the caller's buffer `out` of `len`
// doubles; `len` must equal the model's parameter dimension.
//
// # Safety
// `fit` must be a valid handle and `out` must point to `len` writable
// doubles.
enum nl_status_t nl_fit_theta(const struct nl_fit_t *fit, double *out, size_t len);

// Writes the plain-data summary of a fit to `out`.
//
// # Safety
// `fit` must be a valid handle and `out` a valid pointer.
enum nl_status_t nl_fit_summary(const struct nl_fit_t *fit, struct nl_fit_summary_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEUROLAN_H */
