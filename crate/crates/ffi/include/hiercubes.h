#ifndef HIERCUBES_H
#define HIERCUBES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Pass as `depth` to evaluate the limit of vanishing scale truncation.
 */
#define HC_DEPTH_LIMIT -1

/**
 * Kind tag of [`HcLogReal`].
 */
typedef enum HcLogKind {
  HC_LOG_KIND_ZERO = 0,
  HC_LOG_KIND_FINITE = 1,
  HC_LOG_KIND_INFINITE = 2,
} HcLogKind;

/**
 * Sampler constructions selectable through [`hc_sampler_new`].
 */
typedef enum HcSamplerKind {
  HC_SAMPLER_KIND_TOP_DOWN = 0,
  HC_SAMPLER_KIND_BERNOULLI_MAX = 1,
  HC_SAMPLER_KIND_INFINITE = 2,
  HC_SAMPLER_KIND_MANDELBROT = 3,
} HcSamplerKind;

/**
 * Result codes of every `hc_*` function.
 */
typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_POINTER = 1,
  HC_STATUS_INVALID_ARGUMENT = 2,
  HC_STATUS_OUT_OF_RANGE = 3,
  HC_STATUS_REFUSED = 4,
  HC_STATUS_UNDECIDED = 5,
  HC_STATUS_CAP_EXCEEDED = 6,
  HC_STATUS_IO = 7,
  HC_STATUS_PANIC = 8,
} HcStatus;

/**
 * Opaque activity model.
 */
typedef struct HcModel HcModel;

/**
 * Opaque prepared sampler.
 */
typedef struct HcSampler HcSampler;

/**
 * A non-negative number stored by its logarithm; `ln` is meaningful only
 * for `Finite`.
 */
typedef struct HcLogReal {
  enum HcLogKind kind;
  double ln;
} HcLogReal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hc_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Release with
 * [`hc_string_free`].
 */
char *hc_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void hc_string_free(char *s);

/**
 * Parses a model from its JSON description.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HcStatus hc_model_from_json(const char *json, struct HcModel **out);

/**
 * The constant activity `z` on every block of a `d`-dimensional, `M`-adic hierarchy.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HcStatus hc_model_constant(uint32_t dim, uint32_t base, double z, struct HcModel **out);

/**
 * # Safety
 * `model` must come from this library or be NULL.
 */
void hc_model_free(struct HcModel *model);

/**
 * # Safety
 * Pointers must be valid; the result is released with [`hc_string_free`].
 */
enum HcStatus hc_model_to_json(const struct HcModel *model, char **out);

/**
 * `Ξ` of `window` with activities restricted to scales `>= -depth`, or
 * the untruncated limit for [`HC_DEPTH_LIMIT`].
 *
 * # Safety
 * Pointers must be valid and strings NUL-terminated.
 */
enum HcStatus hc_partition_function(const struct HcModel *model,
                                    const char *window,
                                    int64_t depth,
                                    struct HcLogReal *out);

/**
 * Effective activity `ẑ` of `block`.
 *
 * # Safety
 * Pointers must be valid and strings NUL-terminated.
 */
enum HcStatus hc_effective_activity(const struct HcModel *model,
                                    const char *block,
                                    int64_t depth,
                                    struct HcLogReal *out);

/**
 * Occupation ratio `ρ̂ = ẑ/(1+ẑ)` of `block`.
 *
 * # Safety
 * Pointers must be valid and strings NUL-terminated.
 */
enum HcStatus hc_occupation_ratio(const struct HcModel *model,
                                  const char *block,
                                  int64_t depth,
                                  double *out);

/**
 * Probability that every block of `blocks` is occupied. A NULL `window`
 * selects infinite volume.
 *
 * # Safety
 * Pointers must be valid and strings NUL-terminated.
 */
enum HcStatus hc_exact_marginal(const struct HcModel *model,
                                const char *blocks,
                                const char *window,
                                int64_t depth,
                                double *out);

/**
 * Covariance of the occupation indicators of two blocks. A NULL `window`
 * selects infinite volume.
 *
 * # Safety
 * Pointers must be valid and strings NUL-terminated.
 */
enum HcStatus hc_pair_covariance(const struct HcModel *model,
                                 const char *block1,
                                 const char *block2,
                                 const char *window,
                                 int64_t depth,
                                 double *out);

/**
 * Existence verdict and certificates as JSON.
 *
 * # Safety
 * Pointers must be valid; the result is released with [`hc_string_free`].
 */
enum HcStatus hc_existence_report(const struct HcModel *model, char **out);

/**
 * Critical chemical potential of the parametric family in dimension `dim`
 * with `M = 2`. `mu_c` receives `+inf` when no finite value exists;
 * `report` may be NULL, otherwise it receives the full report as JSON.
 *
 * # Safety
 * `mu_c` must be valid; `report` must be valid or NULL.
 */
enum HcStatus hc_critical_mu(uint32_t dim,
                             double coupling,
                             double alpha,
                             double tol,
                             double *mu_c,
                             char **report);

/**
 * Prepares a sampler on `window` down to scale `-depth`. `kind` is one of
 * the [`HcSamplerKind`] values; `p` is read only by the Mandelbrot
 * construction.
 *
 * # Safety
 * Pointers must be valid and strings NUL-terminated.
 */
enum HcStatus hc_sampler_new(const struct HcModel *model,
                             const char *window,
                             int64_t depth,
                             int kind,
                             double p,
                             struct HcSampler **out);

/**
 * # Safety
 * `sampler` must come from this library or be NULL.
 */
void hc_sampler_free(struct HcSampler *sampler);

/**
 * Sample number `index` of the stream `seed`, as a JSON configuration.
 *
 * # Safety
 * Pointers must be valid; the result is released with [`hc_string_free`].
 */
enum HcStatus hc_sampler_sample_json(const struct HcSampler *sampler,
                                     uint64_t seed,
                                     uint64_t index,
                                     char **out);

/**
 * Runs the built-in verifier suite. `failed` receives the number of failed
 * checks; `report` may be NULL, otherwise it receives the results as JSON.
 *
 * # Safety
 * `failed` must be valid; `report` must be valid or NULL.
 */
enum HcStatus hc_validate(int inject_perturbation, uint32_t *failed, char **report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HIERCUBES_H */
