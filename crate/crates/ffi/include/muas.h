#ifndef MUAS_H
#define MUAS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. `MUAS_STATUS_OK` is zero; the rest mirror the library error codes.
 */
typedef enum MuasStatus {
  MUAS_STATUS_OK = 0,
  MUAS_STATUS_NULL_POINTER = 1,
  MUAS_STATUS_INVALID_UTF8 = 2,
  MUAS_STATUS_PANIC = 3,
  MUAS_STATUS_INVALID_ENCODING = 10,
  MUAS_STATUS_DIMENSION_MISMATCH,
  MUAS_STATUS_DUPLICATE_NAME,
  MUAS_STATUS_UNKNOWN_VERTEX,
  MUAS_STATUS_EDGE_NOT_FOUND,
  MUAS_STATUS_EDGE_NOT_DIRECTED,
  MUAS_STATUS_GRAPH_NOT_DAG,
  MUAS_STATUS_VERTEX_OVERLAP,
  MUAS_STATUS_GRAPH_TOO_LARGE,
  MUAS_STATUS_INVALID_Z,
  MUAS_STATUS_INVALID_CANDIDATE,
  MUAS_STATUS_NO_VALID_ADJUSTMENT_SET,
  MUAS_STATUS_INSUFFICIENT_SAMPLES,
  MUAS_STATUS_SINGULAR_COVARIANCE,
  MUAS_STATUS_NON_CONTINUOUS_DATA,
  MUAS_STATUS_UNKNOWN_PLUGIN,
  MUAS_STATUS_PROVIDER_UNAVAILABLE,
  MUAS_STATUS_CONFLICTING_BELIEFS,
  MUAS_STATUS_WOULD_CREATE_CYCLE,
  MUAS_STATUS_SINGULAR_DESIGN,
  MUAS_STATUS_DEGENERATE_TREATMENT,
  MUAS_STATUS_PROPENSITY_DEGENERATE,
  MUAS_STATUS_UNKNOWN_COLUMN,
  MUAS_STATUS_TREATMENT_NOT_BINARY,
  MUAS_STATUS_PARSE_ERROR,
  MUAS_STATUS_SESSION_CLOSED,
  MUAS_STATUS_UNKNOWN_STEP,
  MUAS_STATUS_UNKNOWN_SESSION,
  MUAS_STATUS_OUT_OF_ORDER,
  MUAS_STATUS_INVALID_INPUT,
  MUAS_STATUS_PAYLOAD_TOO_LARGE,
  MUAS_STATUS_NOT_FOUND,
  MUAS_STATUS_INTERNAL,
} MuasStatus;

/**
 * Outcome model for [`muas_ate_s_learner`].
 */
typedef enum MuasLearner {
  MUAS_LEARNER_OLS = 0,
  MUAS_LEARNER_RIDGE = 1,
} MuasLearner;

/**
 * Opaque causal graph.
 */
typedef struct MuasGraph MuasGraph;

/**
 * Opaque adjustment-set search result.
 */
typedef struct MuasSearch MuasSearch;

/**
 * One edge uncertainty `u(from -> to)` for [`muas_find_muas`].
 */
typedef struct MuasEdgeUncertainty {
  size_t from;
  size_t to;
  double u;
} MuasEdgeUncertainty;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *muas_last_error_message(void);

/**
 * Library version, static storage.
 */
const char *muas_version(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void muas_string_free(char *s);

/**
 * Builds a graph from a row-major `n × n` signed adjacency matrix
 * (`m[i][j] = -1, m[j][i] = 1` for `i -> j`; `1, 1` undirected; `0, 0` none).
 * `names` may be null, giving `V0..V{n-1}`.
 *
 * # Safety
 * `matrix` must point to `n * n` values and `names`, when non-null, to `n` C strings.
 */
enum MuasStatus muas_graph_from_matrix(const int32_t *matrix,
                                       size_t n,
                                       const char *const *names,
                                       struct MuasGraph **out);

/**
 * Builds a graph from `{"nodes": [...], "matrix": [[...]], "edge_meta": {...}}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string.
 */
enum MuasStatus muas_graph_from_json(const char *json, struct MuasGraph **out);

/**
 * # Safety
 * `g` must be a valid graph handle; `out` receives a string for [`muas_string_free`].
 */
enum MuasStatus muas_graph_to_json(const struct MuasGraph *g, char **out);

/**
 * Number of vertices, or 0 for a null handle.
 *
 * # Safety
 * `g` must be a valid graph handle or null.
 */
size_t muas_graph_node_count(const struct MuasGraph *g);

/**
 * # Safety
 * `g` must come from this library or be null.
 */
void muas_graph_free(struct MuasGraph *g);

/**
 * Whether `z` d-separates every vertex of `a` from every vertex of `b`. The
 * graph must be fully directed.
 *
 * # Safety
 * Array pointers must be valid for their lengths; `out` must be writable.
 */
enum MuasStatus muas_d_separated(const struct MuasGraph *g,
                                 const size_t *a,
                                 size_t na,
                                 const size_t *b,
                                 size_t nb,
                                 const size_t *z,
                                 size_t nz,
                                 bool *out);

/**
 * Back-door validity of `z` for the effect of `w` on `y`.
 *
 * # Safety
 * `z` must be valid for `nz` values; `out` must be writable.
 */
enum MuasStatus muas_check_backdoor(const struct MuasGraph *g,
                                    size_t w,
                                    size_t y,
                                    const size_t *z,
                                    size_t nz,
                                    bool *out);

/**
 * Minimum-uncertainty adjustment set with at most `max_size` covariates.
 * Edges not listed in `u` have uncertainty 0.
 *
 * # Safety
 * `u` must be valid for `nu` entries; `out` receives a handle for [`muas_search_free`].
 */
enum MuasStatus muas_find_muas(const struct MuasGraph *g,
                               size_t w,
                               size_t y,
                               const struct MuasEdgeUncertainty *u,
                               size_t nu,
                               size_t max_size,
                               struct MuasSearch **out);

/**
 * Size of the chosen set, or 0 for a null handle.
 *
 * # Safety
 * `r` must be a valid search handle or null.
 */
size_t muas_search_set_len(const struct MuasSearch *r);

/**
 * Copies up to `cap` vertex indices of the chosen set into `buf`; returns the
 * full set size.
 *
 * # Safety
 * `buf` must be writable for `cap` values.
 */
size_t muas_search_set(const struct MuasSearch *r, size_t *buf, size_t cap);

/**
 * Cost of the chosen set; NaN for a null handle.
 *
 * # Safety
 * `r` must be a valid search handle or null.
 */
double muas_search_cost(const struct MuasSearch *r);

/**
 * Whether several candidates shared the minimum cost.
 *
 * # Safety
 * `r` must be a valid search handle or null.
 */
bool muas_search_tie_broken(const struct MuasSearch *r);

/**
 * Full result as JSON (chosen set, candidates, skipped flips).
 *
 * # Safety
 * `r` must be a valid search handle; `out` receives a string for [`muas_string_free`].
 */
enum MuasStatus muas_search_to_json(const struct MuasSearch *r, char **out);

/**
 * # Safety
 * `r` must come from this library or be null.
 */
void muas_search_free(struct MuasSearch *r);

/**
 * Average treatment effect by S-learner regression of `y` on `t` and the
 * `n × d` row-major covariates `x`. `lambda` is used by the ridge learner.
 *
 * # Safety
 * `y`, `t` must hold `n` values, `x` `n * d` values; `out` must be writable.
 */
enum MuasStatus muas_ate_s_learner(const double *y,
                                   const double *t,
                                   const double *x,
                                   size_t n,
                                   size_t d,
                                   enum MuasLearner learner,
                                   double lambda,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MUAS_H */
