#ifndef LOWERTAIL_H
#define LOWERTAIL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The nonzero library codes match the CLI exit codes.
 */
typedef enum {
  LT_STATUS_OK = 0,
  LT_STATUS_FAILURE = 1,
  LT_STATUS_INVALID_INPUT = 2,
  LT_STATUS_RESOURCE = 3,
  LT_STATUS_NOT_CONVERGED = 4,
  LT_STATUS_NULL_POINTER = 5,
  LT_STATUS_BUFFER_TOO_SMALL = 6,
  LT_STATUS_PANIC = 7,
} lt_status;

/**
 * Cut-norm evaluation method.
 */
typedef enum {
  LT_CUT_METHOD_EXACT = 0,
  LT_CUT_METHOD_HEURISTIC = 1,
  LT_CUT_METHOD_SPECTRAL = 2,
} lt_cut_method;

/**
 * Opaque handle to an exact conditional law.
 */
typedef struct lt_exact lt_exact;

/**
 * Opaque graph handle.
 */
typedef struct lt_graph lt_graph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lt_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t lt_last_error_message(char *buf, size_t len);

/**
 * Empty graph on `n` vertices.
 *
 * # Safety
 * `out` must be valid for writes.
 */
lt_status lt_graph_new(size_t n, lt_graph **out);

/**
 * Named graph such as `K3`, `C4` or `P3`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` valid for writes.
 */
lt_status lt_graph_builtin(const char *name, lt_graph **out);

/**
 * # Safety
 * `g` must be null or a handle from this library not yet freed.
 */
void lt_graph_free(lt_graph *g);

/**
 * Adds edge `{a, b}`; `added` receives 1 if it was new.
 *
 * # Safety
 * `g` must be a live handle and `added` null or valid for writes.
 */
lt_status lt_graph_add_edge(lt_graph *g, size_t a, size_t b, int32_t *added);

/**
 * # Safety
 * `g` must be a live handle and `out` valid for writes.
 */
lt_status lt_graph_edge_count(const lt_graph *g, size_t *out);

/**
 * Number of copies of `h` in `g`.
 *
 * # Safety
 * `h`, `g` must be live handles and `out` valid for writes.
 */
lt_status lt_count_copies(const lt_graph *h, const lt_graph *g, uint64_t *out);

/**
 * Root of the threshold equation for `e(H) = r`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
lt_status lt_eta_threshold(size_t r, double *out);

/**
 * Solves the variational problem for `h` on `n` vertices: the sparse limit
 * when `p <= 0`, otherwise the finite-`p` problem. `q_out` receives the
 * minimizer in slot order when non-null. On `LT_NOT_CONVERGED` the outputs
 * hold the best iterate.
 *
 * # Safety
 * `h` must be a live handle, `value` valid for writes, and `q_out` null or
 * valid for `q_len` doubles.
 */
lt_status lt_solve(const lt_graph *h,
                   size_t n,
                   double p,
                   double eta,
                   uint64_t seed,
                   double *value,
                   double *q_out,
                   size_t q_len);

/**
 * Cut norm (normalized by `n^2`) of a row-major `n x n` matrix.
 *
 * # Safety
 * `a` must be valid for `n * n` doubles and `out` valid for writes.
 */
lt_status lt_cut_norm(const double *a, size_t n, lt_cut_method method, uint64_t seed, double *out);

/**
 * Enumerates the law of `G(n, p)` conditioned on the lower-tail event of `h`.
 *
 * # Safety
 * `h` must be a live handle and `out` valid for writes.
 */
lt_status lt_exact_new(const lt_graph *h, size_t n, double p, double eta, lt_exact **out);

/**
 * # Safety
 * `e` must be null or a handle from this library not yet freed.
 */
void lt_exact_free(lt_exact *e);

/**
 * Number of edge slots `C(n, 2)`.
 *
 * # Safety
 * `e` must be a live handle and `out` valid for writes.
 */
lt_status lt_exact_slots(const lt_exact *e, size_t *out);

/**
 * Probability of the event and conditional mean of the pattern count.
 *
 * # Safety
 * `e` must be a live handle; outputs must be null or valid for writes.
 */
lt_status lt_exact_summary(const lt_exact *e, double *probability, double *mean_count);

/**
 * Conditional edge marginals in slot order.
 *
 * # Safety
 * `e` must be a live handle and `buf` valid for `len` doubles.
 */
lt_status lt_exact_marginals(const lt_exact *e, double *buf, size_t len);

/**
 * Entropy-increment energy of `W` with both sides of the Cauchy-Schwarz bound.
 *
 * # Safety
 * `e` must be a live handle, `w` valid for `w_len` entries (or null when
 * `w_len` is 0), and outputs null or valid for writes.
 */
lt_status lt_exact_energy(const lt_exact *e,
                          const size_t *w,
                          size_t w_len,
                          double *energy_out,
                          double *lhs,
                          double *rhs);

/**
 * Runs `chains` Metropolis chains on the conditioned law and reports the mean
 * pattern count and the effective sample size.
 *
 * # Safety
 * `h` must be a live handle; outputs must be null or valid for writes.
 */
lt_status lt_mcmc_mean_count(const lt_graph *h,
                             size_t n,
                             double p,
                             double eta,
                             uint64_t steps,
                             size_t chains,
                             uint64_t seed,
                             double *mean,
                             double *ess);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOWERTAIL_H */
