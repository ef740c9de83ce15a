#ifndef DOPT_H
#define DOPT_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum DoptStatus {
  DOPT_STATUS_OK = 0,
  DOPT_STATUS_NULL_POINTER = 1,
  DOPT_STATUS_INVALID_ARGUMENT = 2,
  DOPT_STATUS_CONFIG = 3,
  DOPT_STATUS_GRAPH_ERROR = 4,
  DOPT_STATUS_NOT_STOCHASTIC = 5,
  // A run stopped at its cap or diverged.
  DOPT_STATUS_NOT_CONVERGED = 6,
  DOPT_STATUS_NUMERICAL = 7,
  DOPT_STATUS_BUFFER_TOO_SMALL = 8,
  DOPT_STATUS_IO = 9,
  DOPT_STATUS_PANIC = 10,
} DoptStatus;

// A graph snapshot (self-loops included).
typedef struct DoptGraph DoptGraph;

// A weight matrix built from a graph.
typedef struct DoptMatrix DoptMatrix;

// Result of a consensus or push-sum run.
typedef struct DoptRun DoptRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dopt_version(void);

// Message for the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *dopt_last_error_message(void);

// Builds a graph. `family` uses the CLI names, e.g. `"path"`,
// `"erdos-renyi:1"`, `"gridk:3"`.
//
// # Safety
// `family` must be a NUL-terminated string; `out` must be writable.
enum DoptStatus dopt_graph_new(const char *family, size_t n, uint64_t seed, struct DoptGraph **out);

// Builds a graph from `m` arcs given as `(from[i], to[i])`. Self-loops are
// added to every node.
//
// # Safety
// `from` and `to` must each point to `m` readable values; `out` must be writable.
enum DoptStatus dopt_graph_from_edges(size_t n,
                                      bool directed,
                                      const size_t *from,
                                      const size_t *to,
                                      size_t m,
                                      struct DoptGraph **out);

// # Safety
// `graph` must be NULL or a handle from this library not yet freed.
void dopt_graph_free(struct DoptGraph *graph);

// Node count, or 0 for a NULL handle.
//
// # Safety
// `graph` must be NULL or a live handle.
size_t dopt_graph_node_count(const struct DoptGraph *graph);

// # Safety
// `graph` must be NULL or a live handle.
bool dopt_graph_is_directed(const struct DoptGraph *graph);

// # Safety
// `graph` must be NULL or a live handle.
bool dopt_graph_is_connected(const struct DoptGraph *graph);

// Weight matrix for `rule`: `"metropolis"`, `"lazy-metropolis"`,
// `"equal-neighbor"`, `"epsilon:<eps>"` or `"push-sum"`.
//
// # Safety
// `graph` must be a live handle, `rule` a NUL-terminated string and `out` writable.
enum DoptStatus dopt_matrix_new(const struct DoptGraph *graph,
                                const char *rule,
                                struct DoptMatrix **out);

// # Safety
// `matrix` must be NULL or a live handle.
void dopt_matrix_free(struct DoptMatrix *matrix);

// Row-major entries into `out`, which must hold `n * n` values.
//
// # Safety
// `matrix` must be a live handle; `out` must point to `len` writable values.
enum DoptStatus dopt_matrix_entries(const struct DoptMatrix *matrix, double *out, size_t len);

// Second-largest singular value.
//
// # Safety
// `matrix` must be a live handle and `out` writable.
enum DoptStatus dopt_matrix_sigma2(const struct DoptMatrix *matrix, double *out);

// Runs `x <- A x` on a fixed graph until the deviation from the initial
// mean shrinks by `eps`. `cap = 0` selects the default cap. A run that hits
// its cap still yields a handle; query it with [`dopt_run_t_eps`].
//
// # Safety
// `graph` must be a live handle, `rule` a NUL-terminated string, `x0` must
// point to `n` values and `out` must be writable.
enum DoptStatus dopt_consensus(const struct DoptGraph *graph,
                               const char *rule,
                               const double *x0,
                               size_t n,
                               double eps,
                               size_t cap,
                               struct DoptRun **out);

// # Safety
// `run` must be NULL or a live handle.
void dopt_run_free(struct DoptRun *run);

// First step meeting the tolerance; `DOPT_STATUS_NOT_CONVERGED` if the cap was hit.
//
// # Safety
// `run` must be a live handle and `out` writable.
enum DoptStatus dopt_run_t_eps(const struct DoptRun *run, size_t *out);

// Number of recorded rows (steps + 1).
//
// # Safety
// `run` must be NULL or a live handle.
size_t dopt_run_len(const struct DoptRun *run);

// Per-step consensus error; `out` must hold [`dopt_run_len`] values.
//
// # Safety
// `run` must be a live handle; `out` must point to `len` writable values.
enum DoptStatus dopt_run_errors(const struct DoptRun *run, double *out, size_t len);

// Final node values (ratios for push-sum).
//
// # Safety
// `run` must be a live handle; `out` must point to `len` writable values.
enum DoptStatus dopt_run_final_state(const struct DoptRun *run, double *out, size_t len);

// Runs a JSON experiment config, as accepted by `dopt --config`, and
// returns its summary (or scaling report) as JSON in `*out`. Output paths in
// the config are honored.
//
// # Safety
// `config` must be a NUL-terminated string and `out` writable. Free the
// result with [`dopt_string_free`].
enum DoptStatus dopt_run_experiment(const char *config, char **out);

// # Safety
// `s` must be NULL or a string returned by this library, not yet freed.
void dopt_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOPT_H */
