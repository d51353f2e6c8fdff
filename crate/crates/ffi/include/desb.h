#ifndef DESB_H
#define DESB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum DesbStatus {
  DESB_STATUS_OK = 0,
  DESB_STATUS_NULL_POINTER = 1,
  DESB_STATUS_INVALID_ARGUMENT = 2,
  DESB_STATUS_DIMENSION_MISMATCH = 3,
  DESB_STATUS_INDEX_OUT_OF_RANGE = 4,
  DESB_STATUS_IO = 5,
  DESB_STATUS_PARSE = 6,
  DESB_STATUS_BUFFER_TOO_SMALL = 7,
  DESB_STATUS_PANIC = 8,
} DesbStatus;

/**
 * Train/test data.
 */
typedef struct DesbDataset DesbDataset;

/**
 * Outcome of one optimizer run.
 */
typedef struct DesbRunResult DesbRunResult;

/**
 * Network shape.
 */
typedef struct DesbTopology DesbTopology;

/**
 * Cost split into its parts; `total = mse + penalty`.
 */
typedef struct DesbCost {
  double mse;
  double penalty;
  double total;
} DesbCost;

/**
 * Optimizer settings. Obtain defaults from [`desb_de_config_default`].
 */
typedef struct DesbDeConfig {
  size_t population;
  double weight;
  double crossover;
  bool symmetry_breaking;
  uint64_t max_evals;
  double threshold;
  uint64_t seed;
  /**
   * Rescale infeasible vectors onto the sphere boundary instead of to unit norm.
   */
  bool boundary_penalty;
} DesbDeConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *desb_last_error(void);

/**
 * Parses a topology such as `"1-3-1"`.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum DesbStatus desb_topology_parse(const char *text, struct DesbTopology **out);

/**
 * # Safety
 * `topology` must come from [`desb_topology_parse`] or be null.
 */
void desb_topology_free(struct DesbTopology *topology);

/**
 * Length of the searched parameter vector; 0 for a null handle.
 *
 * # Safety
 * `topology` must be a live handle or null.
 */
size_t desb_topology_param_dim(const struct DesbTopology *topology);

/**
 * Writes the number of symmetric equivalents as a decimal string into `buf`.
 * `needed` receives the required size including the terminating nul, also
 * when the buffer is too small.
 *
 * # Safety
 * `buf` must hold `len` bytes (it may be null when `len` is 0).
 */
enum DesbStatus desb_topology_equivalents(const struct DesbTopology *topology,
                                          char *buf,
                                          size_t len,
                                          size_t *needed);

/**
 * Bundled data set by name. `noise_sigma` and `noise_seed` apply to the
 * regression problems.
 *
 * # Safety
 * `name` must be a nul-terminated string and `out` a valid pointer.
 */
enum DesbStatus desb_dataset_builtin(const char *name,
                                     double noise_sigma,
                                     uint64_t noise_seed,
                                     struct DesbDataset **out);

/**
 * Loads a pair of sample files written by `desb gen`.
 *
 * # Safety
 * Paths must be nul-terminated strings and `out` a valid pointer.
 */
enum DesbStatus desb_dataset_load(const char *train_path,
                                  const char *test_path,
                                  struct DesbDataset **out);

/**
 * Loads a delimited classification file described by a schema file.
 *
 * # Safety
 * Paths must be nul-terminated strings and `out` a valid pointer.
 */
enum DesbStatus desb_dataset_load_classification(const char *data_path,
                                                 const char *schema_path,
                                                 struct DesbDataset **out);

/**
 * # Safety
 * `dataset` must be a live handle or null.
 */
void desb_dataset_free(struct DesbDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle or null.
 */
size_t desb_dataset_train_len(const struct DesbDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle or null.
 */
size_t desb_dataset_test_len(const struct DesbDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle or null.
 */
size_t desb_dataset_input_dim(const struct DesbDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle or null.
 */
size_t desb_dataset_output_dim(const struct DesbDataset *dataset);

/**
 * Penalized training cost of `theta` on the training partition.
 *
 * # Safety
 * `theta` must point to `len` values and `out` must be valid.
 */
enum DesbStatus desb_penalized_cost(const struct DesbTopology *topology,
                                    const struct DesbDataset *dataset,
                                    const double *theta,
                                    size_t len,
                                    bool boundary_penalty,
                                    struct DesbCost *out);

/**
 * Negates the block of hidden neuron `(layer, neuron)` in place. Layers are
 * numbered from 0 at the input, so hidden layers are `1..L-1`.
 *
 * # Safety
 * `theta` must point to `len` writable values.
 */
enum DesbStatus desb_apply_point(const struct DesbTopology *topology,
                                 double *theta,
                                 size_t len,
                                 size_t layer,
                                 size_t neuron);

/**
 * Swaps the blocks of hidden neurons `first` and `second` of `layer` in place.
 *
 * # Safety
 * `theta` must point to `len` writable values.
 */
enum DesbStatus desb_apply_permutation(const struct DesbTopology *topology,
                                       double *theta,
                                       size_t len,
                                       size_t layer,
                                       size_t first,
                                       size_t second);

/**
 * One draw of the distance-reducing heuristic, seeded by `seed`. `theta` is
 * modified in place; `applied` (optional) reports whether it changed.
 *
 * # Safety
 * `theta` and `best` must point to `len` values; `theta` must be writable.
 */
enum DesbStatus desb_mgod_step(const struct DesbTopology *topology,
                               double *theta,
                               const double *best,
                               size_t len,
                               uint64_t seed,
                               bool *applied);

/**
 * Default optimizer settings.
 */
struct DesbDeConfig desb_de_config_default(void);

/**
 * Trains a network on the training partition of `dataset`.
 *
 * # Safety
 * All pointers must be valid; `out` receives a handle to free with
 * [`desb_run_result_free`].
 */
enum DesbStatus desb_run_de(const struct DesbTopology *topology,
                            const struct DesbDataset *dataset,
                            const struct DesbDeConfig *config,
                            struct DesbRunResult **out);

/**
 * # Safety
 * `result` must be a live handle or null.
 */
void desb_run_result_free(struct DesbRunResult *result);

/**
 * # Safety
 * `result` must be a live handle or null.
 */
bool desb_run_result_success(const struct DesbRunResult *result);

/**
 * # Safety
 * `result` must be a live handle or null.
 */
uint64_t desb_run_result_evals(const struct DesbRunResult *result);

/**
 * # Safety
 * `result` must be a live handle or null.
 */
uint64_t desb_run_result_generations(const struct DesbRunResult *result);

/**
 * # Safety
 * `result` and `out` must be valid.
 */
enum DesbStatus desb_run_result_best_cost(const struct DesbRunResult *result, struct DesbCost *out);

/**
 * Copies the best parameter vector into `buf`, which must hold exactly the
 * topology's parameter count.
 *
 * # Safety
 * `buf` must point to `len` writable values.
 */
enum DesbStatus desb_run_result_best_position(const struct DesbRunResult *result,
                                              double *buf,
                                              size_t len);

/**
 * Number of convergence checkpoints.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
size_t desb_run_result_trace_len(const struct DesbRunResult *result);

/**
 * Checkpoint `index`: evaluations so far and best total cost.
 *
 * # Safety
 * `evals` and `cost` must be valid.
 */
enum DesbStatus desb_run_result_trace_get(const struct DesbRunResult *result,
                                          size_t index,
                                          uint64_t *evals,
                                          double *cost);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DESB_H */
