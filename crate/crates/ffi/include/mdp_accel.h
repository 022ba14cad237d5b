#ifndef MDP_ACCEL_H
#define MDP_ACCEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MdpaStatus {
  MDPA_STATUS_OK = 0,
  MDPA_STATUS_NULL_POINTER = 1,
  MDPA_STATUS_INVALID_UTF8 = 2,
  MDPA_STATUS_IO = 3,
  MDPA_STATUS_PARSE = 4,
  MDPA_STATUS_VALIDATION = 5,
  MDPA_STATUS_INVALID_ARGUMENT = 6,
  MDPA_STATUS_INVALID_COMBINATION = 7,
  MDPA_STATUS_NOT_FEASIBLE = 8,
  MDPA_STATUS_BUFFER_TOO_SMALL = 9,
  // A Rust panic was caught at the boundary.
  MDPA_STATUS_INTERNAL = 10,
} MdpaStatus;

typedef enum MdpaOperator {
  MDPA_OPERATOR_STANDARD = 0,
  MDPA_OPERATOR_JACOBI = 1,
  MDPA_OPERATOR_GAUSS_SEIDEL = 2,
  MDPA_OPERATOR_GAUSS_SEIDEL_JACOBI = 3,
  MDPA_OPERATOR_TOTAL_REWARD = 4,
} MdpaOperator;

typedef enum MdpaAccelerator {
  MDPA_ACCELERATOR_NONE = 0,
  MDPA_ACCELERATOR_PROJECTIVE = 1,
  MDPA_ACCELERATOR_LINEAR_EXTENSION = 2,
} MdpaAccelerator;

// Opaque model handle.
typedef struct MdpaModel MdpaModel;

// Opaque solve report handle.
typedef struct MdpaReport MdpaReport;

// Solver settings. `op` takes an `MdpaOperator` value and `accel` an
// `MdpaAccelerator` value.
typedef struct MdpaSolveOptions {
  uint32_t op;
  uint32_t accel;
  double epsilon;
  double beta;
  size_t max_iterations;
  bool membership_checks;
} MdpaSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *mdpa_last_error_message(void);

// Static name of a status code.
const char *mdpa_status_name(enum MdpaStatus status);

// Standard backup, no accelerator, epsilon 1e-3, checks on.
struct MdpaSolveOptions mdpa_solve_options_default(void);

// Parse and validate a model from a NUL-terminated JSON string.
enum MdpaStatus mdpa_model_from_json(const char *json, struct MdpaModel **out);

enum MdpaStatus mdpa_model_load(const char *path, struct MdpaModel **out);

// Random model with nonzeros spread uniformly over each row.
enum MdpaStatus mdpa_model_generate_uniform(size_t states,
                                            double density,
                                            double discount,
                                            uint64_t seed,
                                            struct MdpaModel **out);

// Random model with nonzeros in a band around the diagonal.
enum MdpaStatus mdpa_model_generate_band(size_t states,
                                         size_t bandwidth,
                                         double discount,
                                         uint64_t seed,
                                         struct MdpaModel **out);

// Random total-reward model whose last state is absorbing.
enum MdpaStatus mdpa_model_generate_total_reward(size_t states,
                                                 double density,
                                                 uint64_t seed,
                                                 struct MdpaModel **out);

void mdpa_model_free(struct MdpaModel *model);

// Number of states, 0 for NULL.
size_t mdpa_model_num_states(const struct MdpaModel *model);

// Discount factor (1 for total-reward models), NaN for NULL.
double mdpa_model_discount(const struct MdpaModel *model);

// Solve from the automatic starting point. `options` may be NULL for the
// defaults. A run that hits the iteration cap still succeeds; check
// [`mdpa_report_converged`].
enum MdpaStatus mdpa_solve(const struct MdpaModel *model,
                           const struct MdpaSolveOptions *options,
                           struct MdpaReport **out);

void mdpa_report_free(struct MdpaReport *report);

size_t mdpa_report_iterations(const struct MdpaReport *report);

bool mdpa_report_converged(const struct MdpaReport *report);

double mdpa_report_wall_ms(const struct MdpaReport *report);

size_t mdpa_report_fallbacks(const struct MdpaReport *report);

// Residual of the last iteration.
double mdpa_report_final_residual(const struct MdpaReport *report);

// Length of the value and policy arrays.
size_t mdpa_report_num_states(const struct MdpaReport *report);

// Copy the final value into `buf`, which must hold
// [`mdpa_report_num_states`] doubles.
enum MdpaStatus mdpa_report_value(const struct MdpaReport *report, double *buf, size_t len);

// Copy the final policy (action index per state) into `buf`.
enum MdpaStatus mdpa_report_policy(const struct MdpaReport *report, size_t *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MDP_ACCEL_H */
