#ifndef POLYDESIGN_H
#define POLYDESIGN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes returned by the fallible functions.
 */
typedef enum PdStatus {
  PD_STATUS_OK = 0,
  PD_STATUS_NULL_POINTER = 1,
  PD_STATUS_INVALID_UTF8 = 2,
  PD_STATUS_PARSE = 3,
  PD_STATUS_INVALID_INPUT = 4,
  PD_STATUS_SOLVER = 5,
  PD_STATUS_RECOVERY = 6,
  PD_STATUS_CERTIFICATE = 7,
  PD_STATUS_NUMERICAL = 8,
  PD_STATUS_IO = 9,
  PD_STATUS_OUT_OF_RANGE = 10,
  PD_STATUS_PANIC = 11,
} PdStatus;

/*
 A validated problem description.
 */
typedef struct PdProblem PdProblem;

/*
 Output of [`pd_run`].
 */
typedef struct PdResult PdResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *pd_version(void);

/*
 Message of the last failure on this thread, or null. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *pd_last_error_message(void);

/*
 Parses and validates a problem file given as JSON text.

 # Safety
 `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum PdStatus pd_problem_from_json(const char *json, struct PdProblem **out);

/*
 Example problem on a preset design space; `degree <= 0` keeps the
 preset degree.

 # Safety
 `name` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum PdStatus pd_problem_from_preset(const char *name, int32_t degree, struct PdProblem **out);

/*
 Overrides the seed used for sampling and randomized steps.

 # Safety
 `problem` must be null or a handle from this library.
 */
enum PdStatus pd_problem_set_seed(struct PdProblem *problem, uint64_t seed);

/*
 # Safety
 `problem` must be null or a handle from this library, freed once.
 */
void pd_problem_free(struct PdProblem *problem);

/*
 Solves, recovers and certifies. A result is produced whenever the
 pipeline ran, including when certification failed or the rank condition
 never held; see [`pd_result_outcome`].

 # Safety
 `problem` must be a handle from this library and `out` a valid pointer.
 */
enum PdStatus pd_run(const struct PdProblem *problem, bool check, struct PdResult **out);

/*
 # Safety
 `result` must be null or a handle from this library, freed once.
 */
void pd_result_free(struct PdResult *result);

/*
 `0` certified, `2` rank condition never held, `3` certification failed,
 `-1` for a null handle.

 # Safety
 `result` must be null or a handle from this library.
 */
int32_t pd_result_outcome(const struct PdResult *result);

/*
 Optimal value of the relaxation, NaN for a null handle.

 # Safety
 `result` must be null or a handle from this library.
 */
double pd_result_rho(const struct PdResult *result);

/*
 Number of recovered atoms; zero when recovery failed.

 # Safety
 `result` must be null or a handle from this library.
 */
size_t pd_result_num_atoms(const struct PdResult *result);

/*
 Dimension of the design space.

 # Safety
 `result` must be null or a handle from this library.
 */
size_t pd_result_dimension(const struct PdResult *result);

/*
 Copies atom `index` into `coords` (length `len >= dimension`) and its
 weight into `weight`.

 # Safety
 `result` must be a handle from this library, `coords` must point to
 `len` writable doubles and `weight` to one.
 */
enum PdStatus pd_result_atom(const struct PdResult *result,
                             size_t index,
                             double *coords,
                             size_t len,
                             double *weight);

/*
 Whether the equivalence-theorem checks passed.

 # Safety
 `result` must be null or a handle from this library.
 */
bool pd_result_certified(const struct PdResult *result);

/*
 Serializes the full result; release the string with [`pd_string_free`].

 # Safety
 `result` must be a handle from this library and `out` a valid pointer.
 */
enum PdStatus pd_result_to_json(const struct PdResult *result, char **out);

/*
 # Safety
 `s` must be null or a string returned by this library, freed once.
 */
void pd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYDESIGN_H */
