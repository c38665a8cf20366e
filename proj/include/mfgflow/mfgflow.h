/* mfgflow: mean-field-game forward/inverse toolkit, C interface.
 *
 * All functions return mfg_status (MFG_OK on success). On failure,
 * mfg_last_error() returns a thread-local message describing what went wrong.
 * Objects are opaque handles; every *_new / *_run function that produces a
 * handle has a matching *_free.
 */
#ifndef MFGFLOW_H
#define MFGFLOW_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mfg_status {
    MFG_OK = 0,
    MFG_ERR_INVALID_ARG = 1,
    MFG_ERR_DOMAIN = 2,
    MFG_ERR_SOLVER = 3,
    MFG_ERR_IO = 4,
    MFG_ERR_INTERNAL = 5
} mfg_status;

typedef struct mfg_config mfg_config;
typedef struct mfg_result mfg_result;

const char* mfg_version(void);

/* Thread-local message for the most recent failure in this thread. */
const char* mfg_last_error(void);

/* --- configuration ------------------------------------------------------- */

/* Creates a configuration from a built-in preset id (see mfg_catalog_json). */
mfg_status mfg_config_from_preset(const char* preset_id, mfg_config** out);

/* Loads a sectioned key=value config file. */
mfg_status mfg_config_from_file(const char* path, mfg_config** out);

/* Overrides a single key using the config-file names, e.g. "seed", "n_per_axis",
 * "inner", "method", "dir". */
mfg_status mfg_config_set(mfg_config* config, const char* key, const char* value);

void mfg_config_free(mfg_config* config);

/* --- runs ------------------------------------------------------------------ */

/* Forward solve of the preset at its true spatial cost. */
mfg_status mfg_run_forward(const mfg_config* config, mfg_result** out);

/* Synthesize observations and solve the inverse problem. */
mfg_status mfg_run_inverse(const mfg_config* config, mfg_result** out);

/* Synthesize observations only; writes obs_m.csv / obs_v.csv into `dir`. */
mfg_status mfg_run_synthesize(const mfg_config* config, const char* dir);

/* Runs the built-in property suite. `failures` receives the number of failed
 * checks; the report text is returned through mfg_result_report. */
mfg_status mfg_run_check(mfg_result** out, int* failures);

/* --- results ---------------------------------------------------------------- */

/* Scalar results: "lambda_ref", "lambda_rec", "err_m", "err_u", "err_v",
 * "err_lambda", "outer_iterations", "converged", "content_hash". */
mfg_status mfg_result_scalar(const mfg_result* result, const char* name, double* out);

/* Field access: names "reference_m", "reference_u", "reference_v",
 * "recovered_m", "recovered_u", "recovered_v". Fields are row-major with
 * `rows` time levels (1 for stationary). Query sizes with buffer == NULL. */
mfg_status mfg_result_field(const mfg_result* result, const char* name, double* buffer,
                            size_t* rows, size_t* cols);

/* Writes the full result bundle (fields, traces, summary.json) into `dir`. */
mfg_status mfg_result_write(const mfg_result* result, const char* dir);

/* Report text (property-suite output; empty for experiment results). */
const char* mfg_result_report(const mfg_result* result);

void mfg_result_free(mfg_result* result);

/* --- catalog ----------------------------------------------------------------- */

/* JSON array of {id, description} for the built-in presets. Free the returned
 * string with mfg_string_free. */
mfg_status mfg_catalog_json(char** out);

void mfg_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* MFGFLOW_H */
