#ifndef MCSIM_H
#define MCSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes returned by every fallible function.
 */
typedef enum McsimStatus {
  MCSIM_STATUS_OK = 0,
  MCSIM_STATUS_NULL_POINTER = 1,
  MCSIM_STATUS_INVALID_ARGUMENT = 2,
  MCSIM_STATUS_CONFIG = 3,
  MCSIM_STATUS_SIMULATION = 4,
  MCSIM_STATUS_IO = 5,
  MCSIM_STATUS_BUFFER_TOO_SMALL = 6,
  MCSIM_STATUS_NOT_FOUND = 7,
  MCSIM_STATUS_PANIC = 8,
} McsimStatus;

/*
 Parsed and validated run configuration.
 */
typedef struct McsimConfig McsimConfig;

/*
 Sum-tree dispenser over nonnegative component rates.
 */
typedef struct McsimDispenser McsimDispenser;

/*
 Output files and metrics of a completed run.
 */
typedef struct McsimRun McsimRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *mcsim_version(void);

/*
 Copies the calling thread's last error message into `buf`.

 # Safety
 `buf` must be null or valid for `cap` bytes; `needed` must be null or valid.
 */
enum McsimStatus mcsim_last_error(char *buf, size_t cap, size_t *needed);

/*
 Parses a TOML parameter document for `model` (billiards, deposition,
 ising, telecom or circuitnet) and validates it.

 # Safety
 `model` and `toml` must be NUL-terminated strings; `out_config` must be valid.
 */
enum McsimStatus mcsim_config_parse(const char *model,
                                    const char *toml,
                                    struct McsimConfig **out_config);

/*
 Writes the effective configuration as TOML.

 # Safety
 `config` must come from [`mcsim_config_parse`]; buffers as in [`mcsim_last_error`].
 */
enum McsimStatus mcsim_config_echo(const struct McsimConfig *config,
                                   char *buf,
                                   size_t cap,
                                   size_t *needed);

/*
 # Safety
 `config` must be null or come from [`mcsim_config_parse`], and not be used afterwards.
 */
void mcsim_config_free(struct McsimConfig *config);

/*
 Runs a configuration in memory; nothing is written to disk.

 # Safety
 `config` must come from [`mcsim_config_parse`]; `out_run` must be valid.
 */
enum McsimStatus mcsim_run(const struct McsimConfig *config, struct McsimRun **out_run);

/*
 Copies the contents of output file `name` (for example `events.csv`).

 # Safety
 `run` must come from [`mcsim_run`]; `name` must be NUL-terminated.
 */
enum McsimStatus mcsim_run_file(const struct McsimRun *run,
                                const char *name,
                                char *buf,
                                size_t cap,
                                size_t *needed);

/*
 Copies the value of metric `key` as text.

 # Safety
 As for [`mcsim_run_file`].
 */
enum McsimStatus mcsim_run_metric(const struct McsimRun *run,
                                  const char *key,
                                  char *buf,
                                  size_t cap,
                                  size_t *needed);

/*
 # Safety
 `run` must be null or come from [`mcsim_run`], and not be used afterwards.
 */
void mcsim_run_free(struct McsimRun *run);

/*
 Builds a dispenser over `len` rates.

 # Safety
 `rates` must be valid for `len` reads; `out_dispenser` must be valid.
 */
enum McsimStatus mcsim_dispenser_new(const double *rates,
                                     size_t len,
                                     struct McsimDispenser **out_dispenser);

/*
 Sets the rate of component `index`.

 # Safety
 `dispenser` must come from [`mcsim_dispenser_new`].
 */
enum McsimStatus mcsim_dispenser_update(struct McsimDispenser *dispenser,
                                        size_t index,
                                        double rate);

/*
 Component selected by uniform draw `q` in [0, 1).

 # Safety
 `dispenser` must come from [`mcsim_dispenser_new`]; `out_index` must be valid.
 */
enum McsimStatus mcsim_dispenser_select(const struct McsimDispenser *dispenser,
                                        double q,
                                        size_t *out_index);

/*
 Aggregate rate.

 # Safety
 `dispenser` must come from [`mcsim_dispenser_new`]; `out_total` must be valid.
 */
enum McsimStatus mcsim_dispenser_total(const struct McsimDispenser *dispenser, double *out_total);

/*
 # Safety
 `dispenser` must be null or come from [`mcsim_dispenser_new`], and not be used afterwards.
 */
void mcsim_dispenser_free(struct McsimDispenser *dispenser);

/*
 Runs verification suite `suite` (or `all`) and copies the CSV report.
 `out_passed` receives 1 when every check passed, else 0.

 # Safety
 `suite` must be NUL-terminated; `out_passed` must be valid; buffers as in
 [`mcsim_last_error`]. `fault` may be null.
 */
enum McsimStatus mcsim_verify(const char *suite,
                              uint64_t seed,
                              const char *fault,
                              int32_t *out_passed,
                              char *buf,
                              size_t cap,
                              size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCSIM_H */
