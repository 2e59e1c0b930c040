#ifndef OGAM_H
#define OGAM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum {
  OGAM_STATUS_OK = 0,
  OGAM_STATUS_INVALID_ARGUMENT = 1,
  OGAM_STATUS_RUNTIME_ERROR = 2,
  OGAM_STATUS_IO_ERROR = 3,
} OgamStatus;

/**
 * Opaque streaming estimator handle.
 */
typedef struct OgamStream OgamStream;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread; do not free it.
 */
const char *ogam_last_error(void);

/**
 * Create a stream from a configuration string (same flat key-value syntax
 * as the config file). On success writes the handle to `out`.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out` a valid pointer.
 */
OgamStatus ogam_stream_new(const char *config_toml, OgamStream **out);

/**
 * Restore a stream from a snapshot file written by
 * [`ogam_stream_save_snapshot`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
OgamStatus ogam_stream_from_snapshot(const char *path, OgamStream **out);

/**
 * Push one data block: `x` holds `n * d` covariates row-major in [0,1],
 * `y` holds `n` responses valid for the configured family.
 *
 * # Safety
 * `stream` must come from a constructor; `x` and `y` must point to at
 * least `n * d` and `n` readable doubles.
 */
OgamStatus ogam_stream_push_block(OgamStream *stream, const double *x, const double *y, size_t n);

/**
 * Number of processed blocks.
 *
 * # Safety
 * `stream` must come from a constructor.
 */
size_t ogam_stream_blocks(const OgamStream *stream);

/**
 * Total observations seen.
 *
 * # Safety
 * `stream` must come from a constructor.
 */
size_t ogam_stream_observations(const OgamStream *stream);

/**
 * Covariate dimension d.
 *
 * # Safety
 * `stream` must come from a constructor.
 */
size_t ogam_stream_dimensions(const OgamStream *stream);

/**
 * Nodes per axis of the evaluation grid.
 *
 * # Safety
 * `stream` must come from a constructor.
 */
size_t ogam_stream_grid_points(const OgamStream *stream);

/**
 * Current intercept estimate.
 *
 * # Safety
 * `stream` must come from a constructor.
 */
double ogam_stream_intercept(const OgamStream *stream);

/**
 * Copy component `j` (0-based) into caller buffers of length
 * `ogam_stream_grid_points`: values and h-scaled derivative samples.
 * Either buffer may be null to skip it.
 *
 * # Safety
 * `stream` must come from a constructor; non-null buffers must hold `len`
 * writable doubles.
 */
OgamStatus ogam_stream_component(const OgamStream *stream,
                                 size_t j,
                                 double *values,
                                 double *derivatives,
                                 size_t len);

/**
 * Copy the bandwidth the current estimate was produced at into `h`
 * (length = dimensions).
 *
 * # Safety
 * `stream` must come from a constructor; `h` must hold `len` writable
 * doubles.
 */
OgamStatus ogam_stream_bandwidth(const OgamStream *stream, double *h, size_t len);

/**
 * Persist the stream to a snapshot file.
 *
 * # Safety
 * `stream` must come from a constructor; `path` must be NUL-terminated.
 */
OgamStatus ogam_stream_save_snapshot(const OgamStream *stream, const char *path);

/**
 * Destroy a stream handle. Passing null is a no-op.
 *
 * # Safety
 * `stream` must come from a constructor and must not be used afterwards.
 */
void ogam_stream_free(OgamStream *stream);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OGAM_H */
