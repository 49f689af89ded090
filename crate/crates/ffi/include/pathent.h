#ifndef PATHENT_H
#define PATHENT_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Detector channel codes as stored in tag files.
 */
#define PATHENT_CHANNEL_DH 0

#define PATHENT_CHANNEL_DV 1

#define PATHENT_CHANNEL_SYNC 2

#define PATHENT_CHANNEL_AUX 3

/**
 * Result code of every fallible call.
 */
typedef enum PathentStatus {
  PATHENT_STATUS_OK = 0,
  PATHENT_STATUS_NULL_POINTER = 1,
  PATHENT_STATUS_INVALID_PARAMETER = 2,
  PATHENT_STATUS_EMPTY_INPUT = 3,
  PATHENT_STATUS_DURATION_MISMATCH = 4,
  PATHENT_STATUS_INFEASIBLE = 5,
  PATHENT_STATUS_NON_CONVERGENCE = 6,
  PATHENT_STATUS_SINGULAR = 7,
  PATHENT_STATUS_DEGENERATE = 8,
  PATHENT_STATUS_QUADRATURE = 9,
  PATHENT_STATUS_UNDEFINED = 10,
  PATHENT_STATUS_BAD_TAG_FILE = 11,
  PATHENT_STATUS_CONFIG = 12,
  PATHENT_STATUS_IO = 13,
  PATHENT_STATUS_BUFFER_TOO_SMALL = 14,
  PATHENT_STATUS_PANIC = 15,
} PathentStatus;

typedef enum PathentInversion {
  PATHENT_INVERSION_VERBATIM = 0,
  PATHENT_INVERSION_SELF_CONSISTENT = 1,
} PathentInversion;

/**
 * Opaque owned g² histogram.
 */
typedef struct PathentG2Histogram PathentG2Histogram;

/**
 * Opaque owned tag stream.
 */
typedef struct PathentTagStream PathentTagStream;

typedef struct PathentG2Model {
  double beta;
  double gamma1;
  double gamma2;
  double rho;
} PathentG2Model;

typedef struct PathentG2Fit {
  struct PathentG2Model model;
  double beta_err;
  double gamma1_err;
  double gamma2_err;
  double rho_err;
  double chi2;
  uint64_t dof;
  uint64_t iterations;
} PathentG2Fit;

typedef struct PathentPopulations {
  double p0;
  double p1;
  double p2;
  double p0_err;
  double p1_err;
  double p2_err;
} PathentPopulations;

/**
 * Window occupation counts and detected populations for one window length.
 */
typedef struct PathentWindowCounts {
  double window_ns;
  uint64_t window_count;
  uint64_t n0;
  uint64_t n1;
  uint64_t n2;
  uint64_t same_channel_multi;
  struct PathentPopulations detected;
} PathentWindowCounts;

typedef struct PathentConcurrenceInput {
  double window_ns;
  double visibility;
  double visibility_err;
  double yc;
  double yc_err;
  double p1;
  double p;
} PathentConcurrenceInput;

typedef struct PathentConcurrence {
  double c_n;
  double c_n_err;
  double concurrence;
  double total_lower_bound;
  bool clamped;
} PathentConcurrence;

typedef struct PathentOraclePopulations {
  double window_ns;
  double mu;
  double g2_detected;
  double p0;
  double p1;
  double p2;
  bool regime_warning;
} PathentOraclePopulations;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *pathent_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pathent_version(void);

/**
 * Reads a tag file into a new stream handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `stream` writable.
 */
enum PathentStatus pathent_tagstream_read(const char *path, struct PathentTagStream **stream);

/**
 * Writes a stream to a tag file.
 *
 * # Safety
 * `stream` must be a live handle and `path` a NUL-terminated string.
 */
enum PathentStatus pathent_tagstream_write(const struct PathentTagStream *stream, const char *path);

/**
 * Builds a validated stream from parallel arrays of times (ps) and channel
 * codes.
 *
 * # Safety
 * `times` and `channels` must point to `len` readable elements (either may
 * be null when `len` is 0) and `stream` must be writable.
 */
enum PathentStatus pathent_tagstream_from_arrays(const uint64_t *times,
                                                 const uint8_t *channels,
                                                 size_t len,
                                                 uint64_t duration_ps,
                                                 uint64_t resolution_ps,
                                                 struct PathentTagStream **stream);

/**
 * New stream holding only the tags of one channel.
 *
 * # Safety
 * `stream` must be a live handle and `selected` writable.
 */
enum PathentStatus pathent_tagstream_select(const struct PathentTagStream *stream,
                                            uint8_t channel,
                                            struct PathentTagStream **selected);

/**
 * Number of tags, 0 for a null handle.
 *
 * # Safety
 * `stream` must be null or a live handle.
 */
size_t pathent_tagstream_len(const struct PathentTagStream *stream);

/**
 * Acquisition length in ps, 0 for a null handle.
 *
 * # Safety
 * `stream` must be null or a live handle.
 */
uint64_t pathent_tagstream_duration(const struct PathentTagStream *stream);

/**
 * Timing resolution in ps, 0 for a null handle.
 *
 * # Safety
 * `stream` must be null or a live handle.
 */
uint64_t pathent_tagstream_resolution(const struct PathentTagStream *stream);

/**
 * Copies up to `capacity` tags into the caller's arrays and stores the
 * number written in `written`. Returns `BufferTooSmall` (after filling the
 * buffer) if the stream holds more tags.
 *
 * # Safety
 * `times` and `channels` must have room for `capacity` elements.
 */
enum PathentStatus pathent_tagstream_copy(const struct PathentTagStream *stream,
                                          uint64_t *times,
                                          uint8_t *channels,
                                          size_t capacity,
                                          size_t *written);

/**
 * Releases a stream handle. Null is ignored.
 *
 * # Safety
 * `stream` must be null or a handle not yet freed.
 */
void pathent_tagstream_free(struct PathentTagStream *stream);

/**
 * Start-stop g² histogram of `b` relative to `a`.
 *
 * # Safety
 * `a`, `b` must be live handles and `hist` writable.
 */
enum PathentStatus pathent_g2_estimate(const struct PathentTagStream *a,
                                       const struct PathentTagStream *b,
                                       double bin_width_ns,
                                       double tau_max_ns,
                                       struct PathentG2Histogram **hist);

/**
 * Number of bins, 0 for a null handle.
 *
 * # Safety
 * `hist` must be null or a live handle.
 */
size_t pathent_g2_len(const struct PathentG2Histogram *hist);

/**
 * Copies bin centres (ns), normalised g², standard errors and raw counts.
 * Any output pointer may be null to skip it; non-null ones need room for
 * `pathent_g2_len` elements.
 *
 * # Safety
 * `hist` must be a live handle; output arrays must be large enough.
 */
enum PathentStatus pathent_g2_copy(const struct PathentG2Histogram *hist,
                                   size_t capacity,
                                   double *tau_ns,
                                   double *g2,
                                   double *stderr,
                                   uint64_t *counts);

/**
 * Weighted fit of the background-corrected three-level g² model. With
 * `fit_rho` false, ρ stays at `initial.rho`.
 *
 * # Safety
 * `hist` must be a live handle, `initial` readable and `fit` writable.
 */
enum PathentStatus pathent_g2_fit(const struct PathentG2Histogram *hist,
                                  const struct PathentG2Model *initial,
                                  bool fit_rho,
                                  struct PathentG2Fit *fit);

/**
 * Releases a histogram handle. Null is ignored.
 *
 * # Safety
 * `hist` must be null or a handle not yet freed.
 */
void pathent_g2_free(struct PathentG2Histogram *hist);

/**
 * Classifies contiguous windows of `window_ns` by which detectors fired.
 * `dh` and `dv` hold the two path detectors and must share a duration.
 *
 * # Safety
 * `dh`, `dv` must be live handles and `counts` writable.
 */
enum PathentStatus pathent_window_populations(const struct PathentTagStream *dh,
                                              const struct PathentTagStream *dv,
                                              double window_ns,
                                              struct PathentWindowCounts *counts);

/**
 * Undoes detection loss `eta` (with uncertainty `eta_err`). `clamped`, if
 * non-null, reports whether a negative population was set to zero.
 *
 * # Safety
 * `detected` must be readable, `corrected` writable, `clamped` null or
 * writable.
 */
enum PathentStatus pathent_invert_losses(const struct PathentPopulations *detected,
                                         double eta,
                                         double eta_err,
                                         enum PathentInversion mode,
                                         struct PathentPopulations *corrected,
                                         bool *clamped);

/**
 * Two-photon contamination `y_c` of populations spread over `modes` modes,
 * with its propagated error.
 *
 * # Safety
 * `pops` must be readable; `yc` writable; `yc_err` null or writable.
 */
enum PathentStatus pathent_contamination(const struct PathentPopulations *pops,
                                         uint32_t modes,
                                         double *yc,
                                         double *yc_err);

/**
 * Normalised and total concurrence from visibility and contamination.
 *
 * # Safety
 * `input` must be readable and `result` writable.
 */
enum PathentStatus pathent_concurrence(const struct PathentConcurrenceInput *input,
                                       struct PathentConcurrence *result);

/**
 * Window-averaged g² for the model in closed form.
 *
 * # Safety
 * `model` must be readable and `value` writable.
 */
enum PathentStatus pathent_g2_detected(const struct PathentG2Model *model,
                                       double window_ns,
                                       double *value);

/**
 * Same quantity by adaptive quadrature.
 *
 * # Safety
 * `model` must be readable and `value` writable.
 */
enum PathentStatus pathent_g2_detected_numeric(const struct PathentG2Model *model,
                                               double window_ns,
                                               double *value);

/**
 * Window-averaged g² of a two-level antibunching dip with rate `gamma`
 * (1/ns). NaN for non-positive inputs.
 */
double pathent_g2_detected_simple(double gamma, double window_ns);

/**
 * Low-occupation populations implied by the g² model and a photon flux.
 *
 * # Safety
 * `model` must be readable and `pops` writable.
 */
enum PathentStatus pathent_populations_from_g2(const struct PathentG2Model *model,
                                               double flux_per_s,
                                               double window_ns,
                                               struct PathentOraclePopulations *pops);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATHENT_H */
