#ifndef PREFSQA_H
#define PREFSQA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  PSQA_STATUS_OK = 0,
  PSQA_STATUS_NULL_POINTER = 1,
  PSQA_STATUS_INVALID_ARGUMENT = 2,
  PSQA_STATUS_IO = 3,
  PSQA_STATUS_FORMAT = 4,
  PSQA_STATUS_AUDIO = 5,
  PSQA_STATUS_SHAPE = 6,
  PSQA_STATUS_NON_FINITE = 7,
  PSQA_STATUS_CHECKPOINT = 8,
  PSQA_STATUS_PANIC = 9,
} PsqaStatus;

/**
 * A trained network and its feature extractors.
 */
typedef struct PsqaScorer PsqaScorer;

/**
 * Predicted scores for an ordered pair.
 */
typedef struct {
  double mos_x;
  double mos_y;
  /**
   * In (-1, 1); positive when x is predicted better.
   */
  double preference;
} PsqaPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *psqa_version(void);

/**
 * Message of the last failed call on this thread, or NULL if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *psqa_last_error(void);

/**
 * Loads a checkpoint archive and builds its feature extractors.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer. On
 * success `*out` owns a scorer that must be released with
 * [`psqa_scorer_free`].
 */
PsqaStatus psqa_scorer_open(const char *path, PsqaScorer **out);

/**
 * # Safety
 * `scorer` must be NULL or a handle from [`psqa_scorer_open`] not yet freed.
 */
void psqa_scorer_free(PsqaScorer *scorer);

/**
 * Predicted MOS of one mono waveform.
 *
 * # Safety
 * `samples` must point to `len` readable values and `out_mos` must be valid.
 */
PsqaStatus psqa_scorer_score_samples(const PsqaScorer *scorer,
                                     const double *samples,
                                     size_t len,
                                     uint32_t sample_rate,
                                     double *out_mos);

/**
 * Predicted MOS of a WAV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_mos` must be valid.
 */
PsqaStatus psqa_scorer_score_wav(const PsqaScorer *scorer, const char *path, double *out_mos);

/**
 * Scores both waveforms and their preference. Both share `sample_rate`.
 *
 * # Safety
 * `x` and `y` must point to `x_len` and `y_len` readable values and `out`
 * must be valid.
 */
PsqaStatus psqa_scorer_compare_samples(const PsqaScorer *scorer,
                                       const double *x,
                                       size_t x_len,
                                       const double *y,
                                       size_t y_len,
                                       uint32_t sample_rate,
                                       PsqaPrediction *out);

/**
 * Same as [`psqa_scorer_compare_samples`] for two WAV files.
 *
 * # Safety
 * Both paths must be NUL-terminated strings and `out` must be valid.
 */
PsqaStatus psqa_scorer_compare_wav(const PsqaScorer *scorer,
                                   const char *x_path,
                                   const char *y_path,
                                   PsqaPrediction *out);

/**
 * Preference of x over y from two absolute scores.
 *
 * # Safety
 * `out` must be valid.
 */
PsqaStatus psqa_preference_score(double mos_x, double mos_y, double *out);

/**
 * Fraction of `n` pairs where the sign of `pref_hat[i]` equals `labels[i]`
 * (each -1, 0 or 1).
 *
 * # Safety
 * `pref_hat` and `labels` must each point to `n` readable values and `out`
 * must be valid.
 */
PsqaStatus psqa_preference_accuracy(const double *pref_hat,
                                    const int8_t *labels,
                                    size_t n,
                                    double *out);

/**
 * Distance used for content clustering: transcripts are lowercased and
 * stripped of punctuation, then the edit distance is divided by the longer
 * length.
 *
 * # Safety
 * `a` and `b` must be NUL-terminated UTF-8 strings and `out` must be valid.
 */
PsqaStatus psqa_normalized_levenshtein(const char *a, const char *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREFSQA_H */
