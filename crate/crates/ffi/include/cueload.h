#ifndef CUELOAD_H
#define CUELOAD_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum CueloadTextScope {
  CUELOAD_TEXT_SCOPE_EXPLAINER = 0,
  CUELOAD_TEXT_SCOPE_BOTH = 1,
} CueloadTextScope;

typedef enum CueloadStatus {
  CUELOAD_STATUS_OK = 0,
  CUELOAD_STATUS_NULL_ARGUMENT = 1,
  CUELOAD_STATUS_INVALID_ARGUMENT = 2,
  CUELOAD_STATUS_PARSE_ERROR = 3,
  CUELOAD_STATUS_DATA_ERROR = 4,
  CUELOAD_STATUS_IO_ERROR = 5,
  CUELOAD_STATUS_PANIC = 6,
} CueloadStatus;

/**
 * Understanding states in class-index order.
 */
typedef enum CueloadState {
  CUELOAD_STATE_U = 0,
  CUELOAD_STATE_PU = 1,
  CUELOAD_STATE_NU = 2,
  CUELOAD_STATE_MU = 3,
} CueloadState;

/**
 * Parsed corpus with its context windows.
 */
typedef struct CueloadCorpus CueloadCorpus;

/**
 * Quantified feature table.
 */
typedef struct CueloadFeatures CueloadFeatures;

typedef struct CueloadQuantifyOptions {
  double lambda;
  uint32_t ngram_order;
  uint32_t gaze_order;
  double smoothing_k;
  enum CueloadTextScope text_scope;
} CueloadQuantifyOptions;

/**
 * One feature row. Cue order: information value, gaze entropy, syntactic
 * complexity, average dependency length. Missing values are NaN.
 */
typedef struct CueloadFeatureRow {
  enum CueloadState label;
  double raw[4];
  double normalized[4];
} CueloadFeatureRow;

typedef struct CueloadKruskal {
  double h;
  double p;
  double eta_squared;
  uint32_t df;
} CueloadKruskal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cueload_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next cueload call on the same thread.
 */
const char *cueload_last_error(void);

/**
 * Defaults used by the command-line tool.
 */
struct CueloadQuantifyOptions cueload_quantify_options_default(void);

/**
 * Loads a corpus from files. `gaze_path` may be NULL.
 *
 * # Safety
 * Paths must be NULL or valid NUL-terminated strings; `out` must be a valid
 * pointer.
 */
enum CueloadStatus cueload_corpus_load(const char *transcripts_path,
                                       const char *gaze_path,
                                       const char *annotations_path,
                                       struct CueloadCorpus **out);

/**
 * Parses a corpus from in-memory buffers. `gaze` may be NULL.
 *
 * # Safety
 * Each non-NULL buffer must be readable for its length; `out` must be a
 * valid pointer.
 */
enum CueloadStatus cueload_corpus_parse(const uint8_t *transcripts,
                                        size_t transcripts_len,
                                        const uint8_t *gaze,
                                        size_t gaze_len,
                                        const uint8_t *annotations,
                                        size_t annotations_len,
                                        struct CueloadCorpus **out);

/**
 * Number of context windows (one per annotation); 0 for NULL.
 *
 * # Safety
 * `corpus` must be NULL or a live handle.
 */
size_t cueload_corpus_window_count(const struct CueloadCorpus *corpus);

/**
 * # Safety
 * `corpus` must be NULL or a handle not yet freed.
 */
void cueload_corpus_free(struct CueloadCorpus *corpus);

/**
 * Quantifies every window; normalized values are fitted on all windows.
 * `options` may be NULL for defaults.
 *
 * # Safety
 * `corpus` must be a live handle, `options` NULL or valid, `out` valid.
 */
enum CueloadStatus cueload_quantify(const struct CueloadCorpus *corpus,
                                    const struct CueloadQuantifyOptions *options,
                                    struct CueloadFeatures **out);

/**
 * Number of rows; 0 for NULL.
 *
 * # Safety
 * `features` must be NULL or a live handle.
 */
size_t cueload_features_len(const struct CueloadFeatures *features);

/**
 * # Safety
 * `features` must be a live handle and `out` valid.
 */
enum CueloadStatus cueload_features_row(const struct CueloadFeatures *features,
                                        size_t index,
                                        struct CueloadFeatureRow *out);

/**
 * Window id of a row (`dialogue:utterance`), or NULL when out of range.
 * Owned by the handle.
 *
 * # Safety
 * `features` must be NULL or a live handle.
 */
const char *cueload_features_window_id(const struct CueloadFeatures *features, size_t index);

/**
 * Feature table in the CSV layout of the command-line tool, or NULL on
 * error. Release with [`cueload_string_free`].
 *
 * # Safety
 * `features` must be NULL or a live handle.
 */
char *cueload_features_csv(const struct CueloadFeatures *features);

/**
 * # Safety
 * `features` must be NULL or a handle not yet freed.
 */
void cueload_features_free(struct CueloadFeatures *features);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void cueload_string_free(char *s);

/**
 * Syntactic complexity score from tree length, distinct head count and
 * depth (in nodes).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CueloadStatus cueload_syntactic_complexity(size_t length,
                                                size_t heads,
                                                size_t depth,
                                                double lambda,
                                                double *out);

/**
 * Tie-corrected Kruskal-Wallis test over `n` observations assigned to
 * groups `0..k` by `groups`.
 *
 * # Safety
 * `values` and `groups` must be readable for `n` elements; `out` valid.
 */
enum CueloadStatus cueload_kruskal_wallis(const double *values,
                                          const uint32_t *groups,
                                          size_t n,
                                          uint32_t k,
                                          struct CueloadKruskal *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CUELOAD_H */
