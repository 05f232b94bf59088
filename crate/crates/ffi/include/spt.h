#ifndef SPT_H
#define SPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum SptStatus {
  SPT_STATUS_OK = 0,
  SPT_STATUS_NULL_POINTER = 1,
  SPT_STATUS_INVALID_UTF8 = 2,
  SPT_STATUS_IO = 3,
  SPT_STATUS_CHECKPOINT = 4,
  SPT_STATUS_INVALID_SEQUENCE = 5,
  SPT_STATUS_TOO_LONG = 6,
  SPT_STATUS_OUT_OF_RANGE = 7,
  SPT_STATUS_BUFFER_TOO_SMALL = 8,
  SPT_STATUS_INTERNAL = 9,
  SPT_STATUS_PANIC = 10,
} SptStatus;

/**
 * A loaded classifier.
 */
typedef struct SptModel SptModel;

/**
 * Per-residue scores for one sequence.
 */
typedef struct SptScores SptScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *spt_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *spt_version(void);

/**
 * Loads a checkpoint file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SptStatus spt_model_load(const char *path, struct SptModel **out);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from [`spt_model_load`] and not be used afterwards.
 */
void spt_model_free(struct SptModel *model);

/**
 * Number of output classes, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t spt_model_num_classes(const struct SptModel *model);

/**
 * Number of transformer blocks, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t spt_model_num_layers(const struct SptModel *model);

/**
 * Longest accepted sequence, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t spt_model_max_len(const struct SptModel *model);

/**
 * Total scalar parameter count, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t spt_model_param_count(const struct SptModel *model);

/**
 * Writes the raw logits for `sequence` (one-letter codes) into
 * `logits[0..num_classes]` and the argmax into `*predicted` when non-NULL.
 *
 * # Safety
 * `logits` must have room for `capacity` doubles.
 */
enum SptStatus spt_classify(const struct SptModel *model,
                            const char *sequence,
                            double *logits,
                            size_t capacity,
                            size_t *predicted);

/**
 * Computes residue scores into `*out`.
 *
 * `class` < 0 explains the predicted class; `block` 0 selects the last
 * block, otherwise it is 1-based.
 *
 * # Safety
 * `sequence` must be NUL-terminated and `out` valid.
 */
enum SptStatus spt_sequence_score(const struct SptModel *model,
                                  const char *sequence,
                                  int64_t class_,
                                  size_t block,
                                  struct SptScores **out);

/**
 * Number of scores (the sequence length), 0 for NULL.
 *
 * # Safety
 * `scores` must be NULL or a live handle.
 */
size_t spt_scores_len(const struct SptScores *scores);

/**
 * Pointer to the scores, valid until [`spt_scores_free`]; NULL for NULL.
 *
 * # Safety
 * `scores` must be NULL or a live handle.
 */
const double *spt_scores_data(const struct SptScores *scores);

/**
 * Class the scores explain.
 *
 * # Safety
 * `scores` must be NULL or a live handle.
 */
size_t spt_scores_class(const struct SptScores *scores);

/**
 * Model prediction for the scored sequence.
 *
 * # Safety
 * `scores` must be NULL or a live handle.
 */
size_t spt_scores_predicted(const struct SptScores *scores);

/**
 * Releases scores. NULL is ignored.
 *
 * # Safety
 * `scores` must come from [`spt_sequence_score`] and not be used afterwards.
 */
void spt_scores_free(struct SptScores *scores);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPT_H */
