#ifndef OPSPAM_H
#define OPSPAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum OpspamStatus {
  OPSPAM_STATUS_OK = 0,
  OPSPAM_STATUS_NULL_POINTER = 1,
  OPSPAM_STATUS_INVALID_UTF8 = 2,
  OPSPAM_STATUS_INVALID_ARGUMENT = 3,
  OPSPAM_STATUS_IO = 4,
  OPSPAM_STATUS_PARSE = 5,
  OPSPAM_STATUS_VERSION_MISMATCH = 6,
  OPSPAM_STATUS_BUFFER_TOO_SMALL = 7,
  OPSPAM_STATUS_RUNTIME = 8,
  OPSPAM_STATUS_PANIC = 9,
} OpspamStatus;

// A loaded model. Create with [`opspam_model_load`], release with
// [`opspam_model_free`]. A model may be shared between threads for
// prediction.
typedef struct OpspamModel OpspamModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *opspam_version(void);

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library from the same thread.
const char *opspam_last_error(void);

// Load a model file written by `opspam train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum OpspamStatus opspam_model_load(const char *path, struct OpspamModel **out);

// Release a model. Null is ignored.
//
// # Safety
// `model` must come from [`opspam_model_load`] and not be freed twice.
void opspam_model_free(struct OpspamModel *model);

// Classify one text. `label` receives 1 for deceptive and 0 for truthful;
// `score` the model's raw score (log-odds, decision value or probability).
//
// # Safety
// All pointers must be valid; `text` NUL-terminated.
enum OpspamStatus opspam_model_predict(const struct OpspamModel *model,
                                       const char *text,
                                       int32_t *label,
                                       double *score);

// Name of the model type, e.g. "mnb" or "bilstm-attn".
//
// # Safety
// `model` must be valid; `buf` must hold `buf_len` bytes; `needed` may be null.
enum OpspamStatus opspam_model_type(const struct OpspamModel *model,
                                    char *buf,
                                    size_t buf_len,
                                    size_t *needed);

// ROC-AUC of `scores` against 0/1 `labels`, both of length `n`.
//
// # Safety
// `labels` and `scores` must point to `n` elements; `out` must be valid.
enum OpspamStatus opspam_roc_auc(const uint8_t *labels,
                                 const double *scores,
                                 size_t n,
                                 double *out);

// Porter stem of one lowercase word.
//
// # Safety
// `word` must be NUL-terminated; `buf` must hold `buf_len` bytes; `needed`
// may be null.
enum OpspamStatus opspam_stem(const char *word, char *buf, size_t buf_len, size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPSPAM_H */
