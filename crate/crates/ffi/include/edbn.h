#ifndef EDBN_H
#define EDBN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes of the C interface.
 */
typedef enum EdbnStatus {
  EDBN_STATUS_OK = 0,
  EDBN_STATUS_NULL_ARGUMENT = 1,
  EDBN_STATUS_INVALID_UTF8 = 2,
  EDBN_STATUS_IO = 3,
  EDBN_STATUS_PARSE = 4,
  EDBN_STATUS_INVALID_ARGUMENT = 5,
  EDBN_STATUS_SCHEMA_MISMATCH = 6,
  EDBN_STATUS_MODEL_FORMAT = 7,
  EDBN_STATUS_MODEL_VERSION = 8,
  EDBN_STATUS_EMPTY_LOG = 9,
  EDBN_STATUS_EVALUATION = 10,
  EDBN_STATUS_INTERNAL = 11,
  EDBN_STATUS_PANIC = 12,
} EdbnStatus;

/*
 A parsed event log.
 */
typedef struct EdbnLog EdbnLog;

/*
 A learned model.
 */
typedef struct EdbnModel EdbnModel;

/*
 Traces ranked from most to least anomalous.
 */
typedef struct EdbnRanking EdbnRanking;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL. The pointer is
 valid until the next `edbn_*` call on the same thread.
 */
const char *edbn_last_error(void);

/*
 Library version as a static string.
 */
const char *edbn_version(void);

/*
 Parses `len` bytes of delimited text with a header row. `attrs` lists
 `n_attrs` attribute column names; `id_col` may be NULL to number events
 by row.

 # Safety
 Pointers must be valid for the given lengths; strings must be
 nul-terminated. `out` receives a handle owned by the caller.
 */
enum EdbnStatus edbn_log_parse(const uint8_t *data,
                               size_t len,
                               const char *trace_col,
                               const char *id_col,
                               const char *const *attrs,
                               size_t n_attrs,
                               uint8_t delimiter,
                               struct EdbnLog **out);

/*
 Number of traces in `log`, or 0 for NULL.

 # Safety
 `log` must be NULL or a live handle.
 */
size_t edbn_log_trace_count(const struct EdbnLog *log);

/*
 # Safety
 `log` must be NULL or a handle not yet freed.
 */
void edbn_log_free(struct EdbnLog *log);

/*
 Learns a model with history length `k` and FD threshold `fd_threshold`.

 # Safety
 `log` must be a live handle; `out` receives a handle owned by the caller.
 */
enum EdbnStatus edbn_model_learn(const struct EdbnLog *log,
                                 size_t k,
                                 double fd_threshold,
                                 struct EdbnModel **out);

/*
 # Safety
 `path` must be a nul-terminated string; `out` receives a handle owned by
 the caller.
 */
enum EdbnStatus edbn_model_load(const char *path, struct EdbnModel **out);

/*
 # Safety
 `model` must be a live handle and `path` a nul-terminated string.
 */
enum EdbnStatus edbn_model_save(const struct EdbnModel *model, const char *path);

/*
 # Safety
 `model` must be NULL or a handle not yet freed.
 */
void edbn_model_free(struct EdbnModel *model);

/*
 Scores every trace of `log` and ranks them, most anomalous first.

 # Safety
 `model` and `log` must be live handles; `out` receives a handle owned by
 the caller.
 */
enum EdbnStatus edbn_model_score(const struct EdbnModel *model,
                                 const struct EdbnLog *log,
                                 struct EdbnRanking **out);

/*
 Number of ranked traces, or 0 for NULL.

 # Safety
 `ranking` must be NULL or a live handle.
 */
size_t edbn_ranking_len(const struct EdbnRanking *ranking);

/*
 Trace id and score at rank `index` (0 is most anomalous). The id stays
 valid while the ranking lives.

 # Safety
 `ranking` must be a live handle; `trace_id` and `score` may each be NULL.
 */
enum EdbnStatus edbn_ranking_get(const struct EdbnRanking *ranking,
                                 size_t index,
                                 const char **trace_id,
                                 double *score);

/*
 # Safety
 `ranking` must be NULL or a handle not yet freed.
 */
void edbn_ranking_free(struct EdbnRanking *ranking);

/*
 ROC AUC of `n` scores where nonzero `anomalous[i]` marks the positive
 class and lower scores are more anomalous.

 # Safety
 `scores` and `anomalous` must point to `n` elements.
 */
enum EdbnStatus edbn_auc(const double *scores, const uint8_t *anomalous, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDBN_H */
