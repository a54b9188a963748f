#ifndef HIGFORMER_H
#define HIGFORMER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum HigStatus {
  HIG_STATUS_OK = 0,
  HIG_STATUS_NULL_POINTER = 1,
  HIG_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed request or argument.
   */
  HIG_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Unknown team, player or match.
   */
  HIG_STATUS_NOT_FOUND = 4,
  /**
   * A player has no match history.
   */
  HIG_STATUS_NO_HISTORY = 5,
  /**
   * Missing or unreadable files.
   */
  HIG_STATUS_IO = 6,
  /**
   * A stored artifact is corrupt or incompatible.
   */
  HIG_STATUS_FORMAT = 7,
  HIG_STATUS_INTERNAL = 8,
  HIG_STATUS_PANIC = 9,
} HigStatus;

/**
 * Opaque handle to a loaded model snapshot.
 */
typedef struct HigModel HigModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads the run directory `run_dir`. `checkpoint` may be null to use the
 * run's stage-2 checkpoint. On success `*out` receives a handle to release
 * with [`hig_model_free`].
 *
 * # Safety
 * `run_dir` and a non-null `checkpoint` must be NUL-terminated strings; `out`
 * must be valid for writes.
 */
enum HigStatus hig_model_open(const char *run_dir, const char *checkpoint, struct HigModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`hig_model_open`] and not be used afterwards.
 */
void hig_model_free(struct HigModel *model);

/**
 * Scores a dataset fixture with its recorded lineups. `outcome` receives
 * 0 for a home win, 1 for a draw and 2 for a home loss.
 *
 * # Safety
 * `model` must be a live handle; `y_hat` and `outcome` must be valid for
 * writes.
 */
enum HigStatus hig_predict_fixture(const struct HigModel *model,
                                   int64_t match_id,
                                   double *y_hat,
                                   int32_t *outcome);

/**
 * Prediction for a lineup given as JSON
 * `{"home_team":1,"away_team":2,"rosters":{"home":[..],"away":[..]}}`.
 * `*out_json` receives the prediction as JSON.
 *
 * # Safety
 * `model` must be a live handle, `request_json` a NUL-terminated string and
 * `out_json` valid for writes.
 */
enum HigStatus hig_predict_json(const struct HigModel *model,
                                const char *request_json,
                                char **out_json);

/**
 * Substitution analysis for a JSON request
 * `{"team_id":1,"opponent":null,"substitutions":[{"out_player":..,"in_player":..}]}`.
 * `*out_json` receives the report as JSON.
 *
 * # Safety
 * As for [`hig_predict_json`].
 */
enum HigStatus hig_whatif_json(const struct HigModel *model,
                               const char *request_json,
                               char **out_json);

/**
 * Maps a score in `[0, 1]` to 0 (win), 1 (draw) or 2 (lose) using the cut
 * points `lower <= upper`.
 *
 * # Safety
 * `outcome` must be valid for writes.
 */
enum HigStatus hig_classify(double y_hat, double lower, double upper, int32_t *outcome);

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *hig_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void hig_string_free(char *s);

/**
 * Library version, statically allocated.
 */
const char *hig_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HIGFORMER_H */
