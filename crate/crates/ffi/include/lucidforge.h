#ifndef LUCIDFORGE_H
#define LUCIDFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LfStatus {
  LF_STATUS_OK = 0,
  LF_STATUS_NULL_POINTER = 1,
  LF_STATUS_INVALID_UTF8 = 2,
  LF_STATUS_PARSE_ERROR = 3,
  LF_STATUS_INVALID_ARGUMENT = 4,
  LF_STATUS_UNKNOWN_SITE = 5,
  LF_STATUS_DIMENSION_MISMATCH = 6,
  LF_STATUS_SOLVER_FAILURE = 7,
  LF_STATUS_PANIC = 99,
} LfStatus;

/**
 * Opaque teleoperation session.
 */
typedef struct LfSession LfSession;

/**
 * Opaque kinematic model.
 */
typedef struct LfTree LfTree;

typedef struct LfPose {
  double p[3];
  /**
   * Scalar-first unit quaternion.
   */
  double q[4];
} LfPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Free with
 * [`lf_string_free`].
 */
char *lf_last_error(void);

void lf_string_free(char *s);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lf_version(void);

/**
 * Compile scene text to MJCF XML.
 */
enum LfStatus lf_scene_compile(const char *scene, char **out_xml);

enum LfStatus lf_tree_from_mjcf(const char *xml, struct LfTree **out);

void lf_tree_free(struct LfTree *tree);

/**
 * Number of joint coordinates, or 0 for NULL.
 */
size_t lf_tree_dof(const struct LfTree *tree);

size_t lf_tree_site_count(const struct LfTree *tree);

/**
 * World pose of `site` at configuration `q[0..n]`.
 */
enum LfStatus lf_fk_site(const struct LfTree *tree,
                         const double *q,
                         size_t n,
                         const char *site,
                         struct LfPose *out_pose);

/**
 * Damped least-squares IK for one site. Writes `n` joint values to
 * `q_out` and the final weighted residual to `residual_out` (may be NULL).
 * Not reaching the tolerance is not an error; inspect the residual.
 */
enum LfStatus lf_ik_solve(const struct LfTree *tree,
                          const double *q0,
                          size_t n,
                          const char *site,
                          const struct LfPose *target,
                          double pos_weight,
                          double rot_weight,
                          double *q_out,
                          double *residual_out);

/**
 * Encode a scalar-first quaternion as the first two rotation-matrix
 * columns (6 values).
 */
enum LfStatus lf_rot6d_from_quat(const double *q, double *out6);

enum LfStatus lf_rot6d_to_quat(const double *r6, double *out4);

/**
 * New session over a copy of `tree`; `decimation` must be in [5, 20].
 */
enum LfStatus lf_session_new(const struct LfTree *tree,
                             uint32_t decimation,
                             struct LfSession **out);

void lf_session_free(struct LfSession *session);

/**
 * Apply one protocol message (JSON text). Replies, possibly an empty
 * list, are written as a JSON array to `out_json`. Malformed messages are
 * answered with an error message, not a failing status.
 */
enum LfStatus lf_session_handle(struct LfSession *session, const char *msg_json, char **out_json);

/**
 * Advance one tick; the outbound messages (state, plus any error) are
 * written as a JSON array to `out_json`.
 */
enum LfStatus lf_session_tick(struct LfSession *session, char **out_json);

/**
 * Completed recordings as episode files joined by a blank line; an empty
 * string if none.
 */
enum LfStatus lf_session_take_episodes(struct LfSession *session, char **out_text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LUCIDFORGE_H */
