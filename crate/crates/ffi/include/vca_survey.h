#ifndef VCA_SURVEY_H
#define VCA_SURVEY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VcaStatus {
  VCA_STATUS_OK = 0,
  VCA_STATUS_NULL_ARGUMENT = 1,
  VCA_STATUS_INVALID_UTF8 = 2,
  VCA_STATUS_INVALID_ARGUMENT = 3,
  VCA_STATUS_INVALID_FLOW = 4,
  VCA_STATUS_PARSE_FAILED = 5,
  VCA_STATUS_SESSION_ENDED = 6,
  VCA_STATUS_INVALID_PHASE = 7,
  VCA_STATUS_INTERNAL = 98,
  VCA_STATUS_PANIC = 99,
} VcaStatus;

/**
 * A validated flow definition.
 */
typedef struct VcaFlow VcaFlow;

/**
 * One running or finished session with its event log.
 */
typedef struct VcaSession VcaSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, static storage; do not free.
 */
const char *vca_version(void);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call on this thread; do not free.
 */
const char *vca_last_error(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or came from this library and was not freed before.
 */
void vca_string_free(char *s);

/**
 * Loads a bundled flow by id ("fluidmonitor", "sleepy").
 *
 * # Safety
 * `flow_id` is a NUL-terminated string; `out` is writable.
 */
enum VcaStatus vca_flow_builtin(const char *flow_id, struct VcaFlow **out);

/**
 * Parses and validates a flow document.
 *
 * # Safety
 * `document` is a NUL-terminated string; `out` is writable.
 */
enum VcaStatus vca_flow_load(const char *document, struct VcaFlow **out);

/**
 * The flow as JSON.
 *
 * # Safety
 * `flow` is a live handle; `out_json` is writable.
 */
enum VcaStatus vca_flow_json(const struct VcaFlow *flow, char **out_json);

/**
 * # Safety
 * `flow` is null or a handle not freed before.
 */
void vca_flow_free(struct VcaFlow *flow);

/**
 * Parses one utterance for an answer kind such as "FLUID_VOLUME" or
 * "CLOCK_TIME". On success writes `{"value", "echo", "canonical"}`.
 *
 * # Safety
 * Strings are NUL-terminated; `out_json` is writable.
 */
enum VcaStatus vca_parse(const char *kind, const char *utterance, char **out_json);

/**
 * Starts a session. `timeout_ms <= 0` uses the default of 10000. Linked
 * users are not asked to confirm their id. Writes the first reply
 * (`{"say", "session_status", "recorded", "deadline", "last_seq"}`) to
 * `out_reply` when it is not null.
 *
 * # Safety
 * `flow` is a live handle; strings are NUL-terminated; `out_session` is
 * writable; `out_reply` is null or writable.
 */
enum VcaStatus vca_session_start(const struct VcaFlow *flow,
                                 const char *session_id,
                                 const char *user_id,
                                 bool linked,
                                 int64_t timeout_ms,
                                 int64_t now_ms,
                                 struct VcaSession **out_session,
                                 char **out_reply);

/**
 * Feeds one utterance. A deadline already passed at `now_ms` is applied
 * first, as the gateway does.
 *
 * # Safety
 * `session` is a live handle; `text` is NUL-terminated; `out_reply` is null
 * or writable.
 */
enum VcaStatus vca_session_utterance(struct VcaSession *session,
                                     const char *utterance,
                                     int64_t now_ms,
                                     char **out_reply);

/**
 * Reports silence. Fails with `VCA_STATUS_INVALID_PHASE` before the deadline.
 *
 * # Safety
 * `session` is a live handle; `out_reply` is null or writable.
 */
enum VcaStatus vca_session_timeout(struct VcaSession *session, int64_t now_ms, char **out_reply);

/**
 * Current deadline in epoch ms, or -1 when the session awaits nothing.
 *
 * # Safety
 * `session` is null or a live handle.
 */
int64_t vca_session_deadline(const struct VcaSession *session);

/**
 * Session state (phase, answers, counters) as JSON.
 *
 * # Safety
 * `session` is a live handle; `out_json` is writable.
 */
enum VcaStatus vca_session_state(const struct VcaSession *session, char **out_json);

/**
 * The session's events as JSON lines, one record per line.
 *
 * # Safety
 * `session` is a live handle; `out_jsonl` is writable.
 */
enum VcaStatus vca_session_events(const struct VcaSession *session, char **out_jsonl);

/**
 * # Safety
 * `session` is null or a handle not freed before.
 */
void vca_session_free(struct VcaSession *session);

/**
 * Rebuilds session state from JSON-lines events of one session.
 *
 * # Safety
 * `events_jsonl` is NUL-terminated; `out_json` is writable.
 */
enum VcaStatus vca_replay(const char *events_jsonl, char **out_json);

/**
 * Sleep metrics for one diary: `answers_json` maps question ids to answer
 * values as in the state JSON, `diary_date` is YYYY-MM-DD (the morning of
 * waking) and `timezone` an IANA name. Writes the night with `tib_min`,
 * `tst_min`, `sleep_efficiency` and `flags`.
 *
 * # Safety
 * Strings are NUL-terminated; `out_json` is writable.
 */
enum VcaStatus vca_sleep_metrics(const char *answers_json,
                                 const char *diary_date,
                                 const char *timezone,
                                 char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VCA_SURVEY_H */
