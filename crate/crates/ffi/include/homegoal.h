#ifndef HOMEGOAL_H
#define HOMEGOAL_H

#include <stdbool.h>
#include <stdint.h>

typedef enum HgStatus {
  HG_STATUS_OK = 0,
  HG_STATUS_NULL_ARGUMENT = 1,
  HG_STATUS_INVALID_UTF8 = 2,
  HG_STATUS_INVALID_JSON = 3,
  HG_STATUS_INVALID_ARGUMENT = 4,
  HG_STATUS_UNKNOWN_HOME = 5,
  HG_STATUS_TEMPLATE_INVALID = 6,
  HG_STATUS_PLAN_INVALID = 7,
  HG_STATUS_SIMULATOR_REJECTED = 8,
  HG_STATUS_SNAPSHOT_INVALID = 9,
  HG_STATUS_FIXTURE_INVALID = 10,
  HG_STATUS_NO_PENDING_PLAN = 11,
  HG_STATUS_UNKNOWN_PLAN = 12,
  HG_STATUS_CHAIN_FAILED = 13,
  HG_STATUS_PANIC = 14,
} HgStatus;

typedef enum HgGoal {
  HG_GOAL_IMMEDIATE = 0,
  HG_GOAL_PERSISTENT = 1,
} HgGoal;

typedef enum HgValidity {
  HG_VALIDITY_VALID = 0,
  HG_VALIDITY_INVALID_ROOMS_STRIPPED = 1,
  HG_VALIDITY_INVALID_STRUCTURE_MUTATED = 2,
  HG_VALIDITY_INVALID_MALFORMED = 3,
} HgValidity;

// A dialogue session driving the chain against scripted responses, with
// its own simulator. Accepted plans are executed on that simulator.
typedef struct HgAgent HgAgent;

// A validated home template.
typedef struct HgHome HgHome;

// Device state, routines and event log for one home.
typedef struct HgSimulator HgSimulator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The message for the last failing call on this thread, or null. Valid
// until the next call into this library on the same thread.
const char *hg_last_error(void);

// Static version string.
const char *hg_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `text` is null or came from this library and was not freed before.
void hg_string_free(char *text);

// One of the shipped homes: `h1`, `h2`, `h3` or `studio`.
//
// # Safety
// `id` is a valid C string; `out` is writable.
enum HgStatus hg_home_builtin(const char *id, struct HgHome **out);

// A home from its devices and sensors documents.
//
// # Safety
// `devices` and `sensors` are valid C strings; `out` is writable.
enum HgStatus hg_home_from_json(const char *devices, const char *sensors, struct HgHome **out);

// Hex SHA-256 of the canonical template encoding.
//
// # Safety
// `home` is a live handle; `out` is writable.
enum HgStatus hg_home_digest(const struct HgHome *home, char **out);

// The devices document, canonical JSON.
//
// # Safety
// `home` is a live handle; `out` is writable.
enum HgStatus hg_home_devices_json(const struct HgHome *home, char **out);

// # Safety
// `home` is null or a handle not freed before. Simulators and agents made
// from it stay valid.
void hg_home_free(struct HgHome *home);

// Structural validity of a raw model response against `home`.
//
// # Safety
// `home` is a live handle; `raw` is a valid C string; `out` is writable.
enum HgStatus hg_classify_response(const struct HgHome *home,
                                   const char *raw,
                                   enum HgGoal goal,
                                   enum HgValidity *out);

// A simulator at the home's initial state.
//
// # Safety
// `home` is a live handle; `out` is writable.
enum HgStatus hg_sim_new(const struct HgHome *home, struct HgSimulator **out);

// # Safety
// `sim` is null or a handle not freed before.
void hg_sim_free(struct HgSimulator *sim);

// Current device state as room → device → settings JSON.
//
// # Safety
// `sim` is a live handle; `out` is writable.
enum HgStatus hg_sim_state_json(const struct HgSimulator *sim, char **out);

// Installed routines as a JSON array.
//
// # Safety
// `sim` is a live handle; `out` is writable.
enum HgStatus hg_sim_routines_json(const struct HgSimulator *sim, char **out);

// The event log as a JSON array.
//
// # Safety
// `sim` is a live handle; `out` is writable.
enum HgStatus hg_sim_log_json(const struct HgSimulator *sim, char **out);

// Applies an immediate plan. `out_events` may be null; otherwise it
// receives the logged events as a JSON array.
//
// # Safety
// `sim` is a live handle; `plan_json` is a valid C string; `out_events` is
// null or writable.
enum HgStatus hg_sim_apply_plan(struct HgSimulator *sim, const char *plan_json, char **out_events);

// Installs a routine plan (`trigger`, `action`, `explanation`).
//
// # Safety
// `sim` is a live handle; `plan_json` is a valid C string; `out_id` and
// `out_duplicate` are null or writable.
enum HgStatus hg_sim_install_routine(struct HgSimulator *sim,
                                     const char *plan_json,
                                     uint64_t *out_id,
                                     bool *out_duplicate);

// # Safety
// `sim` is a live handle.
enum HgStatus hg_sim_remove_routine(struct HgSimulator *sim, uint64_t routine_id);

// Feeds one sensor snapshot, `{"timestamp": <unix seconds>, "sensors": {...}}`.
// `out_fired` may be null; otherwise it receives the fired routine ids as a
// JSON array.
//
// # Safety
// `sim` is a live handle; `snapshot_json` is a valid C string; `out_fired`
// is null or writable.
enum HgStatus hg_sim_tick(struct HgSimulator *sim, const char *snapshot_json, char **out_fired);

// An agent for `home` answering from the scripted fixture file or directory
// at `fixtures_path`. `mode` names a chain mode; null means `full_split`.
//
// # Safety
// `home` is a live handle; `fixtures_path` is a valid C string; `mode` is
// null or a valid C string; `out` is writable.
enum HgStatus hg_agent_new(const struct HgHome *home,
                           const char *fixtures_path,
                           const char *mode,
                           struct HgAgent **out);

// # Safety
// `agent` is null or a handle not freed before.
void hg_agent_free(struct HgAgent *agent);

// Sends a command, or answers the last clarifying question. Writes
// `{"outcome", "utterance", "goal", "plan_id", "plan", "explanation",
// "needs_clarification"}`; `plan_id` is set when a plan awaits review.
//
// # Safety
// `agent` is a live handle; `text` is a valid C string; `out` is writable.
enum HgStatus hg_agent_message(struct HgAgent *agent, const char *text, char **out);

// Resolves the pending plan with `{"verdict": "accept"}` or
// `{"verdict": "critique", "critique": "..."}`. An accepted plan is executed
// on the agent's simulator. Writes `{"outcome", "utterance", "accepted",
// "routine_id", "duplicate", "revised_plan_id", "revised_plan"}`.
//
// # Safety
// `agent` is a live handle; `verdict_json` is a valid C string; `out` is
// writable.
enum HgStatus hg_agent_resolve(struct HgAgent *agent,
                               uint64_t plan_id,
                               const char *verdict_json,
                               char **out);

// The agent simulator's device state.
//
// # Safety
// `agent` is a live handle; `out` is writable.
enum HgStatus hg_agent_state_json(const struct HgAgent *agent, char **out);

// Feeds a sensor snapshot to the agent's simulator; see [`hg_sim_tick`].
//
// # Safety
// As [`hg_sim_tick`], with `agent` a live handle.
enum HgStatus hg_agent_tick(struct HgAgent *agent, const char *snapshot_json, char **out_fired);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMEGOAL_H */
