#ifndef FINALITY_LAB_H
#define FINALITY_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_ARGUMENT = 1,
  FL_STATUS_INVALID_UTF8 = 2,
  FL_STATUS_PARSE = 3,
  FL_STATUS_SIMULATION = 4,
  FL_STATUS_OUT_OF_RANGE = 5,
} FlStatus;

typedef enum FlVerdict {
  FL_VERDICT_PASS = 0,
  FL_VERDICT_SKIP = 1,
  FL_VERDICT_FAIL = 2,
} FlVerdict;

typedef struct FlScenario FlScenario;

typedef struct FlTrace FlTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the next failure.
const char *fl_last_error(void);

// Parses scenario text into a new handle stored in `*out`.
//
// # Safety
// `text` must be a valid NUL-terminated string and `out` a valid pointer.
enum FlStatus fl_scenario_parse(const char *text, struct FlScenario **out);

// Canonical text of a scenario, with every key spelled out. Free with [`fl_string_free`].
//
// # Safety
// `scenario` must be null or a handle from [`fl_scenario_parse`].
char *fl_scenario_text(const struct FlScenario *scenario);

// # Safety
// `scenario` must be null or a handle from [`fl_scenario_parse`] not yet freed.
void fl_scenario_free(struct FlScenario *scenario);

// Runs the scenario and checks every property, storing the trace in `*out`.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum FlStatus fl_run(const struct FlScenario *scenario, struct FlTrace **out);

// # Safety
// `trace` must be null or a handle from [`fl_run`] not yet freed.
void fl_trace_free(struct FlTrace *trace);

// Number of property checks recorded for a trace.
//
// # Safety
// `trace` must be null or a live handle.
uintptr_t fl_check_count(const struct FlTrace *trace);

// Name and outcome of check `index`. `name` may be null; otherwise it receives a
// static string.
//
// # Safety
// `trace` must be a live handle and `verdict` a valid pointer.
enum FlStatus fl_check(const struct FlTrace *trace,
                       uintptr_t index,
                       const char **name,
                       enum FlVerdict *verdict);

// 1 if no check failed, 0 otherwise (also for a null handle).
//
// # Safety
// `trace` must be null or a live handle.
int32_t fl_trace_passed(const struct FlTrace *trace);

// Line-oriented trace text. Free with [`fl_string_free`].
//
// # Safety
// `trace` must be null or a live handle.
char *fl_trace_text(const struct FlTrace *trace);

// One `name|verdict` line per check. Free with [`fl_string_free`].
//
// # Safety
// `trace` must be null or a live handle.
char *fl_verdict_text(const struct FlTrace *trace);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void fl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FINALITY_LAB_H */
