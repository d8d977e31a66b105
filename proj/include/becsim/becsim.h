/* C interface to the becsim library. Every function returns a status code;
 * on failure becsim_last_error() describes the cause for the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * becsim_string_free. */
#ifndef BECSIM_BECSIM_H
#define BECSIM_BECSIM_H

#include <stdint.h>

#if defined(_WIN32)
#define BECSIM_API __declspec(dllexport)
#else
#define BECSIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum becsim_status {
  BECSIM_OK = 0,
  BECSIM_ERR_CONFIG = 1,
  BECSIM_ERR_MONITOR = 2,
  BECSIM_ERR_PRECONDITION = 3,
  BECSIM_ERR_INTERNAL = 4,
  BECSIM_ERR_ARGUMENT = 5
} becsim_status;

typedef struct becsim_config becsim_config;
typedef struct becsim_result becsim_result;

BECSIM_API const char* becsim_version(void);
BECSIM_API const char* becsim_last_error(void);
BECSIM_API void becsim_string_free(char* s);

/* Run configuration as a JSON document (see README for the fields). */
BECSIM_API becsim_status becsim_config_from_json(const char* json, becsim_config** out);
BECSIM_API becsim_status becsim_config_to_json(const becsim_config* config, char** out);
BECSIM_API void becsim_config_free(becsim_config* config);

BECSIM_API becsim_status becsim_simulate(const becsim_config* config, becsim_result** out);
BECSIM_API becsim_status becsim_result_summary_json(const becsim_result* result, char** out);
BECSIM_API becsim_status becsim_result_trace_csv(const becsim_result* result, char** out);
BECSIM_API becsim_status becsim_result_trace_json(const becsim_result* result, char** out);
/* Per-slot plan log; empty unless the config sets "trace_log". */
BECSIM_API becsim_status becsim_result_log_json(const becsim_result* result, char** out);
BECSIM_API uint64_t becsim_result_slots(const becsim_result* result);
BECSIM_API void becsim_result_free(becsim_result* result);

/* Stability probe driven by the config's "probe" object. */
BECSIM_API becsim_status becsim_probe(const becsim_config* config, char** out);
BECSIM_API becsim_status becsim_derive_table(const becsim_config* config, char** out);
BECSIM_API becsim_status becsim_catalog(const becsim_config* config, char** out);
/* Rate sweep through the region computations; request and reply are JSON. */
BECSIM_API becsim_status becsim_regions(const char* request_json, char** out);
/* Replays a slot log against a fresh network and re-audits every slot.
 * Status BECSIM_ERR_MONITOR when the replay disagrees or an audit fails. */
BECSIM_API becsim_status becsim_rpm_replay(const char* log_json, int n_users, char** out);

#ifdef __cplusplus
}
#endif

#endif /* BECSIM_BECSIM_H */
