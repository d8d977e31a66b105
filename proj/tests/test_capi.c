/* Exercises the shared library through its C header only. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "becsim/becsim.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

static const char* kConfig =
    "{\"n_users\": 3, \"horizon\": 800, \"seed\": 5,"
    " \"erasure\": {\"mode\": \"iid\", \"eps\": 0.4},"
    " \"arrivals\": {\"mode\": \"bernoulli\", \"lambda\": [0.1, 0.1, 0.1]},"
    " \"trace_log\": true}";

static char* summary_of(const becsim_config* cfg) {
  becsim_result* result = NULL;
  char* summary = NULL;
  if (becsim_simulate(cfg, &result) != BECSIM_OK) return NULL;
  becsim_result_summary_json(result, &summary);
  becsim_result_free(result);
  return summary;
}

static void test_errors(void) {
  becsim_config* cfg = NULL;
  EXPECT(becsim_config_from_json("{\"n_users\": 0}", &cfg) == BECSIM_ERR_CONFIG);
  EXPECT(cfg == NULL);
  EXPECT(strlen(becsim_last_error()) > 0);
  EXPECT(becsim_config_from_json("not json", &cfg) == BECSIM_ERR_CONFIG);
  EXPECT(becsim_config_from_json(NULL, &cfg) == BECSIM_ERR_ARGUMENT);
  EXPECT(becsim_simulate(NULL, NULL) == BECSIM_ERR_ARGUMENT);
  EXPECT(becsim_config_from_json("{\"n_users\": 3, \"restriction\": \"table8\"}", &cfg) ==
         BECSIM_ERR_CONFIG);
  becsim_config_free(NULL);
  becsim_result_free(NULL);
  becsim_string_free(NULL);
}

static void test_simulate(void) {
  becsim_config* cfg = NULL;
  becsim_result* result = NULL;
  char* text = NULL;
  char* first = NULL;
  char* second = NULL;
  char* log = NULL;
  char* replay = NULL;

  EXPECT(becsim_config_from_json(kConfig, &cfg) == BECSIM_OK);
  EXPECT(becsim_config_to_json(cfg, &text) == BECSIM_OK);
  EXPECT(text != NULL && strstr(text, "\"n_users\"") != NULL);
  becsim_string_free(text);

  EXPECT(becsim_simulate(cfg, &result) == BECSIM_OK);
  EXPECT(becsim_result_slots(result) == 800);
  EXPECT(becsim_result_trace_csv(result, &text) == BECSIM_OK);
  EXPECT(strncmp(text, "t,q_hat,v_hat", 13) == 0);
  becsim_string_free(text);
  EXPECT(becsim_result_trace_json(result, &text) == BECSIM_OK);
  EXPECT(text[0] == '[');
  becsim_string_free(text);
  EXPECT(becsim_result_log_json(result, &log) == BECSIM_OK);

  EXPECT(becsim_rpm_replay(log, 3, &replay) == BECSIM_OK);
  EXPECT(strstr(replay, "\"ok\": true") != NULL);
  becsim_string_free(replay);
  /* Claiming a different user count breaks the replay. */
  replay = NULL;
  EXPECT(becsim_rpm_replay(log, 2, &replay) != BECSIM_OK);
  becsim_string_free(replay);
  becsim_string_free(log);
  becsim_result_free(result);

  first = summary_of(cfg);
  second = summary_of(cfg);
  EXPECT(first != NULL && second != NULL && strcmp(first, second) == 0);
  becsim_string_free(first);
  becsim_string_free(second);

  EXPECT(becsim_catalog(cfg, &text) == BECSIM_OK);
  becsim_string_free(text);
  EXPECT(becsim_derive_table(cfg, &text) == BECSIM_OK);
  EXPECT(strstr(text, "I[-|1]") != NULL);
  becsim_string_free(text);
  becsim_config_free(cfg);
}

static void test_probe(void) {
  becsim_config* cfg = NULL;
  char* text = NULL;
  const char* probe =
      "{\"n_users\": 2, \"erasure\": {\"mode\": \"iid\", \"eps\": 0.5},"
      " \"arrivals\": {\"mode\": \"bernoulli\", \"lambda\": [0, 0]},"
      " \"probe\": {\"ray\": [1, 1], \"scales\": [0.5], \"seeds\": 1, \"window\": 1000}}";
  EXPECT(becsim_config_from_json(probe, &cfg) == BECSIM_OK);
  EXPECT(becsim_probe(cfg, &text) == BECSIM_OK);
  EXPECT(text != NULL && strstr(text, "\"verdicts\"") != NULL);
  becsim_string_free(text);
  becsim_config_free(cfg);
}

static void test_regions(void) {
  char* text = NULL;
  EXPECT(becsim_regions("{\"n_users\": 4, \"eps\": 0.5, \"check_cert\": true}", &text) ==
         BECSIM_OK);
  EXPECT(text != NULL && strstr(text, "\"rows\"") != NULL);
  EXPECT(strstr(text, "\"feasible\": true") != NULL);
  becsim_string_free(text);
  text = NULL;
  EXPECT(becsim_regions("{\"n_users\": 4, \"eps\": 2}", &text) == BECSIM_ERR_CONFIG);
  EXPECT(text == NULL);
}

int main(void) {
  EXPECT(strlen(becsim_version()) > 0);
  test_errors();
  test_simulate();
  test_probe();
  test_regions();
  if (failures == 0) printf("all C API checks passed\n");
  return failures == 0 ? 0 : 1;
}
