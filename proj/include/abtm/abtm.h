/* C interface to the ABTM engine. All strings are UTF-8, NUL-terminated.
 * Strings returned through `char**` are owned by the caller and released
 * with abtm_free. Handles are not thread-safe; distinct handles may be used
 * from distinct threads. */
#ifndef ABTM_H
#define ABTM_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define ABTM_API __attribute__((visibility("default")))
#else
#define ABTM_API
#endif

typedef enum abtm_status {
  ABTM_OK = 0,
  ABTM_E_DUPLICATE_KEY = 1,
  ABTM_E_RESERVED_KEY = 2,
  ABTM_E_SYNTAX = 3,
  ABTM_E_DIVIDE_BY_ZERO = 4,
  ABTM_E_CYCLE_BUDGET = 5,
  ABTM_E_DUPLICATE_NAME = 6,
  ABTM_E_VALIDATION = 7,
  ABTM_E_MALFORMED_DUMP = 8,
  ABTM_E_CONFIG = 9,
  ABTM_E_ORACLE_MISMATCH = 10,
  ABTM_E_IO = 11,
  ABTM_E_INVALID_ARGUMENT = 12,
  ABTM_E_INTERNAL = 99
} abtm_status;

typedef struct abtm_tree abtm_tree;

ABTM_API const char* abtm_version(void);
ABTM_API const char* abtm_status_name(abtm_status status);

/* Message of the last failed call on this thread; "" after a success. */
ABTM_API const char* abtm_last_error(void);

ABTM_API void abtm_free(char* text);

/* Parses and validates a tree. On ABTM_OK, `*report` holds one diagnostic
 * per line (possibly empty) and `*errors` the number of error-severity
 * diagnostics. Parse failures return ABTM_E_SYNTAX or ABTM_E_DUPLICATE_NAME
 * with the message in abtm_last_error. */
ABTM_API abtm_status abtm_check(const char* tree_text, char** report, int* errors);

/* Parses, validates and builds. ABTM_E_VALIDATION lists the errors. */
ABTM_API abtm_status abtm_tree_load(const char* tree_text, abtm_tree** out);
ABTM_API void abtm_tree_free(abtm_tree* tree);

/* Outputs are one JSON object, keys ascending; "{}" when nothing changed. */
ABTM_API abtm_status abtm_tree_start(abtm_tree* tree, char** outputs);
ABTM_API abtm_status abtm_tree_callback(abtm_tree* tree, const char* sample_json, char** outputs);

/* Loads and runs a scenario file. `report_json` and `summary` may be NULL.
 * `*verdict` is 1 when every completed sync round ended consistent. */
ABTM_API abtm_status abtm_simulate(const char* scenario_path, char** report_json, char** summary, int* verdict);

/* Runs the efficiency benchmark. `config_json` fields (all optional):
 * trees, height [lo, hi], children [lo, hi], modes ["dense", "sparse"],
 * samples, seed, target_nodes, target_tolerance, tiers [..], repetitions.
 * `*gate_passed` is 0 when the engines disagreed on some tree; the
 * mismatch is then in abtm_last_error and in the aggregate document. */
ABTM_API abtm_status abtm_bench(const char* config_json, char** csv, char** aggregate_json, int* gate_passed);

#ifdef __cplusplus
}
#endif

#endif
