/* C interface to the softdag library.
 *
 * Every fallible call returns a softdag_status. On failure the message is
 * available from softdag_last_error() on the same thread until the next call.
 * Strings returned through char** are owned by the caller and released with
 * softdag_free_string().
 */
#ifndef SOFTDAG_H
#define SOFTDAG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SOFTDAG_API __declspec(dllexport)
#else
#define SOFTDAG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum softdag_status {
  SOFTDAG_OK = 0,
  SOFTDAG_INVALID_ARGUMENT = 1,
  SOFTDAG_PARSE = 2,
  SOFTDAG_IO = 3,
  SOFTDAG_LIMIT = 4,
  SOFTDAG_PRECONDITION = 5,
  SOFTDAG_VIOLATION = 6,
  SOFTDAG_DIVERGED = 7,
  SOFTDAG_INTERNAL = 8
} softdag_status;

typedef struct softdag_env softdag_env;
typedef struct softdag_experiment softdag_experiment;

SOFTDAG_API const char* softdag_version(void);
SOFTDAG_API const char* softdag_status_name(softdag_status status);
SOFTDAG_API const char* softdag_last_error(void);
SOFTDAG_API void softdag_free_string(char* s);

/* Environments. `json` may be an env spec, a raw graph, or a full experiment
 * config (its "env" section is used). base_dir resolves relative file paths
 * and may be NULL. */
SOFTDAG_API softdag_status softdag_env_load_file(const char* path, softdag_env** out);
SOFTDAG_API softdag_status softdag_env_load_json(const char* json, const char* base_dir, softdag_env** out);
SOFTDAG_API void softdag_env_free(softdag_env* env);
SOFTDAG_API size_t softdag_env_num_states(const softdag_env* env);
SOFTDAG_API size_t softdag_env_num_terminating(const softdag_env* env);
/* *is_valid receives 1 or 0; report is a JSON object listing violations. */
SOFTDAG_API softdag_status softdag_env_validate(const softdag_env* env, int* is_valid, char** report_json);
SOFTDAG_API softdag_status softdag_env_graph_json(const softdag_env* env, char** out);

typedef struct softdag_scheme_options {
  const char* reward;   /* uncorrected | terminal | dense | fl; NULL = terminal */
  const char* backward; /* uniform | counting; NULL = uniform */
  double alpha;         /* > 0 */
} softdag_scheme_options;

/* Exact oracle analysis. Outputs a summary object and a CSV table with
 * header state,label,probability,gibbs. */
SOFTDAG_API softdag_status softdag_exact(const softdag_env* env, const softdag_scheme_options* scheme,
                                         char** summary_json, char** distribution_csv);

typedef struct softdag_equiv_options {
  const char* pair;      /* pcl-subtb | sql-db | pisql-mdb | sql-fldb | all (NULL = all) */
  const char* reward;    /* NULL = the reward form each pair is stated for */
  const char* backward;  /* NULL = uniform */
  const double* alphas;  /* n_alphas values */
  size_t n_alphas;
  int trials;
  double tol;
  double ratio_tol;
  uint64_t seed;
} softdag_equiv_options;

/* *passed receives 1 when every check holds. Returns SOFTDAG_OK whether or not
 * the checks pass; preconditions (e.g. pisql-mdb on a graph with
 * non-terminating states) return SOFTDAG_PRECONDITION. */
SOFTDAG_API softdag_status softdag_equiv(const softdag_env* env, const softdag_equiv_options* options, int* passed,
                                         char** report_json);

/* Experiments: env + reward + optional training section + output_dir. */
SOFTDAG_API softdag_status softdag_experiment_load_file(const char* path, softdag_experiment** out);
SOFTDAG_API softdag_status softdag_experiment_load_json(const char* json, const char* base_dir,
                                                        softdag_experiment** out);
SOFTDAG_API void softdag_experiment_free(softdag_experiment* exp);
/* Keys: seed, alpha, reward, backward, objective, iterations, learning_rate, output_dir. */
SOFTDAG_API softdag_status softdag_experiment_set(softdag_experiment* exp, const char* key, const char* value);
SOFTDAG_API softdag_status softdag_experiment_get(const softdag_experiment* exp, const char* key, char** value);
SOFTDAG_API softdag_status softdag_experiment_env(const softdag_experiment* exp, softdag_env** out);
/* Resolved config as JSON. */
SOFTDAG_API softdag_status softdag_experiment_echo(const softdag_experiment* exp, char** out);
/* Exact analysis under the experiment's reward settings. */
SOFTDAG_API softdag_status softdag_experiment_exact(const softdag_experiment* exp, char** summary_json,
                                                    char** distribution_csv);

typedef struct softdag_train_outputs {
  char* metrics_csv;
  char* params_json;
  char* manifest_json;
  int diverged;
} softdag_train_outputs;

/* Runs training. On divergence the outputs are still filled (the manifest
 * records the diagnostic) and SOFTDAG_DIVERGED is returned. */
SOFTDAG_API softdag_status softdag_train(const softdag_experiment* exp, softdag_train_outputs* out);
SOFTDAG_API void softdag_train_outputs_free(softdag_train_outputs* out);

#ifdef __cplusplus
}
#endif

#endif /* SOFTDAG_H */
