#ifndef KESTREL_KESTREL_H
#define KESTREL_KESTREL_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(KESTREL_BUILDING_LIBRARY)
#define KESTREL_API __attribute__((visibility("default")))
#else
#define KESTREL_API
#endif

/* Status codes. Every call returns one; details of the last failure on the
 * calling thread are available from kestrel_last_error(). */
typedef enum kestrel_status {
  KESTREL_OK = 0,
  KESTREL_E_INVALID_ARGUMENT = 1,
  KESTREL_E_INVALID_TARGET = 2,
  KESTREL_E_INVALID_CONFIG = 3,
  KESTREL_E_PARSE_FAILURE = 4,
  KESTREL_E_SCHEMA_VIOLATION = 5,
  KESTREL_E_UNKNOWN_EVIDENCE_KIND = 6,
  KESTREL_E_BACKEND_UNAVAILABLE = 7,
  KESTREL_E_MALFORMED_RESPONSE = 8,
  KESTREL_E_EMPTY_MASK = 9,
  KESTREL_E_IMAGE_DECODE = 10,
  KESTREL_E_NO_INSTANCES = 11,
  KESTREL_E_MISSING_SCOPE = 12,
  KESTREL_E_EMPTY_CHECKS = 13,
  KESTREL_E_EMPTY_INPUT = 14,
  KESTREL_E_MISSING_PREDICTION = 15,
  KESTREL_E_CACHE_MISS = 16,
  KESTREL_E_SCRIPT_MISMATCH = 17,
  KESTREL_E_SCRIPT_EXHAUSTED = 18,
  KESTREL_E_IO = 19,
  KESTREL_E_INTERNAL = 100
} kestrel_status;

/* Opaque engine configuration. */
typedef struct kestrel_config kestrel_config;

KESTREL_API const char* kestrel_version(void);
KESTREL_API const char* kestrel_status_name(kestrel_status status);
/* Message of the last failed call on this thread ("" if none). */
KESTREL_API const char* kestrel_last_error(void);
/* Frees strings returned through char** out-parameters. */
KESTREL_API void kestrel_string_free(char* s);

/* ---- configuration ---- */

KESTREL_API kestrel_status kestrel_config_new(kestrel_config** out);
KESTREL_API void kestrel_config_free(kestrel_config* config);
/* Merges a config file. On KESTREL_E_INVALID_CONFIG, *diagnostics (if given)
 * receives a JSON array of {"field","message"}. */
KESTREL_API kestrel_status kestrel_config_load(kestrel_config* config, const char* path, char** diagnostics);
/* Sets one dotted key ("gate.position", "ablation.use_grounding", ...). */
KESTREL_API kestrel_status kestrel_config_set(kestrel_config* config, const char* key, const char* value);
/* Applies KESTREL_<SECTION>__<KEY> variables from the process environment. */
KESTREL_API kestrel_status kestrel_config_apply_env(kestrel_config* config, char** diagnostics);
/* Range checks; KESTREL_E_INVALID_CONFIG with diagnostics when any fail. */
KESTREL_API kestrel_status kestrel_config_validate(const kestrel_config* config, char** diagnostics);
KESTREL_API kestrel_status kestrel_config_serialize(const kestrel_config* config, char** text);
/* JSON array of every recognized dotted key. */
KESTREL_API kestrel_status kestrel_config_keys(char** json);

/* ---- runs ----
 * Run calls write <out_dir>/traces.jsonl, <out_dir>/artifacts/, and
 * <out_dir>/manifest.json; recorded responses go to <out_dir>/responses.jsonl
 * when run.record is on. Summaries are JSON objects. */

/* One image and question; *trace_json receives the trace record. */
KESTREL_API kestrel_status kestrel_run_single(const kestrel_config* config, const char* image_path,
                                              const char* question, const char* out_dir, char** trace_json);
/* kind: "pope" or "mme" (line-delimited JSON) or "mme-tsv" (needs subset). */
KESTREL_API kestrel_status kestrel_run_dataset(const kestrel_config* config, const char* kind, const char* data_path,
                                               const char* image_root, const char* subset, const char* out_dir,
                                               char** summary_json);
/* Synthetic scenes; also writes <out_dir>/labels.jsonl. */
KESTREL_API kestrel_status kestrel_simulate(const kestrel_config* config, int scenes, const char* out_dir,
                                            char** summary_json);
/* Without responses_path: recomputes verdicts, gates and answers of the
 * recorded traces under `config`. With it: re-runs the samples named by the
 * manifest next to the traces, answering every call from the recording. */
KESTREL_API kestrel_status kestrel_replay(const kestrel_config* config, const char* traces_path,
                                          const char* responses_path, const char* out_dir, char** summary_json);

/* ---- evaluation ----
 * Reports are JSON objects carrying a "table" string for display. */

KESTREL_API kestrel_status kestrel_eval_pope(const char* traces_path, const char* labels_path, char** report_json);
KESTREL_API kestrel_status kestrel_eval_mme(const char* traces_path, const char* labels_path, char** report_json);
KESTREL_API kestrel_status kestrel_transitions(const char* traces_path, const char* labels_path, char** report_json);
KESTREL_API kestrel_status kestrel_efficiency(const char* traces_path, int max_rounds, char** report_json);
/* Labels file from a dataset: kind "pope", "mme" or "mme-tsv". */
KESTREL_API kestrel_status kestrel_dataset_labels(const char* kind, const char* data_path, const char* subset,
                                                  const char* out_path);
/* Human-readable rendering of one record (sample_id) or all (NULL). */
KESTREL_API kestrel_status kestrel_render_trace(const char* traces_path, const char* sample_id, char** text);

#ifdef __cplusplus
}
#endif

#endif /* KESTREL_KESTREL_H */
