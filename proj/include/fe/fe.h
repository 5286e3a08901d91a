#ifndef FE_FE_H
#define FE_FE_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define FE_API __declspec(dllexport)
#else
#define FE_API __attribute__((visibility("default")))
#endif

typedef enum fe_status {
    FE_OK = 0,
    FE_ERR_INVALID_ARGUMENT = 1,
    FE_ERR_IO = 2,
    FE_ERR_PARSE = 3,
    FE_ERR_DUPLICATE_ID = 4,
    FE_ERR_STAGE_MISMATCH = 5,
    FE_ERR_BACKEND = 6,
    FE_ERR_PROTOCOL = 7,
    FE_ERR_NO_ELIGIBLE_RECORDS = 8,
    FE_ERR_INTERNAL = 9
} fe_status;

typedef struct fe_context fe_context;

/* config_path may be NULL. Environment variables FE_API_KEY, FE_CACHE_DIR and
   FE_<CAP>_URL are read here. */
FE_API fe_status fe_context_create(const char* config_path, fe_context** out);
FE_API void fe_context_destroy(fe_context* ctx);

/* Overrides one config key (same names as the config file). */
FE_API fe_status fe_context_set(fe_context* ctx, const char* key, const char* value);

/* Message for the last failed call on ctx, or on this thread when ctx is NULL.
   Valid until the next call. */
FE_API const char* fe_last_error(const fe_context* ctx);

/* stage: verdict, ground, inpaint, rerank, export or run-all. On success
   *summary_json (if non-NULL) receives a JSON string to free with
   fe_string_free. */
FE_API fe_status fe_run_stage(fe_context* ctx, const char* stage, const char* in_manifest, const char* out_manifest,
                              char** summary_json);

FE_API fe_status fe_stats(fe_context* ctx, const char* manifest, char** report_json);
FE_API fe_status fe_testset(fe_context* ctx, const char* pool_manifest, const char* out_manifest,
                            char** summary_json);
/* out_report may be NULL or empty to skip writing a file. */
FE_API fe_status fe_eval_tifa(fe_context* ctx, const char* manifest, const char* out_report, char** report_json);
FE_API fe_status fe_eval_human(fe_context* ctx, const char* ratings_csv, const char* out_report, char** report_json);

/* Gateway counters as JSON: attempts, backend_successes, cache_hits. */
FE_API fe_status fe_gateway_stats(fe_context* ctx, char** stats_json);

FE_API void fe_string_free(char* s);
FE_API const char* fe_status_name(fe_status status);
FE_API const char* fe_version(void);

#ifdef __cplusplus
}
#endif

#endif
