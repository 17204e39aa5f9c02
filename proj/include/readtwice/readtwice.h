#ifndef READTWICE_READTWICE_H
#define READTWICE_READTWICE_H

#include <stddef.h>

#if defined(_WIN32)
#define RT_API __declspec(dllexport)
#else
#define RT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rt_status {
  RT_OK = 0,
  RT_ERR_INVALID_ARGUMENT = 1, /* bad config key/value, missing path, unknown command */
  RT_ERR_DIMENSION = 2,        /* shape mismatch, e.g. checkpoint vs config */
  RT_ERR_CONTRACT = 3,         /* violated precondition inside the library */
  RT_ERR_PARSE = 4,            /* malformed JSON / corpus / checkpoint */
  RT_ERR_IO = 5,               /* file missing or not writable */
  RT_ERR_NUMERIC = 6,          /* non-finite loss */
  RT_ERR_CHECK_FAILED = 7,     /* gradcheck ran and at least one loss failed */
  RT_ERR_INTERNAL = 8
} rt_status;

typedef struct rt_context rt_context;

/* Receives one progress line (no trailing newline). */
typedef void (*rt_log_fn)(const char* line, void* user);

RT_API const char* rt_version(void);
RT_API const char* rt_status_string(rt_status status);

/* Message of the last failed call on this thread; "" when none. */
RT_API const char* rt_last_error(void);

/* Resolves a configuration from a JSON file (NULL or "" = defaults) and a JSON
   object of overrides (NULL = none). Unknown keys fail here, before any work. */
RT_API rt_status rt_context_create(const char* config_path, const char* overrides_json,
                                   rt_context** out);
RT_API void rt_context_destroy(rt_context* ctx);

/* NULL callback silences progress output. */
RT_API rt_status rt_context_set_log(rt_context* ctx, rt_log_fn fn, void* user);

/* Resolved configuration as JSON; owned by ctx, valid until destroy. */
RT_API const char* rt_context_config(const rt_context* ctx);

/* Summary JSON of the last successful command; owned by ctx. "" before any. */
RT_API const char* rt_context_result(const rt_context* ctx);

/* Command names: pretrain, finetune, predict, evaluate, gradcheck, gen-probe. */
RT_API rt_status rt_run(rt_context* ctx, const char* command);

RT_API rt_status rt_pretrain(rt_context* ctx);
RT_API rt_status rt_finetune(rt_context* ctx);
RT_API rt_status rt_predict(rt_context* ctx);
RT_API rt_status rt_evaluate(rt_context* ctx);
RT_API rt_status rt_gradcheck(rt_context* ctx);
RT_API rt_status rt_gen_probe(rt_context* ctx);

/* Every accepted configuration key, newline separated. Static storage. */
RT_API const char* rt_config_keys(void);

#ifdef __cplusplus
}
#endif

#endif
