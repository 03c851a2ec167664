#ifndef ADAPTIVE_TOR_H
#define ADAPTIVE_TOR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AtorStatus {
  ATOR_STATUS_OK = 0,
  ATOR_STATUS_NULL_POINTER = 1,
  ATOR_STATUS_INVALID_UTF8 = 2,
  ATOR_STATUS_CONFIG = 3,
  ATOR_STATUS_IO = 4,
  ATOR_STATUS_DATASET = 5,
  ATOR_STATUS_INDEX = 6,
  ATOR_STATUS_BACKEND = 7,
  ATOR_STATUS_PIPELINE = 8,
  ATOR_STATUS_JSON = 9,
  ATOR_STATUS_PANIC = 10,
} AtorStatus;

/**
 * Opaque engine configuration.
 */
typedef struct AtorConfig AtorConfig;

/**
 * Opaque engine: indexed knowledge base plus model backends.
 */
typedef struct AtorEngine AtorEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ator_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void ator_string_free(char *s);

/**
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum AtorStatus ator_config_default(struct AtorConfig **out);

/**
 * Parse and validate a TOML configuration. `ATOR_*` environment overrides are
 * applied after parsing.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum AtorStatus ator_config_from_toml(const char *toml, struct AtorConfig **out);

/**
 * # Safety
 * `cfg` must be NULL or a handle from `ator_config_*` not yet freed.
 */
void ator_config_free(struct AtorConfig *cfg);

/**
 * Build an engine over a JSON array of passages (`id`, `text`,
 * `intent_labels`, optional `domain`). The config handle is copied and may be
 * freed afterwards.
 *
 * # Safety
 * `cfg` must be a live config handle; `passages_json` a NUL-terminated string;
 * `out` writable.
 */
enum AtorStatus ator_engine_new(const struct AtorConfig *cfg,
                                const char *passages_json,
                                struct AtorEngine **out);

/**
 * Build an engine from a query file and optional catalog (NULL to derive it).
 *
 * # Safety
 * `cfg` must be a live config handle; `dataset_path` NUL-terminated;
 * `catalog_path` NULL or NUL-terminated; `out` writable.
 */
enum AtorStatus ator_engine_from_dataset(const struct AtorConfig *cfg,
                                         const char *dataset_path,
                                         const char *catalog_path,
                                         struct AtorEngine **out);

/**
 * # Safety
 * `engine` must be NULL or a handle from `ator_engine_*` not yet freed.
 */
void ator_engine_free(struct AtorEngine *engine);

/**
 * Routing decision for `text` as JSON (`decision` and `ledger`).
 *
 * # Safety
 * `engine` must be live; `text` NUL-terminated; `out_json` writable. Free the
 * result with `ator_string_free`.
 */
enum AtorStatus ator_engine_route(const struct AtorEngine *engine,
                                  const char *text,
                                  char **out_json);

/**
 * Run one query record (`id`, `text`, `intents`) in `mode` ("adaptive",
 * "fixed3" or "standard") and return its trace as JSON. A query that fails
 * inside the pipeline still yields a trace with its `error` field set.
 *
 * # Safety
 * `engine` must be live; `query_json` and `mode` NUL-terminated; `out_json`
 * writable. Free the result with `ator_string_free`.
 */
enum AtorStatus ator_engine_process(const struct AtorEngine *engine,
                                    const char *query_json,
                                    const char *mode,
                                    char **out_json);

/**
 * Complexity index of `text` under the default weights and lexicons.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` writable.
 */
enum AtorStatus ator_compute_qci(const char *text, double *out);

/**
 * Token estimate used by the cost ledger. Returns 0 for NULL or non-UTF-8 input.
 *
 * # Safety
 * `text` must be NULL or NUL-terminated.
 */
uint64_t ator_estimate_tokens(const char *text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAPTIVE_TOR_H */
