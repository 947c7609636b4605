#ifndef SLSR_H
#define SLSR_H

/* C interface to the re-identification pipeline. All work happens behind an
 * opaque context; every call returns a status code and leaves a message
 * retrievable with slsr_last_error on failure.
 *
 * Status codes (also used as CLI exit codes):
 *   0  success
 *   1  configuration or input-data error (message names the field path)
 *   2  missing prerequisite artifact (message names the producing command)
 *   3  runtime numeric failure (non-finite loss or gradient)
 */

#ifdef __cplusplus
extern "C" {
#endif

typedef struct slsr_ctx slsr_ctx;

enum {
  SLSR_OK = 0,
  SLSR_ERR_CONFIG = 1,
  SLSR_ERR_MISSING_INPUT = 2,
  SLSR_ERR_NUMERIC = 3
};

/* A fresh context carries the default configuration. Never returns NULL
 * except on allocation failure. */
slsr_ctx* slsr_new(void);
void slsr_free(slsr_ctx* ctx);

const char* slsr_version(void);

/* Replace the configuration from a JSON document / file. Unknown keys and
 * ill-typed values are rejected with the offending field path. */
int slsr_configure_json(slsr_ctx* ctx, const char* json_text);
int slsr_configure_file(slsr_ctx* ctx, const char* path);

/* Override one field by dotted path, e.g. ("train.k", "4") or
 * ("paths.output_dir", "out/run1"). The value is interpreted against the
 * field's type; the merged configuration is re-validated immediately. */
int slsr_set(slsr_ctx* ctx, const char* key, const char* value);

/* Canonical JSON of the current configuration, owned by the context and
 * valid until the next call on it. */
const char* slsr_config_json(slsr_ctx* ctx);

/* Run one stage: synth, train-features, cluster, gan, generate, train,
 * eval, report. A stage whose configuration hash and artifacts are intact
 * is skipped unless force is nonzero; *skipped (optional) reports which.
 */
int slsr_run_stage(slsr_ctx* ctx, const char* stage, int force, int* skipped);

/* Chain every applicable stage end to end. */
int slsr_run_pipeline(slsr_ctx* ctx, int force);

/* Aggregated summary tables (cluster quality, retrieval grid) as markdown.
 * Returns NULL on failure; the string is owned by the context and valid
 * until the next call on it. */
const char* slsr_render_report(slsr_ctx* ctx);

/* Message from the most recent failing call; empty string if none. */
const char* slsr_last_error(const slsr_ctx* ctx);

#ifdef __cplusplus
}
#endif

#endif /* SLSR_H */
