/*
 * foodpipe C API: image-based dietary assessment pipeline.
 *
 * All functionality is driven by a JSON config file. Create a pipeline
 * handle from a config, optionally override keys, then run commands.
 * Functions return FP_OK on success; on failure they return an error code
 * and fp_last_error() describes the failure for the calling thread.
 */
#ifndef FOODPIPE_H
#define FOODPIPE_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fp_status {
  FP_OK = 0,
  FP_ERROR_INVALID_ARGUMENT = 1,
  FP_ERROR_IO = 2,
  FP_ERROR_PARSE = 3,
  FP_ERROR_VALIDATION = 4,
  FP_ERROR_RUNTIME = 5
} fp_status;

typedef struct fp_pipeline fp_pipeline;

const char* fp_version(void);

/* Message for the most recent failure on this thread; never NULL. */
const char* fp_last_error(void);

fp_status fp_pipeline_create(const char* config_path, fp_pipeline** out);
fp_status fp_pipeline_create_from_json(const char* json_text, const char* base_dir,
                                       fp_pipeline** out);
void fp_pipeline_destroy(fp_pipeline* pipeline);

/* Dotted-path config override, e.g. ("gan.lambda", "100"). */
fp_status fp_pipeline_set_option(fp_pipeline* pipeline, const char* key, const char* value);

/* Hex hash of the effective config; buffer must hold >= 17 bytes. */
fp_status fp_pipeline_config_hash(fp_pipeline* pipeline, char* buffer, int buffer_size);

/* Command drivers; summary (when non-NULL) receives a malloc'd string the
 * caller frees with fp_string_free. */
fp_status fp_run_generate_synthetic(fp_pipeline* pipeline, char** summary);
fp_status fp_run_augment(fp_pipeline* pipeline, char** summary);
fp_status fp_run_train_detector(fp_pipeline* pipeline, char** summary);
fp_status fp_run_train_classifier(fp_pipeline* pipeline, char** summary);
fp_status fp_run_train_energy_gan(fp_pipeline* pipeline, char** summary);
fp_status fp_run_train_regressor(fp_pipeline* pipeline, char** summary);
fp_status fp_run_infer(fp_pipeline* pipeline, char** summary);
fp_status fp_run_evaluate(fp_pipeline* pipeline, char** summary);
fp_status fp_run_plot(fp_pipeline* pipeline, char** summary);

/* End-to-end inference on a single image. Writes the occasion result JSON to
 * out_json_path and, when out_png_path is non-NULL, an annotated PNG. */
fp_status fp_infer_image(fp_pipeline* pipeline, const char* image_path,
                         const char* out_json_path, const char* out_png_path);

void fp_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* FOODPIPE_H */
