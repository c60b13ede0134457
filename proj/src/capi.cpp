#include "foodpipe.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "core/imageio.hpp"
#include "core/pipeline.hpp"

using namespace foodpipe;

struct fp_pipeline {
  PipelineConfig config;
  // Lazily loaded and kept for repeated single-image inference.
  std::unique_ptr<PipelineModels> models;
};

namespace {

thread_local std::string g_last_error;

fp_status status_from(const Error& e) {
  g_last_error = e.what();
  switch (e.kind()) {
    case ErrorKind::InvalidArgument: return FP_ERROR_INVALID_ARGUMENT;
    case ErrorKind::Io: return FP_ERROR_IO;
    case ErrorKind::Parse: return FP_ERROR_PARSE;
    case ErrorKind::Validation: return FP_ERROR_VALIDATION;
    case ErrorKind::Runtime: return FP_ERROR_RUNTIME;
  }
  return FP_ERROR_RUNTIME;
}

template <typename Fn>
fp_status guarded(Fn&& fn) {
  try {
    fn();
    return FP_OK;
  } catch (const Error& e) {
    return status_from(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FP_ERROR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return FP_ERROR_RUNTIME;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

using CommandFn = std::string (*)(const PipelineConfig&);

fp_status run_command(fp_pipeline* pipeline, char** summary, CommandFn command) {
  if (!pipeline) {
    g_last_error = "null pipeline handle";
    return FP_ERROR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    const std::string text = command(pipeline->config);
    if (summary) *summary = dup_string(text);
  });
}

}  // namespace

extern "C" {

const char* fp_version(void) { return "0.1.0"; }

const char* fp_last_error(void) { return g_last_error.c_str(); }

fp_status fp_pipeline_create(const char* config_path, fp_pipeline** out) {
  if (!config_path || !out) {
    g_last_error = "null argument";
    return FP_ERROR_INVALID_ARGUMENT;
  }
  *out = nullptr;
  return guarded([&] {
    auto handle = std::make_unique<fp_pipeline>();
    handle->config = PipelineConfig::from_file(config_path);
    *out = handle.release();
  });
}

fp_status fp_pipeline_create_from_json(const char* json_text, const char* base_dir,
                                       fp_pipeline** out) {
  if (!json_text || !out) {
    g_last_error = "null argument";
    return FP_ERROR_INVALID_ARGUMENT;
  }
  *out = nullptr;
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::Parse, "config json: ", e.what());
    }
    auto handle = std::make_unique<fp_pipeline>();
    handle->config = PipelineConfig::from_json(j, base_dir ? base_dir : "");
    *out = handle.release();
  });
}

void fp_pipeline_destroy(fp_pipeline* pipeline) { delete pipeline; }

fp_status fp_pipeline_set_option(fp_pipeline* pipeline, const char* key, const char* value) {
  if (!pipeline || !key || !value) {
    g_last_error = "null argument";
    return FP_ERROR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    pipeline->config.set_option(key, value);
    pipeline->models.reset();  // config changes may repoint checkpoints
  });
}

fp_status fp_pipeline_config_hash(fp_pipeline* pipeline, char* buffer, int buffer_size) {
  if (!pipeline || !buffer || buffer_size < 17) {
    g_last_error = "buffer too small for config hash";
    return FP_ERROR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    const std::string hash = pipeline->config.config_hash();
    std::snprintf(buffer, static_cast<size_t>(buffer_size), "%s", hash.c_str());
  });
}

fp_status fp_run_generate_synthetic(fp_pipeline* p, char** s) {
  return run_command(p, s, &cmd_generate_synthetic);
}
fp_status fp_run_augment(fp_pipeline* p, char** s) { return run_command(p, s, &cmd_augment); }
fp_status fp_run_train_detector(fp_pipeline* p, char** s) {
  return run_command(p, s, &cmd_train_detector);
}
fp_status fp_run_train_classifier(fp_pipeline* p, char** s) {
  return run_command(p, s, &cmd_train_classifier);
}
fp_status fp_run_train_energy_gan(fp_pipeline* p, char** s) {
  return run_command(p, s, &cmd_train_energy_gan);
}
fp_status fp_run_train_regressor(fp_pipeline* p, char** s) {
  return run_command(p, s, &cmd_train_regressor);
}
fp_status fp_run_infer(fp_pipeline* p, char** s) { return run_command(p, s, &cmd_infer); }
fp_status fp_run_evaluate(fp_pipeline* p, char** s) { return run_command(p, s, &cmd_evaluate); }
fp_status fp_run_plot(fp_pipeline* p, char** s) { return run_command(p, s, &cmd_plot); }

fp_status fp_infer_image(fp_pipeline* pipeline, const char* image_path,
                         const char* out_json_path, const char* out_png_path) {
  if (!pipeline || !image_path || !out_json_path) {
    g_last_error = "null argument";
    return FP_ERROR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    if (!pipeline->models)
      pipeline->models = std::make_unique<PipelineModels>(load_models(pipeline->config));
    RgbImage image = io::load_rgb_png(image_path);
    const std::string image_id =
        std::filesystem::path(image_path).stem().string();
    OccasionResult result = run_end_to_end(pipeline->config, *pipeline->models, image,
                                           image_id, nullptr);
    std::ofstream out(out_json_path);
    if (!out) raise(ErrorKind::Io, "cannot write '", out_json_path, "'");
    out << result.to_json().dump(2) << "\n";
    if (out_png_path) io::save_rgb_png(out_png_path, render_annotated(image, result));
  });
}

void fp_string_free(char* s) { std::free(s); }

}  // extern "C"
