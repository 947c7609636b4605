#include "slsr/slsr.h"

#include <new>
#include <string>

#include <json.hpp>

#include "slsr/common.hpp"
#include "slsr/config.hpp"
#include "slsr/pipeline.hpp"

using nlohmann::json;

struct slsr_ctx {
  slsr::config::PipelineConfig config;
  std::string last_error;
  std::string text_buf;  // backs the const char* getters
};

namespace {

// Exceptions never cross the C boundary: every entry point funnels through
// here and turns the four error families into status codes.
template <typename Fn>
int guarded(slsr_ctx* ctx, Fn&& fn) {
  if (ctx == nullptr) return SLSR_ERR_CONFIG;
  ctx->last_error.clear();
  try {
    fn();
    return SLSR_OK;
  } catch (const slsr::ConfigError& e) {
    ctx->last_error = e.what();
    return SLSR_ERR_CONFIG;
  } catch (const slsr::DataError& e) {
    ctx->last_error = e.what();
    return SLSR_ERR_CONFIG;
  } catch (const slsr::MissingInputError& e) {
    ctx->last_error = e.what();
    return SLSR_ERR_MISSING_INPUT;
  } catch (const slsr::NumericError& e) {
    ctx->last_error = e.what();
    return SLSR_ERR_NUMERIC;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return SLSR_ERR_NUMERIC;
  }
}

}  // namespace

extern "C" {

slsr_ctx* slsr_new(void) { return new (std::nothrow) slsr_ctx(); }

void slsr_free(slsr_ctx* ctx) { delete ctx; }

const char* slsr_version(void) { return "0.1.0"; }

int slsr_configure_json(slsr_ctx* ctx, const char* json_text) {
  return guarded(ctx, [&] {
    if (json_text == nullptr) throw slsr::ConfigError("configure: null document");
    ctx->config = slsr::config::from_json(json_text);
    slsr::config::validate(ctx->config);
  });
}

int slsr_configure_file(slsr_ctx* ctx, const char* path) {
  return guarded(ctx, [&] {
    if (path == nullptr) throw slsr::ConfigError("configure: null path");
    ctx->config = slsr::config::load_file(path);
    slsr::config::validate(ctx->config);
  });
}

int slsr_set(slsr_ctx* ctx, const char* key, const char* value) {
  return guarded(ctx, [&] {
    if (key == nullptr || value == nullptr)
      throw slsr::ConfigError("set: null key or value");
    json doc = json::parse(slsr::config::to_json(ctx->config));

    // walk the dotted path; the leaf keeps its current type where possible
    json* node = &doc;
    std::string path(key);
    size_t start = 0;
    std::string leaf;
    for (;;) {
      const size_t dot = path.find('.', start);
      const std::string part = path.substr(start, dot - start);
      if (part.empty()) throw slsr::ConfigError("set: empty segment in key '" + path + "'");
      if (dot == std::string::npos) {
        leaf = part;
        break;
      }
      if (!node->contains(part) || !(*node)[part].is_object())
        throw slsr::ConfigError("set: unknown section '" + path.substr(0, dot) + "'");
      node = &(*node)[part];
      start = dot + 1;
    }

    const bool keep_string = node->contains(leaf) && (*node)[leaf].is_string();
    if (!keep_string && json::accept(value)) {
      (*node)[leaf] = json::parse(value);
    } else {
      (*node)[leaf] = std::string(value);
    }

    slsr::config::PipelineConfig merged = slsr::config::from_json(doc.dump());
    slsr::config::validate(merged);
    ctx->config = std::move(merged);
  });
}

const char* slsr_config_json(slsr_ctx* ctx) {
  if (ctx == nullptr) return nullptr;
  const int rc = guarded(ctx, [&] { ctx->text_buf = slsr::config::to_json(ctx->config); });
  return rc == SLSR_OK ? ctx->text_buf.c_str() : nullptr;
}

int slsr_run_stage(slsr_ctx* ctx, const char* stage, int force, int* skipped) {
  return guarded(ctx, [&] {
    if (stage == nullptr) throw slsr::ConfigError("run_stage: null stage name");
    slsr::pipeline::Runner runner(ctx->config);
    const slsr::pipeline::StageResult result = runner.run_stage(stage, force != 0);
    if (skipped != nullptr) *skipped = result.skipped ? 1 : 0;
  });
}

int slsr_run_pipeline(slsr_ctx* ctx, int force) {
  return guarded(ctx, [&] {
    slsr::pipeline::Runner runner(ctx->config);
    runner.run_all(force != 0);
  });
}

const char* slsr_render_report(slsr_ctx* ctx) {
  if (ctx == nullptr) return nullptr;
  const int rc = guarded(ctx, [&] {
    slsr::pipeline::Runner runner(ctx->config);
    ctx->text_buf = runner.render_report();
  });
  return rc == SLSR_OK ? ctx->text_buf.c_str() : nullptr;
}

const char* slsr_last_error(const slsr_ctx* ctx) {
  return ctx == nullptr ? "null context" : ctx->last_error.c_str();
}

}  // extern "C"
