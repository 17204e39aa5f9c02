#include "readtwice/readtwice.h"

#include <exception>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "app/commands.hpp"
#include "app/run_config.hpp"
#include "common/error.hpp"

struct rt_context {
  readtwice::app::RunConfig config;
  std::string config_json;
  std::string result;
  rt_log_fn log_fn = nullptr;
  void* log_user = nullptr;
};

namespace {

using readtwice::ErrorKind;

thread_local std::string g_last_error;

rt_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return RT_ERR_INVALID_ARGUMENT;
    case ErrorKind::kDimension: return RT_ERR_DIMENSION;
    case ErrorKind::kContract: return RT_ERR_CONTRACT;
    case ErrorKind::kParse: return RT_ERR_PARSE;
    case ErrorKind::kIo: return RT_ERR_IO;
    case ErrorKind::kNumeric: return RT_ERR_NUMERIC;
  }
  return RT_ERR_INTERNAL;
}

rt_status set_error(rt_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <typename Fn>
rt_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const readtwice::Error& e) {
    return set_error(status_of(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(RT_ERR_PARSE, e.what());
  } catch (const std::exception& e) {
    return set_error(RT_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(RT_ERR_INTERNAL, "unknown exception");
  }
}

using Command = nlohmann::json (*)(const readtwice::app::RunConfig&,
                                   const readtwice::app::LogSink&);

rt_status run_command(rt_context* ctx, Command command) {
  if (!ctx) return set_error(RT_ERR_INVALID_ARGUMENT, "null context");
  return guarded([&] {
    readtwice::app::LogSink sink;
    if (ctx->log_fn) {
      sink = [ctx](const std::string& line) { ctx->log_fn(line.c_str(), ctx->log_user); };
    }
    nlohmann::json summary = command(ctx->config, sink);
    ctx->result = summary.dump(2);
    if (summary.contains("passed") && !summary.at("passed").get<bool>()) {
      return set_error(RT_ERR_CHECK_FAILED, "gradient check failed");
    }
    return RT_OK;
  });
}

}  // namespace

extern "C" {

const char* rt_version(void) { return "0.1.0"; }

const char* rt_status_string(rt_status status) {
  switch (status) {
    case RT_OK: return "ok";
    case RT_ERR_INVALID_ARGUMENT: return "invalid argument";
    case RT_ERR_DIMENSION: return "dimension mismatch";
    case RT_ERR_CONTRACT: return "contract violation";
    case RT_ERR_PARSE: return "parse error";
    case RT_ERR_IO: return "i/o error";
    case RT_ERR_NUMERIC: return "numeric error";
    case RT_ERR_CHECK_FAILED: return "check failed";
    case RT_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* rt_last_error(void) { return g_last_error.c_str(); }

rt_status rt_context_create(const char* config_path, const char* overrides_json, rt_context** out) {
  if (!out) return set_error(RT_ERR_INVALID_ARGUMENT, "null output pointer");
  *out = nullptr;
  return guarded([&] {
    nlohmann::json overrides = nlohmann::json::object();
    if (overrides_json && *overrides_json) {
      try {
        overrides = nlohmann::json::parse(overrides_json);
      } catch (const nlohmann::json::exception& e) {
        return set_error(RT_ERR_PARSE, std::string("overrides: ") + e.what());
      }
    }
    auto ctx = std::make_unique<rt_context>();
    ctx->config = readtwice::app::load_config(config_path ? config_path : "", overrides);
    ctx->config_json = ctx->config.to_json().dump(2);
    *out = ctx.release();
    return RT_OK;
  });
}

void rt_context_destroy(rt_context* ctx) { delete ctx; }

rt_status rt_context_set_log(rt_context* ctx, rt_log_fn fn, void* user) {
  if (!ctx) return set_error(RT_ERR_INVALID_ARGUMENT, "null context");
  ctx->log_fn = fn;
  ctx->log_user = user;
  return RT_OK;
}

const char* rt_context_config(const rt_context* ctx) { return ctx ? ctx->config_json.c_str() : ""; }

const char* rt_context_result(const rt_context* ctx) { return ctx ? ctx->result.c_str() : ""; }

rt_status rt_pretrain(rt_context* ctx) { return run_command(ctx, readtwice::app::cmd_pretrain); }
rt_status rt_finetune(rt_context* ctx) { return run_command(ctx, readtwice::app::cmd_finetune); }
rt_status rt_predict(rt_context* ctx) { return run_command(ctx, readtwice::app::cmd_predict); }
rt_status rt_evaluate(rt_context* ctx) { return run_command(ctx, readtwice::app::cmd_evaluate); }
rt_status rt_gradcheck(rt_context* ctx) { return run_command(ctx, readtwice::app::cmd_gradcheck); }
rt_status rt_gen_probe(rt_context* ctx) { return run_command(ctx, readtwice::app::cmd_gen_probe); }

rt_status rt_run(rt_context* ctx, const char* command) {
  const std::string name = command ? command : "";
  if (name == "pretrain") return rt_pretrain(ctx);
  if (name == "finetune") return rt_finetune(ctx);
  if (name == "predict") return rt_predict(ctx);
  if (name == "evaluate") return rt_evaluate(ctx);
  if (name == "gradcheck") return rt_gradcheck(ctx);
  if (name == "gen-probe") return rt_gen_probe(ctx);
  return set_error(RT_ERR_INVALID_ARGUMENT, "unknown command '" + name + "'");
}

const char* rt_config_keys(void) {
  static const std::string keys = [] {
    std::string out;
    for (const auto& k : readtwice::app::config_keys()) out += k + "\n";
    return out;
  }();
  return keys.c_str();
}

}  // extern "C"
