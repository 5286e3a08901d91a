#include "fe/fe.h"

#include "fe/pipeline.hpp"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

struct fe_context {
    std::unique_ptr<fe::Session> session;
    std::string last_error;
};

namespace {

thread_local std::string g_last_error;

fe_status status_for(fe::ErrorCode code) {
    switch (code) {
    case fe::ErrorCode::InvalidArgument: return FE_ERR_INVALID_ARGUMENT;
    case fe::ErrorCode::Io: return FE_ERR_IO;
    case fe::ErrorCode::Parse: return FE_ERR_PARSE;
    case fe::ErrorCode::DuplicateId: return FE_ERR_DUPLICATE_ID;
    case fe::ErrorCode::StageMismatch: return FE_ERR_STAGE_MISMATCH;
    case fe::ErrorCode::Backend: return FE_ERR_BACKEND;
    case fe::ErrorCode::Protocol: return FE_ERR_PROTOCOL;
    case fe::ErrorCode::NoEligibleRecords: return FE_ERR_NO_ELIGIBLE_RECORDS;
    case fe::ErrorCode::Internal: return FE_ERR_INTERNAL;
    }
    return FE_ERR_INTERNAL;
}

char* dup_string(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void set_error(fe_context* ctx, std::string msg) {
    g_last_error = msg;
    if (ctx) ctx->last_error = std::move(msg);
}

template <class F>
fe_status guarded(fe_context* ctx, F&& f) {
    try {
        f();
        if (ctx) ctx->last_error.clear();
        return FE_OK;
    } catch (const fe::Error& e) {
        set_error(ctx, e.what());
        return status_for(e.code());
    } catch (const std::bad_alloc&) {
        set_error(ctx, "out of memory");
        return FE_ERR_INTERNAL;
    } catch (const std::exception& e) {
        set_error(ctx, e.what());
        return FE_ERR_INTERNAL;
    }
}

std::string arg(const char* s) { return s ? s : ""; }

void require(fe_context* ctx, const char* s, const char* what) {
    if (!ctx) throw fe::Error(fe::ErrorCode::InvalidArgument, "null context");
    if (!s || !*s) throw fe::Error(fe::ErrorCode::InvalidArgument, std::string(what) + " is required");
}

void emit(const fe::json& j, char** out) {
    if (out) *out = dup_string(j.dump());
}

} // namespace

extern "C" {

fe_status fe_context_create(const char* config_path, fe_context** out) {
    if (!out) {
        set_error(nullptr, "out pointer is null");
        return FE_ERR_INVALID_ARGUMENT;
    }
    *out = nullptr;
    return guarded(nullptr, [&] {
        auto config = fe::RunConfig::defaults();
        if (config_path && *config_path) config.load_file(config_path);
        auto ctx = std::make_unique<fe_context>();
        ctx->session = std::make_unique<fe::Session>(std::move(config));
        *out = ctx.release();
    });
}

void fe_context_destroy(fe_context* ctx) { delete ctx; }

fe_status fe_context_set(fe_context* ctx, const char* key, const char* value) {
    return guarded(ctx, [&] {
        require(ctx, key, "key");
        ctx->session->config().set(key, arg(value), std::filesystem::current_path());
    });
}

const char* fe_last_error(const fe_context* ctx) {
    return ctx ? ctx->last_error.c_str() : g_last_error.c_str();
}

fe_status fe_run_stage(fe_context* ctx, const char* stage, const char* in_manifest, const char* out_manifest,
                       char** summary_json) {
    return guarded(ctx, [&] {
        require(ctx, stage, "stage");
        require(ctx, in_manifest, "input manifest");
        require(ctx, out_manifest, "output manifest");
        std::string s = stage;
        auto report = s == "run-all" ? ctx->session->run_all(in_manifest, out_manifest)
                                     : ctx->session->run_stage(s, in_manifest, out_manifest);
        emit(report, summary_json);
    });
}

fe_status fe_stats(fe_context* ctx, const char* manifest, char** report_json) {
    return guarded(ctx, [&] {
        require(ctx, manifest, "manifest");
        emit(fe::manifest_stats(fe::load_manifest(manifest)), report_json);
    });
}

fe_status fe_testset(fe_context* ctx, const char* pool_manifest, const char* out_manifest, char** summary_json) {
    return guarded(ctx, [&] {
        require(ctx, pool_manifest, "pool manifest");
        require(ctx, out_manifest, "output manifest");
        emit(ctx->session->testset(pool_manifest, out_manifest), summary_json);
    });
}

fe_status fe_eval_tifa(fe_context* ctx, const char* manifest, const char* out_report, char** report_json) {
    return guarded(ctx, [&] {
        require(ctx, manifest, "manifest");
        emit(ctx->session->eval_tifa(manifest, arg(out_report)), report_json);
    });
}

fe_status fe_eval_human(fe_context* ctx, const char* ratings_csv, const char* out_report, char** report_json) {
    return guarded(ctx, [&] {
        require(ctx, ratings_csv, "ratings file");
        emit(ctx->session->eval_human(ratings_csv, arg(out_report)), report_json);
    });
}

fe_status fe_gateway_stats(fe_context* ctx, char** stats_json) {
    return guarded(ctx, [&] {
        if (!ctx) throw fe::Error(fe::ErrorCode::InvalidArgument, "null context");
        auto s = ctx->session->gateway().stats();
        emit({{"attempts", s.attempts}, {"backend_successes", s.backend_successes}, {"cache_hits", s.cache_hits}},
             stats_json);
    });
}

void fe_string_free(char* s) { std::free(s); }

const char* fe_status_name(fe_status status) {
    switch (status) {
    case FE_OK: return "ok";
    case FE_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case FE_ERR_IO: return "io";
    case FE_ERR_PARSE: return "parse";
    case FE_ERR_DUPLICATE_ID: return "duplicate_id";
    case FE_ERR_STAGE_MISMATCH: return "stage_mismatch";
    case FE_ERR_BACKEND: return "backend";
    case FE_ERR_PROTOCOL: return "protocol";
    case FE_ERR_NO_ELIGIBLE_RECORDS: return "no_eligible_records";
    case FE_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* fe_version(void) { return "0.1.0"; }

} // extern "C"
