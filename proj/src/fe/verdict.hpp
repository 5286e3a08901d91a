#pragma once

#include "fe/gateway.hpp"
#include "fe/model.hpp"
#include "fe/stage.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace fe {

struct VerdictExemplar {
    std::string caption;
    std::string instruction;
    std::string reasoning;
    std::string verdict_json;
    bool repo_authored = false;
};

struct VerdictPrompt {
    std::string system_preamble;
    std::vector<VerdictExemplar> exemplars;
    std::string query_caption;
    std::string query_instruction;

    // system, then one user/assistant pair per exemplar, then the query.
    std::vector<ChatMessage> messages() const;
};

VerdictPrompt build_verdict_prompt(std::string_view caption, std::string_view instruction);

// The assistant turn for an exemplar: reasoning, newline, JSON.
std::string render_exemplar_reply(const VerdictExemplar& ex);

enum class VerdictError { NoJsonFound, MissingVerdictField, InconsistentVerdict };
std::string_view to_string(VerdictError e);

class VerdictParseError : public Error {
public:
    VerdictParseError(VerdictError kind, const std::string& what) : Error(ErrorCode::Parse, what), kind_(kind) {}
    VerdictError kind() const noexcept { return kind_; }

private:
    VerdictError kind_;
};

Verdict parse_verdict(std::string_view llm_text);

EditKind classify_edit_kind(std::string_view instruction);

struct VerdictOptions {
    double temperature = 0.0;
    int max_tokens = 512;
};

// Raw -> Verdicted. Infeasible, unparseable and backend failures become
// rejections; the run itself never aborts on a single record.
Manifest run_verdict_stage(const Manifest& in, Gateway& gateway, const VerdictOptions& opts = {},
                           StageReport* report = nullptr);

} // namespace fe
