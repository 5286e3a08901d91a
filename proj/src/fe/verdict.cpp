#include "fe/verdict.hpp"

#include "fe/prompt_assets.hpp"
#include "fe/text.hpp"

#include <array>

namespace fe {

namespace {

std::string verdict_json(std::string_view verdict, std::string_view entity) {
    return "{\"verdict\": \"" + std::string(verdict) + "\", \"entity\": \"" + std::string(entity) + "\"}";
}

const VerdictPrompt& prompt_template() {
    static const VerdictPrompt tmpl = [] {
        auto j = json::parse(assets::verdict_prompt());
        VerdictPrompt p;
        p.system_preamble = j.at("preamble").get<std::string>();
        for (const auto& e : j.at("exemplars")) {
            p.exemplars.push_back(VerdictExemplar{
                e.at("caption").get<std::string>(), e.at("instruction").get<std::string>(),
                e.at("reasoning").get<std::string>(),
                verdict_json(e.at("verdict").get<std::string>(), e.at("entity").get<std::string>()),
                e.value("source", "") == "repo"});
        }
        return p;
    }();
    return tmpl;
}

std::string query_text(std::string_view caption, std::string_view instruction) {
    return "Caption: " + std::string(caption) + "\nInstruction: " + std::string(instruction);
}

} // namespace

std::vector<ChatMessage> VerdictPrompt::messages() const {
    std::vector<ChatMessage> out;
    out.push_back({"system", system_preamble});
    for (const auto& ex : exemplars) {
        out.push_back({"user", query_text(ex.caption, ex.instruction)});
        out.push_back({"assistant", render_exemplar_reply(ex)});
    }
    out.push_back({"user", query_text(query_caption, query_instruction)});
    return out;
}

VerdictPrompt build_verdict_prompt(std::string_view caption, std::string_view instruction) {
    if (text::trim(caption).empty() || text::trim(instruction).empty()) {
        throw Error(ErrorCode::InvalidArgument, "verdict prompt needs a caption and an instruction");
    }
    VerdictPrompt p = prompt_template();
    p.query_caption = caption;
    p.query_instruction = instruction;
    return p;
}

std::string render_exemplar_reply(const VerdictExemplar& ex) { return ex.reasoning + "\n" + ex.verdict_json; }

std::string_view to_string(VerdictError e) {
    switch (e) {
    case VerdictError::NoJsonFound: return "NoJsonFound";
    case VerdictError::MissingVerdictField: return "MissingVerdictField";
    case VerdictError::InconsistentVerdict: return "InconsistentVerdict";
    }
    return "NoJsonFound";
}

Verdict parse_verdict(std::string_view llm_text) {
    auto straight = text::straighten_quotes(llm_text);
    auto found = text::last_json_object(straight);
    if (!found) throw VerdictParseError(VerdictError::NoJsonFound, "no JSON object in reply");

    const auto& obj = found->value;
    auto it = obj.find("verdict");
    if (it == obj.end()) throw VerdictParseError(VerdictError::MissingVerdictField, "reply JSON has no 'verdict'");

    bool possible = false;
    if (it->is_boolean()) {
        possible = it->get<bool>();
    } else if (it->is_string() && text::iequals(text::trim(it->get<std::string>()), "true")) {
        possible = true;
    } else if (it->is_string() && text::iequals(text::trim(it->get<std::string>()), "false")) {
        possible = false;
    } else {
        throw VerdictParseError(VerdictError::MissingVerdictField, "'verdict' is neither true nor false: " + it->dump());
    }

    Verdict v;
    v.possible = possible;
    v.reasoning = text::trim(std::string_view(straight).substr(0, found->begin));
    if (possible) {
        auto e = obj.find("entity");
        std::string entity = (e != obj.end() && e->is_string()) ? text::trim(e->get<std::string>()) : std::string{};
        if (entity.empty() || text::iequals(entity, "none")) {
            throw VerdictParseError(VerdictError::InconsistentVerdict, "verdict is true but no entity is named");
        }
        v.entity = entity;
    }
    return v;
}

EditKind classify_edit_kind(std::string_view instruction) {
    auto w = text::words(text::lower(text::trim(instruction)));
    if (w.empty()) return EditKind::Other;
    auto first = text::normalize(w[0]);
    static constexpr std::array single = {"remove", "delete", "erase"};
    for (auto verb : single) {
        if (first == verb) return EditKind::Remove;
    }
    if (first == "take" && w.size() > 1 && text::normalize(w[1]) == "away") return EditKind::Remove;
    return EditKind::Other;
}

Manifest run_verdict_stage(const Manifest& in, Gateway& gateway, const VerdictOptions& opts, StageReport* report) {
    require_stage(in, Stage::Raw, "verdict");
    Manifest out = in;
    parallel_for(out.records.size(), gateway.config().max_parallel, [&](std::size_t i) {
        auto& r = out.records[i];
        if (r.rejected()) return;
        r.edit_kind = classify_edit_kind(r.instruction);
        std::vector<ChatMessage> messages;
        try {
            messages = build_verdict_prompt(r.caption, r.instruction).messages();
        } catch (const Error& e) {
            reject(r, Stage::Verdicted, "unparseable", e.what());
            return;
        }

        std::optional<Verdict> verdict;
        std::string parse_failure;
        for (int attempt = 0; attempt < 2 && !verdict; ++attempt) {
            std::string reply;
            try {
                reply = gateway.chat(messages, opts.temperature, opts.max_tokens,
                                     attempt == 0 ? "" : "retry-" + std::to_string(attempt));
            } catch (const Error& e) {
                reject(r, Stage::Verdicted, "backend", e.what());
                return;
            }
            try {
                verdict = parse_verdict(reply);
            } catch (const VerdictParseError& e) {
                parse_failure = std::string(to_string(e.kind())) + ": " + e.what();
            }
        }
        if (!verdict) {
            reject(r, Stage::Verdicted, "unparseable", parse_failure);
            return;
        }
        r.verdict = *verdict;
        if (!verdict->possible) {
            reject(r, Stage::Verdicted, "infeasible", verdict->reasoning);
            return;
        }
        Manifest::advance(r, Stage::Verdicted);
    });
    if (report) *report = summarize(in, out, "verdict");
    return out;
}

} // namespace fe
