#include "fe/rerank.hpp"

#include "fe/prompt_assets.hpp"
#include "fe/text.hpp"
#include "fe/verdict.hpp"

#include <algorithm>
#include <array>

namespace fe {

namespace {

struct QAExemplar {
    std::string caption;
    std::vector<std::string> entities;
    std::string instruction;
    std::string removed;
    std::vector<std::array<std::string, 3>> pairs;
};

struct QATemplate {
    std::string preamble;
    std::string removal_request;
    std::vector<QAExemplar> exemplars;
};

const QATemplate& qa_template() {
    static const QATemplate tmpl = [] {
        auto j = json::parse(assets::qa_prompt());
        QATemplate t;
        t.preamble = j.at("preamble").get<std::string>();
        t.removal_request = j.at("removal_request").get<std::string>();
        for (const auto& e : j.at("exemplars")) {
            QAExemplar ex;
            ex.caption = e.at("caption").get<std::string>();
            ex.entities = e.at("entities").get<std::vector<std::string>>();
            ex.instruction = e.value("instruction", "");
            ex.removed = e.value("removed", "");
            for (const auto& p : e.at("pairs")) {
                ex.pairs.push_back({p.at("entity").get<std::string>(), p.at("question").get<std::string>(),
                                    p.at("answer").get<std::string>()});
            }
            t.exemplars.push_back(std::move(ex));
        }
        return t;
    }();
    return tmpl;
}

std::string join(std::span<const std::string> items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::string qa_query(std::string_view caption, std::span<const std::string> entities, std::string_view instruction,
                     std::string_view removed, const std::string& removal_request) {
    std::string q = "Caption: " + std::string(caption) + "\nEntity: " + join(entities, ", ");
    if (!removed.empty()) {
        q += "\nInstruction: " + std::string(instruction) + "\n" + removal_request + "\nRemoved entity: " +
             std::string(removed);
    }
    return q;
}

std::optional<EntityType> parse_entity_type(std::string_view s) {
    auto n = text::normalize(s);
    n.erase(std::remove(n.begin(), n.end(), ' '), n.end());
    if (n == "object" || n.empty()) return EntityType::Object;
    if (n == "location" || n == "place") return EntityType::Location;
    if (n == "personname" || n == "person" || n == "name") return EntityType::PersonName;
    return std::nullopt;
}

} // namespace

std::string_view to_string(EntityType t) {
    switch (t) {
    case EntityType::Object: return "Object";
    case EntityType::Location: return "Location";
    case EntityType::PersonName: return "PersonName";
    }
    return "Object";
}

std::vector<ChatMessage> build_entity_prompt(std::string_view edited_caption) {
    static const json tmpl = json::parse(assets::entities_prompt());
    std::vector<ChatMessage> out;
    out.push_back({"system", tmpl.at("preamble").get<std::string>()});
    for (const auto& e : tmpl.at("exemplars")) {
        out.push_back({"user", "Caption: " + e.at("caption").get<std::string>()});
        out.push_back({"assistant", json{{"entities", e.at("entities")}}.dump()});
    }
    out.push_back({"user", "Caption: " + std::string(edited_caption)});
    return out;
}

EntityList parse_entity_reply(std::string_view llm_text) {
    auto found = text::last_json_object(text::straighten_quotes(llm_text));
    if (!found) throw Error(ErrorCode::Parse, "entity reply has no JSON object");
    auto it = found->value.find("entities");
    if (it == found->value.end() || !it->is_array()) throw Error(ErrorCode::Parse, "entity reply has no 'entities' array");

    EntityList list;
    std::vector<std::string> seen;
    for (const auto& item : *it) {
        std::string entity;
        EntityType type = EntityType::Object;
        if (item.is_string()) {
            entity = item.get<std::string>();
        } else if (item.is_object() && item.contains("text") && item["text"].is_string()) {
            entity = item["text"].get<std::string>();
            if (item.contains("type") && item["type"].is_string()) {
                auto t = parse_entity_type(item["type"].get<std::string>());
                if (!t) throw Error(ErrorCode::Parse, "unknown entity type " + item["type"].dump());
                type = *t;
            }
        } else {
            throw Error(ErrorCode::Parse, "malformed entity item " + item.dump());
        }
        entity = text::trim(entity);
        auto key = text::normalize(entity);
        if (key.empty() || std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        if (type == EntityType::Object) {
            list.entities.push_back(entity);
        } else {
            list.dropped.push_back({entity, type});
        }
    }
    return list;
}

EntityList extract_entities(std::string_view edited_caption, Gateway& gateway) {
    if (text::trim(edited_caption).empty()) throw Error(ErrorCode::InvalidArgument, "edited caption is empty");
    auto messages = build_entity_prompt(edited_caption);
    std::string failure;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto reply = gateway.chat(messages, 0.0, 512, attempt == 0 ? "" : "retry-" + std::to_string(attempt));
        try {
            auto list = parse_entity_reply(reply);
            if (list.entities.empty()) {
                throw RecordError("entity_extraction", "no object entities in '" + std::string(edited_caption) + "'");
            }
            return list;
        } catch (const RecordError&) {
            throw;
        } catch (const Error& e) {
            failure = e.what();
        }
    }
    throw RecordError("entity_extraction", failure);
}

VqaAnswer normalize_answer(std::string_view raw) {
    auto n = text::normalize(raw);
    static constexpr std::array yes = {"yes", "yeah", "yep", "true"};
    static constexpr std::array no = {"no", "nope", "false"};
    for (auto y : yes) {
        if (n == y) return VqaAnswer::Yes;
    }
    for (auto x : no) {
        if (n == x) return VqaAnswer::No;
    }
    return VqaAnswer::Unknown;
}

QAPrompt build_qa_prompt(std::string_view edited_caption, std::span<const std::string> entities,
                         std::string_view instruction, EditKind edit_kind, std::string_view remove_target) {
    if (entities.empty()) throw Error(ErrorCode::InvalidArgument, "QA prompt needs at least one entity");
    const auto& t = qa_template();
    QAPrompt p;
    p.messages.push_back({"system", t.preamble});
    for (const auto& ex : t.exemplars) {
        p.messages.push_back({"user", qa_query(ex.caption, ex.entities, ex.instruction, ex.removed, t.removal_request)});
        std::string reply;
        for (const auto& [entity, question, answer] : ex.pairs) {
            if (!reply.empty()) reply += "\n";
            reply += "Entity: " + entity + "\nQuestion: " + question + "\nAnswer: " + answer;
        }
        p.messages.push_back({"assistant", reply});
    }
    std::string_view removed = edit_kind == EditKind::Remove ? remove_target : std::string_view{};
    if (edit_kind == EditKind::Remove && removed.empty()) {
        throw Error(ErrorCode::InvalidArgument, "remove instruction without a remove target");
    }
    p.messages.push_back({"user", qa_query(edited_caption, entities, instruction, removed, t.removal_request)});
    return p;
}

std::vector<QAPair> parse_qa_pairs(std::string_view llm_text, std::span<const std::string> entities,
                                   EditKind edit_kind, std::string_view remove_target) {
    std::vector<std::string> known(entities.begin(), entities.end());
    const bool removing = edit_kind == EditKind::Remove && !remove_target.empty();
    if (removing) known.emplace_back(remove_target);

    struct Draft {
        std::string entity, question;
    };
    std::vector<Draft> drafts;
    std::optional<Draft> cur;
    bool in_question = false;
    auto flush = [&] {
        if (cur && !text::trim(cur->entity).empty() && !text::trim(cur->question).empty()) drafts.push_back(*cur);
        cur.reset();
        in_question = false;
    };
    for (const auto& raw : text::split_lines(llm_text)) {
        auto line = text::trim(raw);
        if (text::starts_with_ci(line, "Entity:")) {
            flush();
            cur = Draft{text::trim(std::string_view(line).substr(7)), {}};
        } else if (text::starts_with_ci(line, "Question:") && cur) {
            cur->question = text::trim(std::string_view(line).substr(9));
            in_question = true;
        } else if (text::starts_with_ci(line, "Answer:") && cur) {
            flush();
        } else if (in_question && !line.empty()) {
            cur->question += " " + line;
        }
    }
    flush();

    std::vector<QAPair> out;
    std::vector<std::string> used;
    for (const auto& d : drafts) {
        auto key = text::normalize(d.entity);
        auto match = std::find_if(known.begin(), known.end(),
                                  [&](const std::string& k) { return text::normalize(k) == key; });
        if (match == known.end()) continue;
        if (std::find(used.begin(), used.end(), key) != used.end()) continue;
        used.push_back(key);
        Answer expected = removing && key == text::normalize(remove_target) ? Answer::No : Answer::Yes;
        out.push_back(QAPair{*match, text::trim(d.question), expected});
    }
    if (out.empty()) throw Error(ErrorCode::Parse, "no usable Entity/Question/Answer triplets in reply");
    return out;
}

std::vector<ImageRef> generate_candidates(const EditSample& sample, const WireImage& image, const Mask& mask,
                                          Gateway& gateway, const CandidateOptions& opts,
                                          const std::filesystem::path& dir) {
    if (opts.k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    const auto inpaint_mask = make_inpaint_input(decode_png_rgb(image.png), mask, opts.dilation_radius).second;
    std::vector<ImageRef> out;
    for (int i = 0; i < opts.k; ++i) {
        auto seed = opts.base_seed + static_cast<std::uint64_t>(i);
        Raster candidate;
        try {
            candidate = gateway.inpaint(image, inpaint_mask, sample.edited_caption, seed, opts.guidance);
        } catch (const Error& e) {
            throw RecordError("inpaint", e.what());
        }
        auto path = dir / (sample.id + ".cand" + std::to_string(i) + ".png");
        auto digest = save_png(path, candidate);
        out.push_back(ImageRef{path, digest, candidate.width, candidate.height});
    }
    return out;
}

int score_candidate(const WireImage& image, std::span<const QAPair> qa_pairs, Gateway& gateway) {
    if (qa_pairs.empty()) throw Error(ErrorCode::InvalidArgument, "score_candidate needs at least one question");
    int score = 0;
    for (const auto& q : qa_pairs) {
        auto a = normalize_answer(gateway.vqa(image, q.question));
        if ((a == VqaAnswer::Yes && q.expected == Answer::Yes) || (a == VqaAnswer::No && q.expected == Answer::No)) {
            ++score;
        }
    }
    return score;
}

std::size_t select_best(std::span<const int> scores) {
    if (scores.empty()) throw Error(ErrorCode::InvalidArgument, "select_best needs at least one score");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

Manifest run_inpaint_stage(const Manifest& in, Gateway& gateway, const std::filesystem::path& candidate_dir,
                           const CandidateOptions& opts, StageReport* report) {
    require_stage(in, Stage::Grounded, "inpaint");
    if (opts.k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    Manifest out = in;
    parallel_for(out.records.size(), gateway.config().max_parallel, [&](std::size_t i) {
        auto& r = out.records[i];
        if (r.rejected()) return;
        try {
            auto image = load_input(r);
            if (!r.mask_path) throw RecordError("inpaint", "record has no mask");
            Mask mask;
            try {
                mask = load_mask(*r.mask_path);
            } catch (const Error& e) {
                throw RecordError("input", e.what());
            }
            r.candidates = generate_candidates(r, image, mask, gateway, opts, candidate_dir);
            Manifest::advance(r, Stage::Inpainted);
        } catch (const RecordError& e) {
            reject(r, Stage::Inpainted, e.reason(), e.what());
        } catch (const Error& e) {
            reject(r, Stage::Inpainted, "inpaint", e.what());
        }
    });
    if (report) *report = summarize(in, out, "inpaint");
    return out;
}

Manifest run_rerank_stage(const Manifest& in, Gateway& gateway, const RerankOptions& opts, StageReport* report) {
    require_stage(in, Stage::Inpainted, "rerank");
    Manifest out = in;
    parallel_for(out.records.size(), gateway.config().max_parallel, [&](std::size_t i) {
        auto& r = out.records[i];
        if (r.rejected()) return;
        try {
            const auto kind = r.edit_kind.value_or(classify_edit_kind(r.instruction));
            std::string remove_target;
            if (kind == EditKind::Remove && r.verdict && r.verdict->entity) remove_target = *r.verdict->entity;

            EntityList entities;
            try {
                entities = extract_entities(r.edited_caption, gateway);
            } catch (const RecordError&) {
                throw;
            } catch (const Error& e) {
                throw RecordError("backend", e.what());
            }

            const auto effective_kind = remove_target.empty() ? EditKind::Other : kind;
            auto prompt = build_qa_prompt(r.edited_caption, entities.entities, r.instruction, effective_kind,
                                          remove_target);
            std::vector<QAPair> pairs;
            std::string failure;
            for (int attempt = 0; attempt < 2 && pairs.empty(); ++attempt) {
                std::string reply;
                try {
                    reply = gateway.chat(prompt.messages, opts.temperature, opts.max_tokens,
                                         attempt == 0 ? "" : "retry-" + std::to_string(attempt));
                } catch (const Error& e) {
                    throw RecordError("backend", e.what());
                }
                try {
                    pairs = parse_qa_pairs(reply, entities.entities, effective_kind, remove_target);
                } catch (const Error& e) {
                    failure = e.what();
                }
            }
            if (pairs.empty()) throw RecordError("qa_generation", failure);

            std::vector<int> scores;
            for (const auto& c : r.candidates) {
                WireImage img;
                try {
                    img = WireImage::from_file(c.path);
                } catch (const Error& e) {
                    throw RecordError("input", e.what());
                }
                try {
                    scores.push_back(score_candidate(img, pairs, gateway));
                } catch (const Error& e) {
                    throw RecordError("vqa", e.what());
                }
            }
            if (scores.empty()) throw RecordError("vqa", "record has no candidates");
            r.qa_pairs = std::move(pairs);
            r.scores = std::move(scores);
            r.selected = select_best(r.scores);
            Manifest::advance(r, Stage::Selected);
        } catch (const RecordError& e) {
            reject(r, Stage::Selected, e.reason(), e.what());
        } catch (const Error& e) {
            reject(r, Stage::Selected, "backend", e.what());
        }
    });
    if (report) *report = summarize(in, out, "rerank");
    return out;
}

} // namespace fe
