#pragma once

#include "fe/gateway.hpp"
#include "fe/grounding.hpp"
#include "fe/model.hpp"
#include "fe/stage.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fe {

enum class EntityType { Object, Location, PersonName };
std::string_view to_string(EntityType t);

struct DroppedEntity {
    std::string entity;
    EntityType reason = EntityType::Location;
    bool operator==(const DroppedEntity&) const = default;
};

struct EntityList {
    std::vector<std::string> entities;
    std::vector<DroppedEntity> dropped;
};

// Parses {"entities": [{"text": ..., "type": ...}]} from an LLM reply.
// Duplicates (case-insensitive) keep their first occurrence.
EntityList parse_entity_reply(std::string_view llm_text);
std::vector<ChatMessage> build_entity_prompt(std::string_view edited_caption);

// One retry on an unparseable reply; RecordError("entity_extraction") when
// nothing survives or the reply never parses.
EntityList extract_entities(std::string_view edited_caption, Gateway& gateway);

enum class VqaAnswer { Yes, No, Unknown };

// Lowercase, strip punctuation and whitespace, then map yes/no synonyms.
VqaAnswer normalize_answer(std::string_view raw);

struct QAPrompt {
    std::vector<ChatMessage> messages;
};

QAPrompt build_qa_prompt(std::string_view edited_caption, std::span<const std::string> entities,
                         std::string_view instruction, EditKind edit_kind, std::string_view remove_target = {});

// Entity:/Question:/Answer: triplets. Expected answers come from edit_kind,
// not from the reply: No for the remove target, Yes otherwise.
std::vector<QAPair> parse_qa_pairs(std::string_view llm_text, std::span<const std::string> entities,
                                   EditKind edit_kind, std::string_view remove_target = {});

struct CandidateOptions {
    int k = 3;
    std::uint64_t base_seed = 0;
    Guidance guidance;
    int dilation_radius = 0;
};

// Candidate i uses seed base_seed + i and is written to {dir}/{id}.cand{i}.png.
std::vector<ImageRef> generate_candidates(const EditSample& sample, const WireImage& image, const Mask& mask,
                                          Gateway& gateway, const CandidateOptions& opts,
                                          const std::filesystem::path& dir);

int score_candidate(const WireImage& image, std::span<const QAPair> qa_pairs, Gateway& gateway);

// Argmax, lowest index on ties.
std::size_t select_best(std::span<const int> scores);

struct RerankOptions {
    double temperature = 0.0;
    int max_tokens = 512;
};

// Grounded -> Inpainted.
Manifest run_inpaint_stage(const Manifest& in, Gateway& gateway, const std::filesystem::path& candidate_dir,
                           const CandidateOptions& opts = {}, StageReport* report = nullptr);

// Inpainted -> Selected.
Manifest run_rerank_stage(const Manifest& in, Gateway& gateway, const RerankOptions& opts = {},
                          StageReport* report = nullptr);

} // namespace fe
