#include "fe/model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

namespace fe {

namespace {

constexpr std::array<std::string_view, 6> stage_names = {"raw",      "verdicted", "grounded",
                                                         "inpainted", "selected", "exported"};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

} // namespace

const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Io: return "io";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::DuplicateId: return "duplicate_id";
    case ErrorCode::StageMismatch: return "stage_mismatch";
    case ErrorCode::Backend: return "backend";
    case ErrorCode::Protocol: return "protocol";
    case ErrorCode::NoEligibleRecords: return "no_eligible_records";
    case ErrorCode::Internal: return "internal";
    }
    return "unknown";
}

std::string_view to_string(Stage s) { return stage_names[static_cast<std::size_t>(s)]; }

std::string_view to_string(EditKind k) { return k == EditKind::Remove ? "remove" : "other"; }

std::string_view to_string(Answer a) { return a == Answer::Yes ? "yes" : "no"; }

std::string_view to_string(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "train";
}

std::string_view to_string(SupervisionMode m) {
    switch (m) {
    case SupervisionMode::None: return "none";
    case SupervisionMode::BBox: return "bbox";
    case SupervisionMode::Mask: return "mask";
    }
    return "none";
}

Stage parse_stage(std::string_view s) {
    auto l = lower(s);
    for (std::size_t i = 0; i < stage_names.size(); ++i) {
        if (stage_names[i] == l) return static_cast<Stage>(i);
    }
    throw Error(ErrorCode::Parse, "unknown stage '" + std::string(s) + "'");
}

EditKind parse_edit_kind(std::string_view s) {
    auto l = lower(s);
    if (l == "remove") return EditKind::Remove;
    if (l == "other") return EditKind::Other;
    throw Error(ErrorCode::Parse, "unknown edit_kind '" + std::string(s) + "'");
}

Answer parse_answer(std::string_view s) {
    auto l = lower(s);
    if (l == "yes") return Answer::Yes;
    if (l == "no") return Answer::No;
    throw Error(ErrorCode::Parse, "unknown answer '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
    auto l = lower(s);
    if (l == "train") return Split::Train;
    if (l == "val") return Split::Val;
    if (l == "test") return Split::Test;
    throw Error(ErrorCode::Parse, "unknown split '" + std::string(s) + "'");
}

SupervisionMode parse_supervision_mode(std::string_view s) {
    auto l = lower(s);
    if (l == "none") return SupervisionMode::None;
    if (l == "bbox") return SupervisionMode::BBox;
    if (l == "mask") return SupervisionMode::Mask;
    throw Error(ErrorCode::Parse, "unknown supervision mode '" + std::string(s) + "'");
}

void Manifest::advance(EditSample& sample, Stage to) {
    if (to < sample.stage) {
        throw Error(ErrorCode::Internal, "record " + sample.id + " cannot move from " +
                                             std::string(to_string(sample.stage)) + " back to " +
                                             std::string(to_string(to)));
    }
    sample.stage = to;
}

void reject(EditSample& sample, Stage stage, std::string reason, std::string detail) {
    if (stage < Stage::Grounded) {
        sample.bbox.reset();
        sample.mask_path.reset();
        sample.mask_area_fraction.reset();
    }
    if (stage < Stage::Inpainted) sample.candidates.clear();
    if (stage < Stage::Selected) {
        sample.qa_pairs.clear();
        sample.scores.clear();
        sample.selected.reset();
    }
    if (stage < Stage::Exported) sample.split.reset();
    sample.rejection = Rejection{stage, std::move(reason), std::move(detail)};
}

} // namespace fe
