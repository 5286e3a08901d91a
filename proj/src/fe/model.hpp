#pragma once

#include "fe/error.hpp"

#include "json.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fe {

using json = nlohmann::json;

enum class Stage { Raw, Verdicted, Grounded, Inpainted, Selected, Exported };
enum class EditKind { Remove, Other };
enum class Answer { Yes, No };
enum class Split { Train, Val, Test };
enum class SupervisionMode { None, BBox, Mask };

std::string_view to_string(Stage s);
std::string_view to_string(EditKind k);
std::string_view to_string(Answer a);
std::string_view to_string(Split s);
std::string_view to_string(SupervisionMode m);

Stage parse_stage(std::string_view s);
EditKind parse_edit_kind(std::string_view s);
Answer parse_answer(std::string_view s);
Split parse_split(std::string_view s);
SupervisionMode parse_supervision_mode(std::string_view s);

struct ImageRef {
    std::filesystem::path path;
    std::string digest;
    // Filled when the raster has been decoded; not persisted.
    int width = 0;
    int height = 0;

    bool operator==(const ImageRef& o) const { return path == o.path && digest == o.digest; }
};

struct Verdict {
    bool possible = false;
    std::optional<std::string> entity;
    std::string reasoning;

    bool operator==(const Verdict&) const = default;
};

// Half-open pixel box [x0, x1) x [y0, y1).
struct BBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double confidence = 0.0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    bool valid_for(int image_width, int image_height) const {
        return 0 <= x0 && x0 < x1 && x1 <= image_width && 0 <= y0 && y0 < y1 && y1 <= image_height;
    }

    bool operator==(const BBox&) const = default;
};

struct QAPair {
    std::string entity;
    std::string question;
    Answer expected = Answer::Yes;

    bool operator==(const QAPair&) const = default;
};

struct Rejection {
    Stage stage = Stage::Raw;
    std::string reason;
    std::string detail;

    bool operator==(const Rejection&) const = default;
};

struct EditSample {
    std::string id;
    ImageRef input;
    std::string caption;
    std::string instruction;
    std::string edited_caption;
    std::optional<EditKind> edit_kind;
    Stage stage = Stage::Raw;
    std::optional<Rejection> rejection;

    std::optional<Verdict> verdict;
    std::optional<BBox> bbox;
    std::optional<std::filesystem::path> mask_path;
    std::optional<double> mask_area_fraction;
    std::vector<ImageRef> candidates;
    std::vector<QAPair> qa_pairs;
    std::vector<int> scores;
    std::optional<std::size_t> selected;
    std::optional<Split> split;

    // Fields this version does not know about, kept verbatim.
    json extra = json::object();

    bool rejected() const { return rejection.has_value(); }
    bool operator==(const EditSample&) const = default;
};

struct CandidateSet {
    std::vector<ImageRef> candidates;
    std::vector<int> scores;
    std::size_t selected = 0;
};

struct TrainingRecord {
    ImageRef conditioning_image;
    std::string instruction;
    ImageRef target_image;
    SupervisionMode supervision_mode = SupervisionMode::None;
    Split split = Split::Train;
};

struct Manifest {
    std::vector<EditSample> records;

    // Stage change that refuses to go backwards.
    static void advance(EditSample& sample, Stage to);
};

// Marks the record rejected at `stage`; later-stage fields are cleared.
void reject(EditSample& sample, Stage stage, std::string reason, std::string detail);

} // namespace fe
