#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "proxforge/depth.hpp"
#include "proxforge/scene.hpp"
#include "proxforge/templates.hpp"

namespace proxforge {

enum class ProximityRelation { FirstCloser, SecondCloser, EquallyClose };

std::string_view relation_name(ProximityRelation rel); // "first_closer" ...
ProximityRelation relation_from_name(std::string_view name);

/// Ties are decided on the 2-dp labels: equal labels mean equally close.
/// Smaller label = closer (0 is the closest point in the image).
ProximityRelation compare_proximity(DepthLabel d_s, DepthLabel d_t);

struct PerceptionTruth {
    DepthLabel label;
};

struct ReasoningTruth {
    ProximityRelation relation = ProximityRelation::EquallyClose;
    std::string caption_1; // as mentioned first in the question
    std::string caption_2;
    DepthLabel depth_1;
    DepthLabel depth_2;
    std::string object_1; // source object ids, for independent re-checks
    std::string object_2;
};

struct Turn {
    std::string role; // "human" | "gpt"
    std::string text;
};

struct Conversation {
    std::string id;
    std::string image;
    Stage stage = Stage::Perception;
    std::array<Turn, 2> turns; // question, answer
    std::string template_id;
    std::variant<PerceptionTruth, ReasoningTruth> truth;
    std::uint64_t seed_trace = 0;
};

struct GenConfig {
    std::uint64_t seed = 0;
    std::size_t max_pairs_per_image = 8; // M
    std::size_t perception_cap = 0;      // P, 0 = all objects
    double direct_ratio = 0.5;           // share of reasoning pairs answered directly
    double epsilon = 1e-6;               // disparity inversion guard
    int median_window = 1;               // odd, 1 = the single-pixel rule
    std::string sqrel_denominator = "pred"; // or "gt"
    double audit_threshold = 0.15;
    std::string system_message =
        "You are an assistant that perceives the relative depth of objects in an "
        "image and reasons about which objects are closer to the viewer.";

    void validate() const; // throws std::invalid_argument on out-of-range fields
};

/// Perception question + bare 2-dp answer for one labeled object.
Conversation render_perception_qa(const QuestionTemplate& tpl, const SceneObject& object,
                                  const std::string& image, const std::string& id);

/// Reasoning question over two labeled objects. Direct mode answers with the
/// closer caption (or "equally close"); Reasoned mode emits the fixed
/// chain-of-thought whose inequality always reads smaller < larger.
Conversation render_reasoning_qa(const QuestionTemplate& tpl, AnswerMode mode,
                                 const SceneObject& o1, const SceneObject& o2,
                                 const std::string& image, const std::string& id);

struct SkipEntry {
    std::string image_id;
    std::string reason; // "no_labeled_objects", "skipped_pair_identical_caption", ...
    std::string detail;
};

struct BuildResult {
    std::vector<Conversation> conversations;
    std::vector<SkipEntry> skips;
};

/// Deterministic generation for one record: perception conversations for up
/// to P labeled objects, then reasoning conversations over seeded-shuffled
/// unordered pairs with distinct normalized captions, truncated at M.
/// Identical (record, config, seed) give identical output.
BuildResult build_conversations(const SceneRecord& record, const GenConfig& config,
                                std::uint64_t seed,
                                const TemplateSet& templates = TemplateSet::builtin(),
                                const Lexicon& lexicon = Lexicon::builtin());

enum class AuditKind { CenterOffset, DuplicateCaption };

struct AuditFlag {
    AuditKind kind = AuditKind::CenterOffset;
    std::string image_id;
    std::vector<std::string> object_ids;
    std::string caption;      // DuplicateCaption: the shared normalized caption
    double center_depth = 0;  // CenterOffset details
    double bbox_median = 0;
};

/// Flags centers that disagree with the bbox interior median by more than
/// `threshold`, and captions shared by two or more objects.
std::vector<AuditFlag> audit_scene(const SceneRecord& record, const DepthMap& map,
                                   double threshold = 0.15);

// Conversation JSONL (instruction-tuning style), one object per line:
// {"id","image","stage","conversations":[{"from","value"}x2],
//  "meta":{"template_id","ground_truth","seed_trace"}}
std::string conversation_to_json(const Conversation& conv);
Conversation conversation_from_json(const std::string& line);

} // namespace proxforge
