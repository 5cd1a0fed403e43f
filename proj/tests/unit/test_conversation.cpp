#include "doctest.h"

#include "synth.hpp"

#include "proxforge/conversation.hpp"
#include "proxforge/errors.hpp"
#include "proxforge/eval.hpp"
#include "proxforge/rng.hpp"

using namespace proxforge;

namespace {

SceneObject make_object(const std::string& id, const std::string& caption, int centi) {
    SceneObject obj;
    obj.object_id = id;
    obj.caption = caption;
    obj.bbox = BBox{0, 0, 10, 10};
    obj.cx = 5;
    obj.cy = 5;
    obj.depth_label = DepthLabel{centi};
    return obj;
}

const QuestionTemplate& pick(Stage stage, AnswerMode mode, CaptionKind kind) {
    const auto& set = TemplateSet::builtin();
    if (stage == Stage::Perception)
        return *set.perception(kind)[0];
    return *set.reasoning(kind, mode)[0];
}

} // namespace

TEST_CASE("compare_proximity fixtures and antisymmetry") {
    CHECK(compare_proximity(DepthLabel{4}, DepthLabel{45}) == ProximityRelation::FirstCloser);
    CHECK(compare_proximity(DepthLabel{4}, DepthLabel{1}) == ProximityRelation::SecondCloser);
    CHECK(compare_proximity(DepthLabel{37}, DepthLabel{37}) == ProximityRelation::EquallyClose);

    for (int a = 0; a <= 100; a += 7)
        for (int b = 0; b <= 100; b += 11) {
            const auto ab = compare_proximity(DepthLabel{a}, DepthLabel{b});
            const auto ba = compare_proximity(DepthLabel{b}, DepthLabel{a});
            if (ab == ProximityRelation::FirstCloser)
                CHECK(ba == ProximityRelation::SecondCloser);
            if (ab == ProximityRelation::EquallyClose)
                CHECK(ba == ProximityRelation::EquallyClose);
            CHECK(compare_proximity(DepthLabel{a}, DepthLabel{a}) ==
                  ProximityRelation::EquallyClose);
        }
}

TEST_CASE("perception answers are exactly the 2-dp string") {
    const auto& tpl = pick(Stage::Perception, AnswerMode::Direct, CaptionKind::ObjectType);
    for (int centi : {35, 0, 100}) {
        const auto conv =
            render_perception_qa(tpl, make_object("a", "rug", centi), "img.jpg", "c-1");
        CHECK(conv.turns[1].text == DepthLabel{centi}.str());
        CHECK(conv.turns[0].text.rfind("<image>\n", 0) == 0);
        CHECK(conv.turns[0].text.find("rug") != std::string::npos);
    }
}

TEST_CASE("reasoned answer states smaller < larger and concludes the closer caption") {
    const auto& tpl = pick(Stage::Reasoning, AnswerMode::Reasoned, CaptionKind::ObjectType);
    const auto conv = render_reasoning_qa(tpl, AnswerMode::Reasoned,
                                          make_object("a", "shelf", 4),
                                          make_object("b", "bicycle", 45), "img.jpg", "c-2");
    const std::string& answer = conv.turns[1].text;
    CHECK(answer ==
          "'shelf' corresponds to a relative depth value of 0.04, and 'bicycle' corresponds to a "
          "relative depth value of 0.45. Since 0.04 < 0.45, it can be inferred that the object: "
          "'shelf' is closer, the answer is: 'shelf'.");

    // operand order transposed: the inequality must still read smaller < larger
    const auto reversed = render_reasoning_qa(tpl, AnswerMode::Reasoned,
                                              make_object("a", "bicycle", 45),
                                              make_object("b", "shelf", 4), "img.jpg", "c-3");
    CHECK(reversed.turns[1].text.find("Since 0.04 < 0.45") != std::string::npos);
    CHECK(reversed.turns[1].text.ends_with("the answer is: 'shelf'."));
}

TEST_CASE("direct answers are the bare closer caption") {
    const auto& tpl = pick(Stage::Reasoning, AnswerMode::Direct, CaptionKind::ObjectType);
    const auto conv = render_reasoning_qa(tpl, AnswerMode::Direct,
                                          make_object("a", "curtains", 52),
                                          make_object("b", "chair", 12), "img.jpg", "c-4");
    CHECK(conv.turns[1].text == "chair");
    CHECK(std::get<ReasoningTruth>(conv.truth).relation == ProximityRelation::SecondCloser);
}

TEST_CASE("equal labels conclude equally close in both modes") {
    const auto& reasoned = pick(Stage::Reasoning, AnswerMode::Reasoned, CaptionKind::ObjectType);
    const auto conv = render_reasoning_qa(reasoned, AnswerMode::Reasoned,
                                          make_object("a", "mug", 37),
                                          make_object("b", "bowl", 37), "img.jpg", "c-5");
    CHECK(conv.turns[1].text.find("Since 0.37 = 0.37") != std::string::npos);
    CHECK(conv.turns[1].text.ends_with("the answer is: 'equally close'."));

    const auto& direct = pick(Stage::Reasoning, AnswerMode::Direct, CaptionKind::ObjectType);
    const auto conv2 = render_reasoning_qa(direct, AnswerMode::Direct, make_object("a", "mug", 37),
                                           make_object("b", "bowl", 37), "img.jpg", "c-6");
    CHECK(conv2.turns[1].text == "equally close");
}

TEST_CASE("identical normalized captions cannot form a pair") {
    const auto& tpl = pick(Stage::Reasoning, AnswerMode::Direct, CaptionKind::ObjectType);
    CHECK_THROWS_AS(render_reasoning_qa(tpl, AnswerMode::Direct, make_object("a", "a window", 10),
                                        make_object("b", "Window", 20), "img.jpg", "c-7"),
                    std::invalid_argument);
}

TEST_CASE("build_conversations: 3 distinct captions give 3 + 3") {
    SceneRecord rec;
    rec.image_id = "img";
    rec.image_path = "img.jpg";
    rec.width = rec.height = 10;
    rec.objects = {make_object("a", "red car", 10), make_object("b", "shelf", 20),
                   make_object("c", "rug", 30)};
    GenConfig config;
    config.max_pairs_per_image = 10;
    const auto result = build_conversations(rec, config, 7);
    std::size_t perception = 0, reasoning = 0;
    for (const auto& c : result.conversations)
        (c.stage == Stage::Perception ? perception : reasoning) += 1;
    CHECK(perception == 3);
    CHECK(reasoning == 3);
    CHECK(result.skips.empty());
}

TEST_CASE("build_conversations: identical captions produce no pair and one skip") {
    SceneRecord rec;
    rec.image_id = "img";
    rec.image_path = "img.jpg";
    rec.width = rec.height = 10;
    rec.objects = {make_object("a", "window", 10), make_object("b", "window", 20)};
    const auto result = build_conversations(rec, GenConfig{}, 7);
    std::size_t perception = 0, reasoning = 0;
    for (const auto& c : result.conversations)
        (c.stage == Stage::Perception ? perception : reasoning) += 1;
    CHECK(perception == 2);
    CHECK(reasoning == 0);
    REQUIRE(result.skips.size() == 1);
    CHECK(result.skips[0].reason == "skipped_pair_identical_caption");
}

TEST_CASE("build_conversations honors caps and never pairs identical captions") {
    const auto records = synth::scenes(20, 64, 48, 99);
    synth::GridDepthSource depth(99);
    GenConfig config;
    config.max_pairs_per_image = 4;
    config.perception_cap = 2;
    for (const auto& rec : records) {
        SceneRecord labeled = rec;
        const auto map = to_normalized_depth(*depth.load(rec));
        for (auto& obj : labeled.objects)
            obj.depth_label = sample_object_depth(map, obj.cx, obj.cy);
        const auto result = build_conversations(labeled, config, 5);
        std::size_t perception = 0, reasoning = 0;
        for (const auto& c : result.conversations) {
            if (c.stage == Stage::Perception) {
                ++perception;
                continue;
            }
            ++reasoning;
            const auto& t = std::get<ReasoningTruth>(c.truth);
            CHECK(t.object_1 != t.object_2);
            CHECK(normalize_phrase(t.caption_1) != normalize_phrase(t.caption_2));
        }
        CHECK(perception <= 2);
        CHECK(reasoning <= 4);
    }
}

TEST_CASE("build_conversations is deterministic and sensitive to the seed") {
    const auto records = synth::scenes(5, 32, 32, 1);
    synth::GridDepthSource depth(1);
    for (const auto& rec : records) {
        SceneRecord labeled = rec;
        const auto map = to_normalized_depth(*depth.load(rec));
        for (auto& obj : labeled.objects)
            obj.depth_label = sample_object_depth(map, obj.cx, obj.cy);

        const auto a = build_conversations(labeled, GenConfig{}, 7);
        const auto b = build_conversations(labeled, GenConfig{}, 7);
        REQUIRE(a.conversations.size() == b.conversations.size());
        for (std::size_t i = 0; i < a.conversations.size(); ++i)
            CHECK(conversation_to_json(a.conversations[i]) ==
                  conversation_to_json(b.conversations[i]));
    }
}

TEST_CASE("no labeled objects yields an empty result with a skip reason") {
    SceneRecord rec;
    rec.image_id = "empty";
    rec.objects = {};
    const auto result = build_conversations(rec, GenConfig{}, 7);
    CHECK(result.conversations.empty());
    REQUIRE(result.skips.size() == 1);
    CHECK(result.skips[0].reason == "no_labeled_objects");
}

TEST_CASE("conversation JSON roundtrip") {
    SceneRecord rec;
    rec.image_id = "img";
    rec.image_path = "img.jpg";
    rec.width = rec.height = 10;
    rec.objects = {make_object("a", "red car", 10), make_object("b", "shelf", 20),
                   make_object("c", "man riding a bicycle", 20)};
    GenConfig config;
    config.max_pairs_per_image = 10;
    const auto result = build_conversations(rec, config, 11);
    for (const auto& conv : result.conversations) {
        const std::string line = conversation_to_json(conv);
        const Conversation back = conversation_from_json(line);
        CHECK(conversation_to_json(back) == line);
        CHECK(back.stage == conv.stage);
        CHECK(back.turns[0].text == conv.turns[0].text);
    }
}

TEST_CASE("generated answers parse back to their own ground truth") {
    const auto records = synth::scenes(30, 48, 36, 3);
    synth::GridDepthSource depth(3);
    GenConfig config;
    config.max_pairs_per_image = 0; // keep every pair
    for (const auto& rec : records) {
        SceneRecord labeled = rec;
        const auto map = to_normalized_depth(*depth.load(rec));
        for (auto& obj : labeled.objects)
            obj.depth_label = sample_object_depth(map, obj.cx, obj.cy);
        for (const auto& conv : build_conversations(labeled, config, 13).conversations) {
            if (conv.stage == Stage::Perception) {
                const auto parsed = parse_perception_response(conv.turns[1].text);
                REQUIRE(parsed.valid());
                CHECK(DepthLabel::from_value(*parsed.value) ==
                      std::get<PerceptionTruth>(conv.truth).label);
            } else {
                const auto& t = std::get<ReasoningTruth>(conv.truth);
                const auto parsed =
                    parse_proximity_response(conv.turns[1].text, t.caption_1, t.caption_2);
                REQUIRE(parsed.valid());
                const auto expected = t.relation == ProximityRelation::FirstCloser
                                          ? ProximityAnswer::First
                                      : t.relation == ProximityRelation::SecondCloser
                                          ? ProximityAnswer::Second
                                          : ProximityAnswer::Equal;
                CHECK(*parsed.answer == expected);
            }
        }
    }
}

TEST_CASE("reasoned answers are arithmetically consistent with their labels") {
    const auto records = synth::scenes(15, 40, 30, 21);
    synth::GridDepthSource depth(21);
    GenConfig config;
    config.direct_ratio = 0.0; // all reasoned
    config.max_pairs_per_image = 0;
    for (const auto& rec : records) {
        SceneRecord labeled = rec;
        const auto map = to_normalized_depth(*depth.load(rec));
        for (auto& obj : labeled.objects)
            obj.depth_label = sample_object_depth(map, obj.cx, obj.cy);
        for (const auto& conv : build_conversations(labeled, config, 17).conversations) {
            if (conv.stage != Stage::Reasoning)
                continue;
            const auto& t = std::get<ReasoningTruth>(conv.truth);
            const std::string& answer = conv.turns[1].text;
            // both labels appear verbatim
            CHECK(answer.find(t.depth_1.str()) != std::string::npos);
            CHECK(answer.find(t.depth_2.str()) != std::string::npos);
            const std::size_t since = answer.find(". Since ");
            REQUIRE(since != std::string::npos);
            if (t.relation == ProximityRelation::EquallyClose) {
                CHECK(answer.find(" = ", since) != std::string::npos);
            } else {
                //  the stated inequality holds for the two embedded values
                const std::string lhs = answer.substr(since + 8, 4);
                const std::size_t lt = answer.find(" < ", since);
                REQUIRE(lt != std::string::npos);
                const std::string rhs = answer.substr(lt + 3, 4);
                CHECK(std::stod(lhs) < std::stod(rhs));
                const std::string winner =
                    t.relation == ProximityRelation::FirstCloser ? t.caption_1 : t.caption_2;
                CHECK(answer.ends_with("the answer is: '" + winner + "'."));
                const DepthLabel smaller = std::min(t.depth_1, t.depth_2);
                CHECK(lhs == smaller.str());
            }
        }
    }
}

TEST_CASE("malformed conversation lines raise ParseError") {
    const char* lines[] = {
        "not json",
        "{}",
        R"({"id":"x","image":"i","stage":"nope","conversations":[],"meta":{}})",
        R"({"id":"x","image":"i","stage":"perception","conversations":[{"from":"human","value":"q"}],"meta":{"template_id":"t","ground_truth":{"depth":"0.10"}}})",
        R"({"id":"x","image":"i","stage":"perception","conversations":[{"from":"human","value":"q"},{"from":"gpt","value":"a"}],"meta":{"template_id":"t","ground_truth":{"depth":"0.105"}}})",
        R"({"id":"x","image":"i","stage":"reasoning","conversations":[{"from":"human","value":"q"},{"from":"gpt","value":"a"}],"meta":{"template_id":"t","ground_truth":{"relation":"sideways"}}})",
    };
    for (const char* line : lines)
        CHECK_THROWS_AS(conversation_from_json(line), ParseError);
}

TEST_CASE("audit_scene flags center offsets and duplicate captions") {
    DepthMap map;
    map.width = 10;
    map.height = 10;
    map.normalized = true;
    map.values.assign(100, 0.10);
    // center pixel of the first bbox (5.5, 5.5) -> (6, 6) reads far from its
    // interior median
    map.values[6 * 10 + 6] = 0.40;

    SceneRecord rec;
    rec.image_id = "img";
    rec.width = rec.height = 10;
    SceneObject a = make_object("a", "car", 0);
    a.bbox = BBox{1, 1, 9, 9};
    a.cx = 5.5;
    a.cy = 5.5;
    SceneObject b = make_object("b", "car", 0);
    b.bbox = BBox{0, 0, 3, 3};
    b.cx = 1.5;
    b.cy = 1.5;
    rec.objects = {a, b};

    const auto flags = audit_scene(rec, map, 0.15);
    REQUIRE(flags.size() == 2);
    CHECK(flags[0].kind == AuditKind::CenterOffset);
    CHECK(flags[0].object_ids == std::vector<std::string>{"a"});
    CHECK(flags[0].center_depth == 0.40);
    CHECK(flags[0].bbox_median == 0.10);
    CHECK(flags[1].kind == AuditKind::DuplicateCaption);
    CHECK(flags[1].object_ids == std::vector<std::string>{"a", "b"});

    // clean scene: below-threshold offset and distinct captions
    rec.objects[0].caption = "truck";
    const auto clean = audit_scene(rec, map, 0.50);
    CHECK(clean.empty());
}
