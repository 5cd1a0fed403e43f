#include "doctest.h"

#include <cmath>

#include "synth.hpp"

#include "proxforge/eval.hpp"
#include "proxforge/rng.hpp"

using namespace proxforge;

TEST_CASE("perception response fixtures") {
    const auto ok = parse_perception_response("0.29");
    REQUIRE(ok.valid());
    CHECK(*ok.value == 0.29);

    const auto bbox = parse_perception_response("[0.68, 0.23, 0.99, 0.47]");
    CHECK_FALSE(bbox.valid());
    CHECK(*bbox.reason == InvalidReason::MultipleNumbers);

    const auto feet = parse_perception_response("10 feet");
    CHECK_FALSE(feet.valid());
    CHECK(*feet.reason == InvalidReason::OutOfRange);

    const auto coords = parse_perception_response("(671,108),(941,378)");
    CHECK_FALSE(coords.valid());
    CHECK(*coords.reason == InvalidReason::MultipleNumbers);

    const auto none = parse_perception_response("quite close to the viewer");
    CHECK_FALSE(none.valid());
    CHECK(*none.reason == InvalidReason::NoNumber);

    CHECK(*parse_perception_response("The depth is 0.5 roughly").value == 0.5);
    CHECK(*parse_perception_response("0").value == 0.0);
    CHECK(*parse_perception_response("1").value == 1.0);
    CHECK(*parse_perception_response("+0.75").value == 0.75);
    CHECK(*parse_perception_response("-0.5").reason == InvalidReason::OutOfRange);
    CHECK(*parse_perception_response("1.01").reason == InvalidReason::OutOfRange);
    CHECK(*parse_perception_response("").reason == InvalidReason::NoNumber);
}

TEST_CASE("proximity response fixtures") {
    const auto second = parse_proximity_response("chair", "curtains", "chair");
    REQUIRE(second.valid());
    CHECK(*second.answer == ProximityAnswer::Second);

    const auto first = parse_proximity_response(
        "'shelf' corresponds to a depth of 0.04, and 'bicycle' corresponds to a depth of 0.45. "
        "since 0.45 > 0.04, it can be inferred that the object: 'shelf' is closer, the answer "
        "is: 'shelf'.",
        "shelf", "bicycle");
    REQUIRE(first.valid());
    CHECK(*first.answer == ProximityAnswer::First);

    const auto wrong = parse_proximity_response("the door is closer to the cabinet", "door",
                                                "cabinet");
    CHECK_FALSE(wrong.valid());
    CHECK(*wrong.reason == InvalidReason::Ambiguous);

    const auto nomatch = parse_proximity_response("the sofa", "door", "cabinet");
    CHECK_FALSE(nomatch.valid());
    CHECK(*nomatch.reason == InvalidReason::NoMatch);

    const auto equal = parse_proximity_response("Equally close.", "door", "cabinet");
    REQUIRE(equal.valid());
    CHECK(*equal.answer == ProximityAnswer::Equal);

    // articles and case are normalized away
    CHECK(*parse_proximity_response("The Chair", "curtains", "chair").answer ==
          ProximityAnswer::Second);
    // marker with an unquoted phrase
    CHECK(*parse_proximity_response("thinking... the answer is: curtains", "curtains", "chair")
               .answer == ProximityAnswer::First);
}

TEST_CASE("parsers are total over arbitrary bytes") {
    SeededRng rng(47);
    for (int trial = 0; trial < 300; ++trial) {
        std::string junk;
        const std::size_t len = rng.below(200);
        for (std::size_t i = 0; i < len; ++i)
            junk.push_back(static_cast<char>(rng.below(256)));
        CHECK_NOTHROW(parse_perception_response(junk));
        CHECK_NOTHROW(parse_proximity_response(junk, "door", "cabinet"));
    }

    // a 1 MB response parses without incident
    std::string big(1 << 20, 'x');
    big += " 0.5 ";
    big += std::string(1 << 19, '7'); // one enormous numeric token
    const auto parsed = parse_perception_response(big);
    CHECK_FALSE(parsed.valid());
    CHECK(*parsed.reason == InvalidReason::MultipleNumbers);

    const std::string huge_number(1 << 20, '9');
    CHECK(*parse_perception_response(huge_number).reason == InvalidReason::OutOfRange);
}

TEST_CASE("perception metrics: identity and hand-computed fixture") {
    // exact predictions
    std::vector<std::pair<std::optional<double>, DepthLabel>> exact;
    for (int centi : {0, 35, 70, 100})
        exact.emplace_back(DepthLabel{centi}.value(), DepthLabel{centi});
    const auto m = compute_perception_metrics(exact);
    CHECK(*m.mse == 0.0);
    CHECK(*m.rmse == 0.0);
    CHECK(*m.delta1 == 1.0);
    CHECK(*m.delta2 == 1.0);
    CHECK(*m.delta3 == 1.0);
    CHECK(*m.valid_ratio == 1.0);

    // pairs [(0.5, 0.3), (0.2, 0.2)] -> MSE 0.02, RMSE sqrt(0.02)
    std::vector<std::pair<std::optional<double>, DepthLabel>> pairs{
        {0.5, DepthLabel{30}}, {0.2, DepthLabel{20}}};
    const auto fx = compute_perception_metrics(pairs);
    CHECK(std::abs(*fx.mse - 0.02) < 1e-12);
    CHECK(std::abs(*fx.rmse - 0.1414213562373095) < 1e-12);
}

TEST_CASE("rmse squared equals mse on random inputs") {
    SeededRng rng(53);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::pair<std::optional<double>, DepthLabel>> pairs;
        const std::size_t n = 1 + rng.below(400);
        for (std::size_t i = 0; i < n; ++i) {
            std::optional<double> pred;
            if (rng.below(10) != 0)
                pred = rng.unit();
            pairs.emplace_back(pred, DepthLabel{static_cast<int>(rng.below(101))});
        }
        const auto m = compute_perception_metrics(pairs);
        if (m.mse) {
            CHECK(std::abs(*m.rmse * *m.rmse - *m.mse) <= 1e-12);
            CHECK(*m.delta1 <= *m.delta2);
            CHECK(*m.delta2 <= *m.delta3);
            CHECK(*m.sq_rel >= 0.0);
        }
    }
}

TEST_CASE("perception scorer: sharded merge and permutation equal single pass exactly") {
    SeededRng rng(59);
    std::vector<std::pair<std::optional<double>, DepthLabel>> pairs;
    for (int i = 0; i < 999; ++i) {
        std::optional<double> pred;
        if (rng.below(5) != 0)
            pred = rng.unit();
        pairs.emplace_back(pred, DepthLabel{static_cast<int>(rng.below(101))});
    }

    PerceptionScorer single;
    for (const auto& [pred, gt] : pairs)
        single.add(pred, gt);

    PerceptionScorer shards[4];
    for (std::size_t i = 0; i < pairs.size(); ++i)
        shards[i % 4].add(pairs[i].first, pairs[i].second);
    PerceptionScorer merged;
    for (const auto& s : shards)
        merged.merge(s);

    std::vector<std::pair<std::optional<double>, DepthLabel>> reversed(pairs.rbegin(),
                                                                       pairs.rend());
    PerceptionScorer permuted;
    for (const auto& [pred, gt] : reversed)
        permuted.add(pred, gt);

    const auto a = single.finalize();
    const auto b = merged.finalize();
    const auto c = permuted.finalize();
    CHECK(*a.mse == *b.mse);
    CHECK(*a.mse == *c.mse);
    CHECK(*a.sq_rel == *b.sq_rel);
    CHECK(*a.sq_rel == *c.sq_rel);
    CHECK(*a.rmse == *b.rmse);
    CHECK(*a.delta1 == *b.delta1);
    CHECK(*a.delta2 == *c.delta2);
}

TEST_CASE("sq_rel denominator policy") {
    std::vector<std::pair<std::optional<double>, DepthLabel>> pairs{{0.5, DepthLabel{25}}};
    const auto pred_den = compute_perception_metrics(pairs, SqRelDenominator::Pred);
    const auto gt_den = compute_perception_metrics(pairs, SqRelDenominator::Gt);
    CHECK(*pred_den.sq_rel == doctest::Approx(0.0625 / 0.5));
    CHECK(*gt_den.sq_rel == doctest::Approx(0.0625 / 0.25));

    // a valid prediction of exactly 0 keeps the denominator floored and finite
    std::vector<std::pair<std::optional<double>, DepthLabel>> zero{{0.0, DepthLabel{10}}};
    const auto m = compute_perception_metrics(zero, SqRelDenominator::Pred);
    CHECK(std::isfinite(*m.sq_rel));
    CHECK(*m.sq_rel == doctest::Approx(0.01 / 1e-6));
}

TEST_CASE("zero valid pairs: ratio still reported, error metrics null") {
    std::vector<std::pair<std::optional<double>, DepthLabel>> pairs{
        {std::nullopt, DepthLabel{10}}, {std::nullopt, DepthLabel{20}}};
    const auto m = compute_perception_metrics(pairs);
    CHECK(m.n_total == 2);
    CHECK(m.n_valid == 0);
    CHECK(*m.valid_ratio == 0.0);
    CHECK_FALSE(m.mse.has_value());
    CHECK_FALSE(m.rmse.has_value());
    CHECK_FALSE(m.delta1.has_value());
}

TEST_CASE("proximity metrics fixture: 2 correct, 1 wrong valid, 1 invalid") {
    std::vector<std::pair<std::optional<ProximityAnswer>, ProximityRelation>> pairs{
        {ProximityAnswer::First, ProximityRelation::FirstCloser},
        {ProximityAnswer::Second, ProximityRelation::SecondCloser},
        {ProximityAnswer::First, ProximityRelation::SecondCloser},
        {std::nullopt, ProximityRelation::EquallyClose},
    };
    const auto m = compute_proximity_metrics(pairs);
    CHECK(m.n_total == 4);
    CHECK(m.n_valid == 3);
    CHECK(m.n_correct == 2);
    CHECK(*m.valid_ratio == 0.75);
    CHECK(*m.accuracy == 0.50);
}

TEST_CASE("score_responses joins by id; missing and duplicates handled") {
    std::vector<EvalItem> items{
        {"p1", "img", EvalStage::Perception, "q1"},
        {"x1", "img", EvalStage::Proximity, "q2"},
        {"x2", "img", EvalStage::Proximity, "q3"},
    };
    std::vector<KeyEntry> keys{
        {"p1", DepthLabel{40}},
        {"x1", ProximityKey{ProximityRelation::FirstCloser, "door", "cabinet"}},
        {"x2", ProximityKey{ProximityRelation::EquallyClose, "mug", "bowl"}},
    };
    std::vector<ModelResponse> responses{
        {"p1", "0.7"},
        {"p1", "0.4"}, // duplicate: last wins
        {"x1", "door"},
        // x2 missing
    };
    // key order is independent of item order
    std::swap(keys[0], keys[2]);
    const auto report = score_responses(items, keys, responses);
    CHECK(report.duplicate_responses == 1);
    CHECK(report.missing_responses == 1);
    REQUIRE(report.perception.has_value());
    CHECK(*report.perception->mse == 0.0);
    REQUIRE(report.proximity.has_value());
    CHECK(report.proximity->n_total == 2);
    CHECK(report.proximity->n_valid == 1);
    CHECK(report.proximity->n_correct == 1);
    CHECK(*report.proximity->accuracy == 0.5); // the missing response scores as incorrect
    CHECK(report.invalid_reasons_proximity.at("missing") == 1);

    CHECK_THROWS_AS(score_responses({}, {}, {}), InvalidEvalSetError);
}

TEST_CASE("oracle closure on converted eval sets across seeds") {
    for (const std::uint64_t seed : {9ull, 77ull, 123456789ull}) {
        const auto records = synth::scenes(12, 64, 48, seed);
        synth::GridDepthSource depth(seed);
        GenConfig config;
        config.seed = seed;
        const EvalSet set = convert_scenes_to_eval(records, depth, config, true, true);
        REQUIRE(!set.items.empty());

        const auto responses = oracle_responder(set.items, set.keys);
        const auto report = score_responses(set.items, set.keys, responses);
        REQUIRE(report.perception.has_value());
        REQUIRE(report.proximity.has_value());
        CHECK(*report.perception->valid_ratio == 1.0);
        CHECK(*report.perception->mse == 0.0);
        CHECK(*report.perception->delta1 == 1.0);
        CHECK(*report.proximity->valid_ratio == 1.0);
        CHECK(*report.proximity->accuracy == 1.0);
    }
}

TEST_CASE("oracle rejects mismatched ids") {
    std::vector<EvalItem> items{{"a", "", EvalStage::Perception, "q"}};
    std::vector<KeyEntry> keys{{"b", DepthLabel{10}}};
    CHECK_THROWS_AS(oracle_responder(items, keys), InvalidEvalSetError);
    CHECK_THROWS_AS(oracle_responder(items, {}), InvalidEvalSetError);
}

TEST_CASE("conversion counts: 2 labeled objects -> 2 perception + 1 proximity") {
    SceneRecord rec;
    rec.image_id = "img";
    rec.image_path = "img.jpg";
    rec.width = 4;
    rec.height = 4;
    for (int i = 0; i < 2; ++i) {
        SceneObject obj;
        obj.object_id = "o" + std::to_string(i);
        obj.caption = i == 0 ? "mug" : "bowl";
        obj.bbox = BBox{static_cast<double>(i * 2), 0, 2, 2};
        std::tie(obj.cx, obj.cy) = bbox_center(obj.bbox);
        rec.objects.push_back(obj);
    }
    synth::GridDepthSource depth(5);
    const EvalSet set = convert_scenes_to_eval({rec}, depth, GenConfig{}, true, true);
    std::size_t perception = 0, proximity = 0;
    for (const auto& item : set.items)
        (item.stage == EvalStage::Perception ? perception : proximity) += 1;
    CHECK(perception == 2);
    CHECK(proximity == 1);

    // duplicate captions are excluded from pairing here too
    rec.objects[1].caption = "The Mug";
    const EvalSet dup = convert_scenes_to_eval({rec}, depth, GenConfig{}, true, true);
    std::size_t dup_proximity = 0;
    for (const auto& item : dup.items)
        dup_proximity += item.stage == EvalStage::Proximity;
    CHECK(dup_proximity == 0);
    REQUIRE(!dup.skips.empty());
}

TEST_CASE("conversion ground truth agrees with direct recomputation") {
    const auto records = synth::scenes(8, 48, 36, 101);
    synth::GridDepthSource depth(101);
    GenConfig config;
    const EvalSet set = convert_scenes_to_eval(records, depth, config, false, true);
    REQUIRE(!set.items.empty());
    for (std::size_t i = 0; i < set.items.size(); ++i) {
        const auto& k = std::get<ProximityKey>(set.keys[i].gt);
        const std::string image_id = set.items[i].item_id.substr(0, set.items[i].item_id.find("-r"));
        const SceneRecord* rec = nullptr;
        for (const auto& r : records)
            if (r.image_id == image_id)
                rec = &r;
        REQUIRE(rec != nullptr);
        const DepthMap map = to_normalized_depth(*depth.load(*rec), config.epsilon);
        const auto find_obj = [&](const std::string& id) -> const SceneObject& {
            for (const auto& o : rec->objects)
                if (o.object_id == id)
                    return o;
            REQUIRE(false);
            return rec->objects[0];
        };
        const SceneObject& o1 = find_obj(k.object_1);
        const SceneObject& o2 = find_obj(k.object_2);
        const DepthLabel d1 = sample_object_depth(map, o1.cx, o1.cy);
        const DepthLabel d2 = sample_object_depth(map, o2.cx, o2.cy);
        CHECK(d1 == k.depth_1);
        CHECK(d2 == k.depth_2);
        CHECK(compare_proximity(d1, d2) == k.relation);
    }
}

TEST_CASE("missing depth maps skip the image with a reason") {
    proxforge::CallbackDepthSource none([](const SceneRecord&) { return std::nullopt; });
    const auto records = synth::scenes(3, 16, 16, 1);
    const EvalSet set = convert_scenes_to_eval(records, none, GenConfig{}, true, true);
    CHECK(set.items.empty());
    CHECK(set.skips.size() == 3);
    CHECK(set.skips[0].reason == "missing_depth_map");
}

TEST_CASE("degenerate maps skip the image with a reason") {
    proxforge::CallbackDepthSource flat([](const SceneRecord& rec) -> std::optional<LoadedMap> {
        LoadedMap map;
        map.kind = MapKind::Disparity;
        map.width = rec.width;
        map.height = rec.height;
        map.values.assign(static_cast<std::size_t>(rec.width) * rec.height, 2.0f);
        return map;
    });
    const auto records = synth::scenes(2, 8, 8, 2);
    const EvalSet set = convert_scenes_to_eval(records, flat, GenConfig{}, true, true);
    CHECK(set.items.empty());
    REQUIRE(set.skips.size() == 2);
    CHECK(set.skips[0].reason == "degenerate_map");
}
