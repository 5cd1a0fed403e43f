#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"

#include "proxforge/pipeline.hpp"

namespace py = pybind11;
using namespace proxforge;
using nlohmann::json;

namespace {

py::object json_to_py(const json& j) {
    switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<long long>());
    case json::value_t::number_unsigned: return py::int_(j.get<unsigned long long>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
        py::list out;
        for (const auto& v : j)
            out.append(json_to_py(v));
        return out;
    }
    case json::value_t::object: {
        py::dict out;
        for (const auto& [k, v] : j.items())
            out[py::str(k)] = json_to_py(v);
        return out;
    }
    default: return py::none();
    }
}

py::object report_to_py(const std::string& report_json) { return json_to_py(json::parse(report_json)); }

GenConfig make_config(std::uint64_t seed, std::size_t max_pairs, std::size_t perception_cap,
                      double direct_ratio, double epsilon, int median_window) {
    GenConfig config;
    config.seed = seed;
    config.max_pairs_per_image = max_pairs;
    config.perception_cap = perception_cap;
    config.direct_ratio = direct_ratio;
    config.epsilon = epsilon;
    config.median_window = median_window;
    config.validate();
    return config;
}

DepthMap depth_map_from(const std::vector<double>& values, int width, int height, bool normalized) {
    if (values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw std::invalid_argument("values length must equal width*height");
    DepthMap map;
    map.width = width;
    map.height = height;
    map.values = values;
    map.normalized = normalized;
    return map;
}

std::string relation_str(ProximityRelation rel) { return std::string(relation_name(rel)); }

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "proxforge core: proximity VQA dataset generation and scoring";

    m.def("bbox_center", [](double x, double y, double w, double h) {
        return bbox_center(BBox{x, y, w, h});
    }, py::arg("x"), py::arg("y"), py::arg("w"), py::arg("h"));

    m.def("classify_caption", [](const std::string& caption) {
        const CaptionClass cls = classify_caption(caption);
        py::dict out;
        out["kind"] = cls.kind == CaptionKind::ObjectType ? "object" : "region";
        out["token_count"] = cls.token_count;
        out["trigger"] = cls.trigger;
        return out;
    }, py::arg("caption"));

    m.def("normalize_phrase", [](const std::string& text) { return normalize_phrase(text); },
          py::arg("text"));

    m.def("compare_proximity", [](double d1, double d2) {
        return relation_str(compare_proximity(DepthLabel::from_value(d1), DepthLabel::from_value(d2)));
    }, py::arg("d1"), py::arg("d2"));

    m.def("read_depth_file", [](const std::string& path) {
        const LoadedMap map = read_depth_file_path(path);
        py::dict out;
        out["kind"] = map.kind == MapKind::Disparity ? "disparity" : "depth";
        out["width"] = map.width;
        out["height"] = map.height;
        out["values"] = map.values;
        return out;
    }, py::arg("path"));

    m.def("write_rawf32", [](const std::string& path, int width, int height,
                             const std::vector<float>& values, bool is_depth) {
        write_file(path, write_rawf32(width, height, values, is_depth));
    }, py::arg("path"), py::arg("width"), py::arg("height"), py::arg("values"),
       py::arg("is_depth") = false);

    m.def("disparity_to_depth", [](const std::vector<float>& values, int width, int height,
                                   double epsilon) {
        DisparityMap map{width, height, values};
        return disparity_to_depth(map, epsilon).values;
    }, py::arg("values"), py::arg("width"), py::arg("height"), py::arg("epsilon") = 1e-6);

    m.def("normalize_depth", [](const std::vector<double>& values, int width, int height) {
        return normalize_depth(depth_map_from(values, width, height, false)).values;
    }, py::arg("values"), py::arg("width"), py::arg("height"));

    m.def("sample_object_depth", [](const std::vector<double>& values, int width, int height,
                                    double cx, double cy, int window) {
        const DepthMap map = depth_map_from(values, width, height, true);
        return sample_object_depth(map, cx, cy, window).value();
    }, py::arg("values"), py::arg("width"), py::arg("height"), py::arg("cx"), py::arg("cy"),
       py::arg("window") = 1);

    m.def("parse_perception_response", [](const std::string& text) {
        const PerceptionParse p = parse_perception_response(text);
        py::dict out;
        out["valid"] = p.valid();
        out["value"] = p.value ? py::object(py::float_(*p.value)) : py::object(py::none());
        out["reason"] = p.reason ? py::object(py::str(std::string(invalid_reason_name(*p.reason))))
                                 : py::object(py::none());
        return out;
    }, py::arg("text"));

    m.def("parse_proximity_response", [](const std::string& text, const std::string& c1,
                                         const std::string& c2) {
        const ProximityParse p = parse_proximity_response(text, c1, c2);
        py::dict out;
        out["valid"] = p.valid();
        if (p.answer) {
            out["answer"] = *p.answer == ProximityAnswer::First    ? "first"
                            : *p.answer == ProximityAnswer::Second ? "second"
                                                                   : "equal";
        } else {
            out["answer"] = py::none();
        }
        out["reason"] = p.reason ? py::object(py::str(std::string(invalid_reason_name(*p.reason))))
                                 : py::object(py::none());
        return out;
    }, py::arg("text"), py::arg("caption_1"), py::arg("caption_2"));

    m.def("compute_perception_metrics", [](const std::vector<std::pair<std::optional<double>, double>>& pairs,
                                           const std::string& sqrel_den) {
        std::vector<std::pair<std::optional<double>, DepthLabel>> converted;
        converted.reserve(pairs.size());
        for (const auto& [pred, gt] : pairs)
            converted.emplace_back(pred, DepthLabel::from_value(gt));
        const PerceptionMetrics metrics = compute_perception_metrics(
            converted, sqrel_den == "gt" ? SqRelDenominator::Gt : SqRelDenominator::Pred);
        py::dict out;
        out["n_total"] = metrics.n_total;
        out["n_valid"] = metrics.n_valid;
        auto opt = [](const std::optional<double>& v) {
            return v ? py::object(py::float_(*v)) : py::object(py::none());
        };
        out["valid_answer_ratio"] = opt(metrics.valid_ratio);
        out["mse"] = opt(metrics.mse);
        out["rmse"] = opt(metrics.rmse);
        out["sq_rel"] = opt(metrics.sq_rel);
        out["delta1"] = opt(metrics.delta1);
        out["delta2"] = opt(metrics.delta2);
        out["delta3"] = opt(metrics.delta3);
        return out;
    }, py::arg("pairs"), py::arg("sqrel_den") = "pred");

    m.def("compute_proximity_metrics", [](const std::vector<std::pair<std::optional<std::string>, std::string>>& pairs) {
        std::vector<std::pair<std::optional<ProximityAnswer>, ProximityRelation>> converted;
        converted.reserve(pairs.size());
        for (const auto& [pred, gt] : pairs) {
            std::optional<ProximityAnswer> p;
            if (pred) {
                p = *pred == "first"    ? ProximityAnswer::First
                    : *pred == "second" ? ProximityAnswer::Second
                                        : ProximityAnswer::Equal;
            }
            converted.emplace_back(p, relation_from_name(gt));
        }
        const ProximityMetrics metrics = compute_proximity_metrics(converted);
        py::dict out;
        out["n_total"] = metrics.n_total;
        out["n_valid"] = metrics.n_valid;
        out["n_correct"] = metrics.n_correct;
        out["valid_answer_ratio"] =
            metrics.valid_ratio ? py::object(py::float_(*metrics.valid_ratio)) : py::object(py::none());
        out["accuracy"] =
            metrics.accuracy ? py::object(py::float_(*metrics.accuracy)) : py::object(py::none());
        return out;
    }, py::arg("pairs"));

    m.def("template_inventory", [] {
        py::list out;
        for (const auto& t : TemplateSet::builtin().all()) {
            py::dict d;
            d["id"] = t.id;
            d["stage"] = t.stage == Stage::Perception ? "perception" : "reasoning";
            d["answer_mode"] = t.mode == AnswerMode::Direct ? "direct" : "reasoned";
            d["caption_type"] = t.kind == CaptionKind::ObjectType ? "object" : "region";
            d["text"] = t.text;
            out.append(d);
        }
        return out;
    });

    m.def("generate", [](const std::string& scenes, const std::string& depth_dir,
                         const std::string& out, std::uint64_t seed, int jobs,
                         std::size_t max_pairs, std::size_t perception_cap, double direct_ratio,
                         double epsilon, int median_window) {
        const GenConfig config =
            make_config(seed, max_pairs, perception_cap, direct_ratio, epsilon, median_window);
        const ParseOutcome parsed = parse_annotations(read_file(scenes), AnnotationFormat::CocoVg);
        DirectoryDepthSource depth(depth_dir);
        std::string jsonl;
        const GenerateResult result =
            generate_dataset(parsed.records, depth, config, jsonl, jobs);
        write_file(out, jsonl);
        py::dict d;
        d["records"] = result.records_in;
        d["conversations"] = result.conversations;
        d["perception"] = result.perception;
        d["reasoning"] = result.reasoning;
        d["skips"] = result.skips.size();
        d["rejects"] = parsed.rejects.size();
        return d;
    }, py::arg("scenes"), py::arg("depth_dir"), py::arg("out"), py::arg("seed") = 0,
       py::arg("jobs") = 1, py::arg("max_pairs") = 8, py::arg("perception_cap") = 0,
       py::arg("direct_ratio") = 0.5, py::arg("epsilon") = 1e-6, py::arg("median_window") = 1);

    m.def("convert_to_eval", [](const std::string& source, const std::string& format,
                                const std::string& depth_dir, const std::string& out_eval,
                                const std::string& out_key, std::uint64_t seed,
                                std::size_t max_pairs, bool perception, bool proximity) {
        GenConfig config;
        config.seed = seed;
        config.max_pairs_per_image = max_pairs;
        const AnnotationFormat fmt =
            format == "make3d" ? AnnotationFormat::Make3dManifest : AnnotationFormat::CocoVg;
        const ParseOutcome parsed = parse_annotations(read_file(source), fmt);
        DirectoryDepthSource depth(depth_dir);
        const EvalSet set =
            convert_scenes_to_eval(parsed.records, depth, config, perception, proximity);
        std::string eval_jsonl, key_jsonl;
        const ConvertResult result = write_eval_set(set, config, TemplateSet::builtin(),
                                                    Lexicon::builtin(), eval_jsonl, key_jsonl);
        write_file(out_eval, eval_jsonl);
        write_file(out_key, key_jsonl);
        py::dict d;
        d["perception_items"] = result.perception_items;
        d["proximity_items"] = result.proximity_items;
        d["skips"] = result.skips.size();
        d["rejects"] = parsed.rejects.size();
        return d;
    }, py::arg("source"), py::arg("format"), py::arg("depth_dir"), py::arg("out_eval"),
       py::arg("out_key"), py::arg("seed") = 0, py::arg("max_pairs") = 8,
       py::arg("perception") = true, py::arg("proximity") = true);

    m.def("oracle", [](const std::string& eval_path, const std::string& key_path,
                       const std::string& out) {
        const auto responses = oracle_responder(read_eval_jsonl(eval_path), read_key_jsonl(key_path));
        write_file(out, responses_to_jsonl(responses, GenConfig{}, TemplateSet::builtin(),
                                           Lexicon::builtin()));
        return responses.size();
    }, py::arg("eval"), py::arg("key"), py::arg("out"));

    m.def("score", [](const std::string& eval_path, const std::string& key_path,
                      const std::string& responses_path, const std::string& sqrel_den) {
        const ScoreReport report = score_responses(
            read_eval_jsonl(eval_path), read_key_jsonl(key_path),
            read_responses_jsonl(responses_path),
            sqrel_den == "gt" ? SqRelDenominator::Gt : SqRelDenominator::Pred);
        GenConfig config;
        config.sqrel_denominator = sqrel_den;
        return report_to_py(
            score_report_to_json(report, config, TemplateSet::builtin(), Lexicon::builtin()));
    }, py::arg("eval"), py::arg("key"), py::arg("responses"), py::arg("sqrel_den") = "pred");

    m.def("stats", [](const std::string& path) { return report_to_py(stats_from_file(path).to_json()); },
          py::arg("path"));

    m.def("audit_scenes", [](const std::string& scenes, const std::string& depth_dir,
                             double threshold) {
        const ParseOutcome parsed = parse_annotations(read_file(scenes), AnnotationFormat::CocoVg);
        DirectoryDepthSource depth(depth_dir);
        py::list out;
        for (const SceneRecord& record : parsed.records) {
            auto loaded = depth.load(record);
            if (!loaded)
                continue;
            DepthMap map;
            try {
                map = to_normalized_depth(*loaded);
            } catch (const DegenerateMapError&) {
                continue;
            }
            for (const AuditFlag& flag : audit_scene(record, map, threshold)) {
                py::dict d;
                d["image_id"] = flag.image_id;
                d["kind"] =
                    flag.kind == AuditKind::CenterOffset ? "center_offset" : "duplicate_caption";
                d["object_ids"] = flag.object_ids;
                if (flag.kind == AuditKind::CenterOffset) {
                    d["center_depth"] = flag.center_depth;
                    d["bbox_median"] = flag.bbox_median;
                } else {
                    d["caption"] = flag.caption;
                }
                out.append(d);
            }
        }
        return out;
    }, py::arg("scenes"), py::arg("depth_dir"), py::arg("threshold") = 0.15);

#ifdef VERSION_INFO
    m.attr("__version__") = VERSION_INFO;
#else
    m.attr("__version__") = "dev";
#endif
}
