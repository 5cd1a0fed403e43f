#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "proxforge/pipeline.hpp"

using namespace proxforge;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Options {
    GenConfig config;
    std::string scenes;
    std::string manifest;
    std::string depth_dir;
    std::string out;
    std::string out_eval;
    std::string out_key;
    std::string in;
    std::string eval;
    std::string key;
    std::string responses;
    std::string rejects;
    std::string templates_path;
    std::string lexicon_path;
    int jobs = 1;
    bool text_report = false;
};

// --config JSON is applied first; explicit flags override it below.
void apply_config_file(Options& opt, const std::string& path, bool& seed_set) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!doc.is_object())
        throw ParseError(path + ": config must be a JSON object");

    GenConfig& c = opt.config;
    if (doc.contains("seed")) {
        c.seed = doc["seed"].get<std::uint64_t>();
        seed_set = true;
    }
    c.max_pairs_per_image = doc.value("max_pairs_per_image", c.max_pairs_per_image);
    c.perception_cap = doc.value("perception_cap", c.perception_cap);
    c.direct_ratio = doc.value("direct_ratio", c.direct_ratio);
    c.epsilon = doc.value("epsilon", c.epsilon);
    c.median_window = doc.value("median_window", c.median_window);
    c.sqrel_denominator = doc.value("sqrel_denominator", c.sqrel_denominator);
    c.audit_threshold = doc.value("audit_threshold", c.audit_threshold);
    c.system_message = doc.value("system_message", c.system_message);

    opt.scenes = doc.value("scenes", opt.scenes);
    opt.manifest = doc.value("manifest", opt.manifest);
    opt.depth_dir = doc.value("depth_dir", opt.depth_dir);
    opt.out = doc.value("out", opt.out);
    opt.templates_path = doc.value("templates", opt.templates_path);
    opt.lexicon_path = doc.value("lexicon", opt.lexicon_path);
    opt.jobs = doc.value("jobs", opt.jobs);
}

const TemplateSet& resolve_templates(const Options& opt, std::optional<TemplateSet>& storage) {
    if (opt.templates_path.empty())
        return TemplateSet::builtin();
    storage = TemplateSet::from_file(opt.templates_path);
    return *storage;
}

const Lexicon& resolve_lexicon(const Options& opt, std::optional<Lexicon>& storage) {
    if (opt.lexicon_path.empty())
        return Lexicon::builtin();
    storage = Lexicon::from_file(opt.lexicon_path);
    return *storage;
}

// parse + report rejects; returns exit contribution (kExitData when rejected)
int load_scenes(const std::string& path, AnnotationFormat format, ParseOutcome& outcome) {
    outcome = parse_annotations(read_file(path), format);
    return outcome.rejects.empty() ? kExitOk : kExitData;
}

std::string rejects_path(const Options& opt, const std::string& primary_out) {
    if (!opt.rejects.empty())
        return opt.rejects;
    return primary_out.empty() ? "rejects.jsonl" : primary_out + ".rejects.jsonl";
}

// An explicit --rejects path always gets the report. Without one, a report is
// still written (next to the primary output) when records were rejected, since
// a data-error exit must leave the evidence somewhere; routine skips alone do
// not create unrequested files.
void maybe_write_rejects(const Options& opt, const std::string& primary_out,
                         const std::vector<RecordReject>& rejects,
                         const std::vector<SkipEntry>& skips, const TemplateSet& templates,
                         const Lexicon& lexicon) {
    if (opt.rejects.empty() && rejects.empty())
        return;
    write_file(rejects_path(opt, primary_out),
               file_header_line("rejects", opt.config, templates, lexicon) +
                   rejects_to_jsonl(rejects, skips));
}

int cmd_generate(Options& opt) {
    std::optional<TemplateSet> tstore;
    std::optional<Lexicon> lstore;
    const TemplateSet& templates = resolve_templates(opt, tstore);
    const Lexicon& lexicon = resolve_lexicon(opt, lstore);

    ParseOutcome scenes;
    const int data_rc = load_scenes(opt.scenes, AnnotationFormat::CocoVg, scenes);

    DirectoryDepthSource depth(opt.depth_dir);
    std::string out_jsonl;
    const GenerateResult result = generate_dataset(scenes.records, depth, opt.config, out_jsonl,
                                                   opt.jobs, templates, lexicon);
    write_file(opt.out, out_jsonl);
    maybe_write_rejects(opt, opt.out, scenes.rejects, result.skips, templates, lexicon);

    std::cout << "records " << result.records_in << "  conversations " << result.conversations
              << " (perception " << result.perception << ", reasoning " << result.reasoning
              << ")  skips " << result.skips.size() << "  rejects " << scenes.rejects.size()
              << "\n";
    return data_rc;
}

int cmd_convert(Options& opt, AnnotationFormat format, bool perception, bool proximity) {
    std::optional<TemplateSet> tstore;
    std::optional<Lexicon> lstore;
    const TemplateSet& templates = resolve_templates(opt, tstore);
    const Lexicon& lexicon = resolve_lexicon(opt, lstore);

    const std::string& source = format == AnnotationFormat::CocoVg ? opt.scenes : opt.manifest;
    ParseOutcome scenes;
    const int data_rc = load_scenes(source, format, scenes);

    DirectoryDepthSource depth(opt.depth_dir);
    const EvalSet set = convert_scenes_to_eval(scenes.records, depth, opt.config, perception,
                                               proximity, templates, lexicon);
    std::string eval_jsonl, key_jsonl;
    const ConvertResult result =
        write_eval_set(set, opt.config, templates, lexicon, eval_jsonl, key_jsonl);
    write_file(opt.out_eval, eval_jsonl);
    write_file(opt.out_key, key_jsonl);
    maybe_write_rejects(opt, opt.out_eval, scenes.rejects, result.skips, templates, lexicon);

    std::cout << "perception items " << result.perception_items << "  proximity items "
              << result.proximity_items << "  skips " << result.skips.size() << "  rejects "
              << scenes.rejects.size() << "\n";
    return data_rc;
}

int cmd_stats(Options& opt) {
    std::optional<TemplateSet> tstore;
    std::optional<Lexicon> lstore;
    const TemplateSet& templates = resolve_templates(opt, tstore);
    const Lexicon& lexicon = resolve_lexicon(opt, lstore);

    const StatsReport report = stats_from_file(opt.in);
    const std::string out = stats_report_to_json(report, opt.config, templates, lexicon);
    if (opt.out.empty())
        std::cout << out;
    else
        write_file(opt.out, out);
    if (opt.text_report)
        std::cout << report.to_text();
    return kExitOk;
}

int cmd_score(Options& opt) {
    std::optional<TemplateSet> tstore;
    std::optional<Lexicon> lstore;
    const TemplateSet& templates = resolve_templates(opt, tstore);
    const Lexicon& lexicon = resolve_lexicon(opt, lstore);

    const auto items = read_eval_jsonl(opt.eval);
    const auto keys = read_key_jsonl(opt.key);
    const auto responses = read_responses_jsonl(opt.responses);
    const SqRelDenominator den = opt.config.sqrel_denominator == "gt" ? SqRelDenominator::Gt
                                                                      : SqRelDenominator::Pred;
    const ScoreReport report = score_responses(items, keys, responses, den);
    if (report.duplicate_responses > 0 || report.missing_responses > 0)
        std::cerr << "warning: " << report.duplicate_responses << " duplicate response id(s), "
                  << report.missing_responses << " item(s) without a response\n";
    const std::string out = score_report_to_json(report, opt.config, templates, lexicon);
    if (opt.out.empty())
        std::cout << out;
    else
        write_file(opt.out, out);

    // the report is the stdout payload; summary lines are status
    if (report.perception && report.perception->valid_ratio)
        std::cerr << "perception: valid " << *report.perception->valid_ratio
                  << (report.perception->mse ? "  mse " + std::to_string(*report.perception->mse)
                                             : std::string())
                  << "\n";
    if (report.proximity && report.proximity->accuracy)
        std::cerr << "proximity: valid " << *report.proximity->valid_ratio << "  accuracy "
                  << *report.proximity->accuracy << "\n";
    return kExitOk;
}

int cmd_audit(Options& opt) {
    std::optional<TemplateSet> tstore;
    std::optional<Lexicon> lstore;
    const TemplateSet& templates = resolve_templates(opt, tstore);
    const Lexicon& lexicon = resolve_lexicon(opt, lstore);

    ParseOutcome scenes;
    const int data_rc = load_scenes(opt.scenes, AnnotationFormat::CocoVg, scenes);

    DirectoryDepthSource depth(opt.depth_dir);
    std::string out;
    if (!opt.out.empty())
        out = file_header_line("audit", opt.config, templates, lexicon);
    std::vector<SkipEntry> skips;
    std::size_t flag_count = 0;
    for (const SceneRecord& record : scenes.records) {
        std::optional<LoadedMap> loaded;
        try {
            loaded = depth.load(record);
        } catch (const FormatError& e) {
            skips.push_back({record.image_id, "depth_read_error", e.what()});
            continue;
        }
        if (!loaded) {
            skips.push_back({record.image_id, "missing_depth_map", ""});
            continue;
        }
        if (record.width > 0 &&
            (record.width != loaded->width || record.height != loaded->height)) {
            skips.push_back({record.image_id, "depth_size_mismatch", ""});
            continue;
        }
        DepthMap map;
        try {
            map = to_normalized_depth(*loaded, opt.config.epsilon);
        } catch (const DegenerateMapError& e) {
            skips.push_back({record.image_id, "degenerate_map", e.what()});
            continue;
        }
        for (const AuditFlag& flag : audit_scene(record, map, opt.config.audit_threshold)) {
            nlohmann::ordered_json doc{
                {"image_id", flag.image_id},
                {"kind", flag.kind == AuditKind::CenterOffset ? "center_offset"
                                                              : "duplicate_caption"},
                {"object_ids", flag.object_ids}};
            if (flag.kind == AuditKind::CenterOffset) {
                doc["center_depth"] = flag.center_depth;
                doc["bbox_median"] = flag.bbox_median;
            } else {
                doc["caption"] = flag.caption;
            }
            out += doc.dump();
            out += '\n';
            ++flag_count;
        }
    }
    if (opt.out.empty())
        std::cout << out;
    else
        write_file(opt.out, out);
    maybe_write_rejects(opt, opt.out, scenes.rejects, skips, templates, lexicon);
    std::cerr << "flags " << flag_count << "  skips " << skips.size() << "  rejects "
              << scenes.rejects.size() << "\n";
    return data_rc;
}

int cmd_oracle(Options& opt) {
    std::optional<TemplateSet> tstore;
    std::optional<Lexicon> lstore;
    const TemplateSet& templates = resolve_templates(opt, tstore);
    const Lexicon& lexicon = resolve_lexicon(opt, lstore);

    const auto items = read_eval_jsonl(opt.eval);
    const auto keys = read_key_jsonl(opt.key);
    const auto responses = oracle_responder(items, keys);
    write_file(opt.out, responses_to_jsonl(responses, opt.config, templates, lexicon));
    std::cout << "responses " << responses.size() << "\n";
    return kExitOk;
}

int cmd_inspect(Options& opt) {
    const std::string bytes = read_file(opt.in);
    std::size_t pos = bytes.find('\n');
    const std::string first = bytes.substr(0, pos == std::string::npos ? bytes.size() : pos);
    std::size_t lines = 0;
    for (char c : bytes)
        if (c == '\n')
            ++lines;

    if (!first.empty() && first.front() == '{') {
        try {
            const json doc = json::parse(first);
            if (doc.contains(std::string(kHeaderKey))) {
                std::cout << "header: " << doc[std::string(kHeaderKey)].dump(2) << "\n";
                std::cout << "data lines: " << (lines > 0 ? lines - 1 : 0) << "\n";
                return kExitOk;
            }
        } catch (const json::parse_error&) {
            // fall through to the generic report
        }
    }
    std::cout << "no header; lines: " << lines << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"proxforge: proximity VQA dataset generation and scoring"};
    app.require_subcommand(1);

    Options opt;
    bool seed_set = false;

    // --config is applied before the flag values land, so flags win
    std::string config_path;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string_view(argv[i]) == "--config")
            config_path = argv[i + 1];
    try {
        if (!config_path.empty())
            apply_config_file(opt, config_path, seed_set);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }

    std::uint64_t seed_flag = 0;
    bool seed_flag_given = false;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file; explicit flags override it");
        cmd->add_option_function<std::uint64_t>(
               "--seed", [&](std::uint64_t v) { seed_flag = v; seed_flag_given = true; },
               "RNG seed (fallback: PROXFORGE_SEED env var)")
            ->type_name("UINT");
        cmd->add_option("--templates", opt.templates_path, "template JSON file (default: built-in)");
        cmd->add_option("--lexicon", opt.lexicon_path, "function-word lexicon file (default: built-in)");
    };
    const auto add_gen_knobs = [&](CLI::App* cmd) {
        cmd->add_option("--max-pairs", opt.config.max_pairs_per_image,
                        "reasoning pairs kept per image (0 = all)");
        cmd->add_option("--perception-cap", opt.config.perception_cap,
                        "perception questions per image (0 = all objects)");
        cmd->add_option("--direct-ratio", opt.config.direct_ratio,
                        "share of reasoning pairs answered directly");
        cmd->add_option("--epsilon", opt.config.epsilon, "disparity inversion epsilon");
        cmd->add_option("--median-window", opt.config.median_window,
                        "odd sampling window; 1 = single pixel");
        cmd->add_option("--system-message", opt.config.system_message, "conversation system message");
        cmd->add_option("--jobs", opt.jobs, "worker threads (output is identical for any value)")
            ->check(CLI::Range(1, 256));
        cmd->add_option("--rejects", opt.rejects, "rejects/skips report path");
    };

    auto* generate = app.add_subcommand("generate", "scenes + depth maps -> conversation JSONL");
    generate->add_option("--scenes", opt.scenes, "canonical scene JSON")->required();
    generate->add_option("--depth-dir", opt.depth_dir, "directory of depth/disparity maps")
        ->required();
    generate->add_option("--out", opt.out, "output JSONL path")->required();
    add_common(generate);
    add_gen_knobs(generate);

    auto* convert_gqa =
        app.add_subcommand("convert-gqa", "scenes + depth maps -> eval set + answer key");
    convert_gqa->add_option("--scenes", opt.scenes, "canonical scene JSON")->required();
    convert_gqa->add_option("--depth-dir", opt.depth_dir, "depth map directory")->required();
    convert_gqa->add_option("--out-eval", opt.out_eval, "eval items JSONL")->required();
    convert_gqa->add_option("--out-key", opt.out_key, "answer key JSONL")->required();
    add_common(convert_gqa);
    add_gen_knobs(convert_gqa);

    auto* convert_make3d = app.add_subcommand(
        "convert-make3d", "manifest + depth GT -> proximity eval set + answer key");
    convert_make3d->add_option("--manifest", opt.manifest, "make3d manifest JSONL")->required();
    convert_make3d->add_option("--depth-dir", opt.depth_dir, "depth map directory")->required();
    convert_make3d->add_option("--out-eval", opt.out_eval, "eval items JSONL")->required();
    convert_make3d->add_option("--out-key", opt.out_key, "answer key JSONL")->required();
    add_common(convert_make3d);
    add_gen_knobs(convert_make3d);

    auto* stats = app.add_subcommand("stats", "dataset statistics report");
    stats->add_option("--in", opt.in, "conversation JSONL")->required();
    stats->add_option("--out", opt.out, "report JSON path (default: stdout)");
    stats->add_flag("--text", opt.text_report, "also print a flat text histogram");
    add_common(stats);

    auto* score = app.add_subcommand("score", "score model responses against an eval set");
    score->add_option("--eval", opt.eval, "eval items JSONL")->required();
    score->add_option("--key", opt.key, "answer key JSONL")->required();
    score->add_option("--responses", opt.responses, "model responses JSONL")->required();
    score->add_option("--out", opt.out, "metrics report JSON (default: stdout)");
    score->add_option("--sqrel-den", opt.config.sqrel_denominator,
                      "Sq Rel denominator: pred (default) or gt")
        ->check(CLI::IsMember({"pred", "gt"}));
    add_common(score);

    auto* audit = app.add_subcommand("audit", "flag center offsets and duplicate captions");
    audit->add_option("--scenes", opt.scenes, "canonical scene JSON")->required();
    audit->add_option("--depth-dir", opt.depth_dir, "depth map directory")->required();
    audit->add_option("--threshold", opt.config.audit_threshold,
                      "center-vs-median depth threshold");
    audit->add_option("--out", opt.out, "audit flags JSONL (default: stdout)");
    audit->add_option("--rejects", opt.rejects, "rejects/skips report path");
    add_common(audit);

    auto* oracle = app.add_subcommand("oracle", "echo ground truth as canonical responses");
    oracle->add_option("--eval", opt.eval, "eval items JSONL")->required();
    oracle->add_option("--key", opt.key, "answer key JSONL")->required();
    oracle->add_option("--out", opt.out, "responses JSONL")->required();
    add_common(oracle);

    auto* inspect = app.add_subcommand("inspect", "show a file's header and line count");
    inspect->add_option("--in", opt.in, "any proxforge output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    if (seed_flag_given) {
        opt.config.seed = seed_flag;
    } else if (!seed_set) {
        if (const char* env = std::getenv("PROXFORGE_SEED"))
            opt.config.seed = std::strtoull(env, nullptr, 10);
    }

    try {
        opt.config.validate();
        if (generate->parsed())
            return cmd_generate(opt);
        if (convert_gqa->parsed())
            return cmd_convert(opt, AnnotationFormat::CocoVg, true, true);
        if (convert_make3d->parsed())
            return cmd_convert(opt, AnnotationFormat::Make3dManifest, false, true);
        if (stats->parsed())
            return cmd_stats(opt);
        if (score->parsed())
            return cmd_score(opt);
        if (audit->parsed())
            return cmd_audit(opt);
        if (oracle->parsed())
            return cmd_oracle(opt);
        if (inspect->parsed())
            return cmd_inspect(opt);
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
