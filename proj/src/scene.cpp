#include "proxforge/scene.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "proxforge/errors.hpp"

namespace proxforge {

using nlohmann::json;
using nlohmann::ordered_json;

std::pair<double, double> bbox_center(const BBox& bbox) {
    if (!(bbox.w > 0) || !(bbox.h > 0))
        throw InvalidBBoxError("non-positive bbox extent (w=" + std::to_string(bbox.w) +
                               ", h=" + std::to_string(bbox.h) + ")");
    return {bbox.x + bbox.w / 2.0, bbox.y + bbox.h / 2.0};
}

bool SceneObject::center_is_derived() const {
    if (!(bbox.w > 0) || !(bbox.h > 0))
        return false;
    const auto [dx, dy] = bbox_center(bbox);
    return cx == dx && cy == dy;
}

namespace {

std::string trim(std::string_view s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

// Pull the bbox back inside [0,width]x[0,height]. Returns false when nothing
// is left (fully outside), true otherwise; clamped set when it moved.
bool clamp_bbox(BBox& b, int width, int height, bool& clamped) {
    const BBox orig = b;
    double x0 = std::max(b.x, 0.0);
    double y0 = std::max(b.y, 0.0);
    double x1 = std::min(b.x + b.w, static_cast<double>(width));
    double y1 = std::min(b.y + b.h, static_cast<double>(height));
    if (!(x1 > x0) || !(y1 > y0))
        return false;
    b = BBox{x0, y0, x1 - x0, y1 - y0};
    clamped = (b.x != orig.x || b.y != orig.y || b.w != orig.w || b.h != orig.h);
    return true;
}

// One coco_vg entry -> record, or a reject reason.
std::optional<std::string> record_from_entry(const json& entry, SceneRecord& out) {
    if (!entry.is_object())
        return "entry is not an object";
    if (!entry.contains("image_id") || !entry["image_id"].is_string())
        return "missing image_id";
    out.image_id = entry["image_id"].get<std::string>();
    out.image_path = entry.value("image_path", std::string{});
    if (!entry.contains("width") || !entry.contains("height") ||
        !entry["width"].is_number_integer() || !entry["height"].is_number_integer())
        return "missing width/height";
    out.width = entry["width"].get<int>();
    out.height = entry["height"].get<int>();
    // width == height == 0 means "unknown until the depth map is loaded"
    // (records that came from a make3d manifest); anything else must be positive.
    const bool dims_known = !(out.width == 0 && out.height == 0);
    if (dims_known && (out.width <= 0 || out.height <= 0))
        return "non-positive image dimensions";
    if (!entry.contains("objects") || !entry["objects"].is_array())
        return "missing objects array";

    std::unordered_set<std::string> seen_ids;
    for (const auto& o : entry["objects"]) {
        SceneObject obj;
        if (!o.is_object())
            return "object entry is not an object";
        if (!o.contains("object_id") || !o["object_id"].is_string())
            return "object missing object_id";
        obj.object_id = o["object_id"].get<std::string>();
        if (!seen_ids.insert(obj.object_id).second)
            return "duplicate object_id '" + obj.object_id + "'";
        if (!o.contains("caption") || !o["caption"].is_string())
            return "object '" + obj.object_id + "' missing caption";
        obj.caption = o["caption"].get<std::string>();
        if (trim(obj.caption).empty())
            return "object '" + obj.object_id + "' has empty caption";
        if (!o.contains("bbox") || !o["bbox"].is_array() || o["bbox"].size() != 4)
            return "object '" + obj.object_id + "' missing bbox [x,y,w,h]";
        for (const auto& v : o["bbox"])
            if (!v.is_number())
                return "object '" + obj.object_id + "' has non-numeric bbox";
        obj.bbox = BBox{o["bbox"][0].get<double>(), o["bbox"][1].get<double>(),
                        o["bbox"][2].get<double>(), o["bbox"][3].get<double>()};
        if (!(obj.bbox.w > 0) || !(obj.bbox.h > 0))
            return "object '" + obj.object_id + "' has non-positive bbox extent";
        if (dims_known) {
            if (!clamp_bbox(obj.bbox, out.width, out.height, obj.clamped))
                return "object '" + obj.object_id + "' bbox lies fully outside the image";
            if (obj.clamped)
                out.warnings.push_back("clamped_bbox:" + obj.object_id);
        }

        if (o.contains("center")) {
            if (!o["center"].is_array() || o["center"].size() != 2 ||
                !o["center"][0].is_number() || !o["center"][1].is_number())
                return "object '" + obj.object_id + "' has malformed center";
            obj.cx = o["center"][0].get<double>();
            obj.cy = o["center"][1].get<double>();
        } else {
            std::tie(obj.cx, obj.cy) = bbox_center(obj.bbox);
        }
        out.objects.push_back(std::move(obj));
    }
    if (out.objects.empty())
        out.warnings.push_back("empty_objects");
    return std::nullopt;
}

ParseOutcome parse_coco_vg(const std::string& bytes) {
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw ParseError("scene JSON parse error at byte " + std::to_string(e.byte) + ": " +
                         e.what());
    }
    json entries = doc.is_array() ? std::move(doc) : json::array({std::move(doc)});

    ParseOutcome out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        SceneRecord rec;
        if (auto reason = record_from_entry(entries[i], rec)) {
            std::string id;
            if (entries[i].is_object() && entries[i].contains("image_id") &&
                entries[i]["image_id"].is_string())
                id = entries[i]["image_id"].get<std::string>();
            out.rejects.push_back({id, i, *reason});
        } else {
            out.records.push_back(std::move(rec));
        }
    }
    return out;
}

ParseOutcome parse_make3d(const std::string& bytes) {
    struct Group {
        SceneRecord record;
        std::optional<std::string> reject_reason;
        std::size_t first_line = 0;
    };
    std::vector<std::string> group_order;
    std::unordered_map<std::string, Group> groups;
    ParseOutcome out;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= bytes.size()) {
        const std::size_t nl = bytes.find('\n', pos);
        const std::string line =
            bytes.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = (nl == std::string::npos) ? bytes.size() + 1 : nl + 1;
        ++line_no;
        if (trim(line).empty())
            continue;

        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            out.rejects.push_back(
                {"", line_no, "manifest line " + std::to_string(line_no) + ": " + e.what()});
            continue;
        }
        if (!row.is_object() || !row.contains("image_id") || !row["image_id"].is_string()) {
            out.rejects.push_back(
                {"", line_no, "manifest line " + std::to_string(line_no) + ": missing image_id"});
            continue;
        }
        const std::string image_id = row["image_id"].get<std::string>();
        auto [it, inserted] = groups.try_emplace(image_id);
        Group& g = it->second;
        if (inserted) {
            group_order.push_back(image_id);
            g.first_line = line_no;
            g.record.image_id = image_id;
            g.record.image_path = row.value("image_path", std::string{});
            g.record.width = row.value("width", 0);
            g.record.height = row.value("height", 0);
        }
        if (g.reject_reason)
            continue;

        auto fail = [&](const std::string& why) {
            g.reject_reason = "manifest line " + std::to_string(line_no) + ": " + why;
        };
        if (!row.contains("caption") || !row["caption"].is_string() ||
            trim(row["caption"].get<std::string>()).empty()) {
            fail("missing caption");
            continue;
        }
        if (!row.contains("center") || !row["center"].is_array() || row["center"].size() != 2 ||
            !row["center"][0].is_number() || !row["center"][1].is_number()) {
            fail("missing center [cx,cy]");
            continue;
        }
        SceneObject obj;
        obj.object_id = row.value("object_id", "m" + std::to_string(g.record.objects.size()));
        obj.caption = row["caption"].get<std::string>();
        obj.cx = row["center"][0].get<double>();
        obj.cy = row["center"][1].get<double>();
        // 1x1 box at the center; the center itself stays manifest-verbatim.
        obj.bbox = BBox{obj.cx, obj.cy, 1.0, 1.0};
        g.record.objects.push_back(std::move(obj));
    }

    for (const auto& id : group_order) {
        Group& g = groups[id];
        if (g.reject_reason) {
            out.rejects.push_back({id, g.first_line, *g.reject_reason});
        } else {
            std::unordered_set<std::string> ids;
            bool dup = false;
            for (const auto& o : g.record.objects)
                if (!ids.insert(o.object_id).second) {
                    out.rejects.push_back({id, g.first_line, "duplicate object_id '" + o.object_id + "'"});
                    dup = true;
                    break;
                }
            if (!dup)
                out.records.push_back(std::move(g.record));
        }
    }
    return out;
}

} // namespace

ParseOutcome parse_annotations(const std::string& bytes, AnnotationFormat format) {
    return format == AnnotationFormat::CocoVg ? parse_coco_vg(bytes) : parse_make3d(bytes);
}

std::string serialize_scenes(const std::vector<SceneRecord>& records) {
    ordered_json arr = ordered_json::array();
    for (const auto& rec : records) {
        ordered_json objects = ordered_json::array();
        for (const auto& obj : rec.objects) {
            ordered_json o{{"object_id", obj.object_id},
                           {"caption", obj.caption},
                           {"bbox", {obj.bbox.x, obj.bbox.y, obj.bbox.w, obj.bbox.h}}};
            if (!obj.center_is_derived())
                o["center"] = {obj.cx, obj.cy};
            objects.push_back(std::move(o));
        }
        arr.push_back(ordered_json{{"image_id", rec.image_id},
                                   {"image_path", rec.image_path},
                                   {"width", rec.width},
                                   {"height", rec.height},
                                   {"objects", std::move(objects)}});
    }
    return arr.dump(2) + "\n";
}

} // namespace proxforge
