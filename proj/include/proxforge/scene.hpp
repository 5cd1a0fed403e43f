#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "proxforge/depth.hpp"

namespace proxforge {

struct BBox {
    double x = 0;
    double y = 0;
    double w = 0;
    double h = 0;
};

/// Exact center (x + w/2, y + h/2); no pixel rounding here, rounding is the
/// sampler's job. Throws InvalidBBoxError for non-positive extents.
std::pair<double, double> bbox_center(const BBox& bbox);

struct SceneObject {
    std::string object_id;
    std::string caption; // verbatim from source, non-empty after trimming
    BBox bbox;
    double cx = 0; // derived from bbox for coco_vg; manifest-verbatim for make3d
    double cy = 0;
    bool clamped = false; // bbox was pulled back inside the image
    std::optional<DepthLabel> depth_label;

    /// True when (cx, cy) is exactly the bbox-derived center.
    bool center_is_derived() const;
};

struct SceneRecord {
    std::string image_id;
    std::string image_path;
    int width = 0;  // 0 = unknown (make3d manifests carry no dimensions)
    int height = 0;
    std::vector<SceneObject> objects;
    std::vector<std::string> warnings; // e.g. "empty_objects", "clamped_bbox:<id>"
};

enum class AnnotationFormat { CocoVg, Make3dManifest };

struct RecordReject {
    std::string image_id; // may be empty when the id itself was unreadable
    std::size_t entry_index = 0;
    std::string reason;
};

struct ParseOutcome {
    std::vector<SceneRecord> records;
    std::vector<RecordReject> rejects;
};

/// Parse annotation bytes into SceneRecords. Malformed structure throws
/// ParseError with a byte/line position; entry-level problems (missing
/// caption/bbox, duplicate object ids) reject that record into `rejects`
/// and the remaining records are still returned.
/// count_in == records.size() + rejects.size().
ParseOutcome parse_annotations(const std::string& bytes, AnnotationFormat format);

/// Canonical scene JSON, deterministic bytes. parse(serialize(x)) is stable.
std::string serialize_scenes(const std::vector<SceneRecord>& records);

} // namespace proxforge
