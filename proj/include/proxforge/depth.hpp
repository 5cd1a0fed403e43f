#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "proxforge/errors.hpp"

namespace proxforge {

/// Relative depth label: [0,1] quantized to exactly two decimals.
/// Stored as integer hundredths so equality and formatting are exact.
struct DepthLabel {
    int centi = 0; // 0..100

    double value() const { return centi / 100.0; }
    std::string str() const; // "0.35", "1.00"

    /// Quantize with round-half-up, clamping tiny fp overshoot around [0,1].
    static DepthLabel from_value(double v);

    friend auto operator<=>(const DepthLabel&, const DepthLabel&) = default;
};

enum class MapKind { Disparity, Depth };

/// Dense per-pixel disparity, row-major, top-left origin. Values finite, >= 0.
struct DisparityMap {
    int width = 0;
    int height = 0;
    std::vector<float> values;

    float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

/// Dense per-pixel depth. Normalized maps are min-max scaled to [0,1],
/// 0 = closest point in the image.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;
    bool normalized = false;

    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

/// What read_depth_file produced, before interpretation.
struct LoadedMap {
    MapKind kind = MapKind::Disparity;
    int width = 0;
    int height = 0;
    std::vector<float> values;
};

enum class DepthFileFormat { Pfm, Png16, RawF32 };

// ---- file codecs -----------------------------------------------------------
//
// PFM:    "Pf\n<width> <height>\n<scale>\n" then width*height float32,
//         little-endian when scale < 0, big-endian when scale > 0,
//         bottom row first. Grayscale only ("PF" color maps are rejected).
// png16:  single-channel 16-bit grayscale; disparity = raw / 65535.
// rawf32: 16-byte header (magic "PXDM", u32 width, u32 height, u32 flags,
//         all little-endian; flags bit0 = values are depth, not disparity),
//         then row-major little-endian float32.
//
// All readers reject NaN/Inf/negative pixels, naming the offending pixel.

LoadedMap read_depth_file(const std::string& bytes, DepthFileFormat format);

/// Format picked from the file extension: .pfm, .png, .rawf32.
LoadedMap read_depth_file_path(const std::string& path);

std::string write_pfm(const DisparityMap& map, bool little_endian = true);
std::string write_rawf32(int width, int height, const std::vector<float>& values, bool is_depth);
std::string write_png16(int width, int height, const std::vector<std::uint16_t>& raw);

// ---- math ------------------------------------------------------------------

/// depth = 1 / (disparity + epsilon), elementwise. Output is not normalized.
/// Strictly order-reversing: larger disparity = closer = smaller depth.
DepthMap disparity_to_depth(const DisparityMap& map, double epsilon = 1e-6);

/// Min-max normalize to [0,1]. Throws DegenerateMapError when max == min;
/// a flat map cannot rank proximity and the image must be skipped.
DepthMap normalize_depth(const DepthMap& map);

/// Interpret a loaded file as normalized depth: disparity is inverted first,
/// depth is normalized directly.
DepthMap to_normalized_depth(const LoadedMap& loaded, double epsilon = 1e-6);

/// Depth label at a bbox center. Pixel = round-half-up of (cx, cy), clamped
/// with a 1px tolerance; window k > 1 takes the median of the k x k
/// neighborhood clipped to the image (even counts average the two middles).
DepthLabel sample_object_depth(const DepthMap& map, double cx, double cy, int window = 1);

/// round-half-up at two decimals, the one rounding rule used for labels.
inline int round_half_up_centi(double v) {
    return static_cast<int>(std::floor(v * 100.0 + 0.5));
}

} // namespace proxforge
