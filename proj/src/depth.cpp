#include "proxforge/depth.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <limits>

#include <png.h>

namespace proxforge {

namespace {

std::string pixel_msg(const char* what, std::size_t index, int width, std::size_t offset) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s at pixel (%zu,%zu), byte offset %zu", what,
                  index / static_cast<std::size_t>(width), index % static_cast<std::size_t>(width),
                  offset);
    return std::string(buf);
}

void check_pixels(const std::vector<float>& values, int width, std::size_t payload_offset) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float v = values[i];
        if (!std::isfinite(v))
            throw FormatError(pixel_msg("non-finite value", i, width, payload_offset + i * 4));
        if (v < 0.0f)
            throw FormatError(pixel_msg("negative value", i, width, payload_offset + i * 4));
    }
}

float f32_from_le(const unsigned char* p) {
    std::uint32_t u = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                      static_cast<std::uint32_t>(p[2]) << 16 |
                      static_cast<std::uint32_t>(p[3]) << 24;
    return std::bit_cast<float>(u);
}

float f32_from_be(const unsigned char* p) {
    std::uint32_t u = static_cast<std::uint32_t>(p[3]) | static_cast<std::uint32_t>(p[2]) << 8 |
                      static_cast<std::uint32_t>(p[1]) << 16 |
                      static_cast<std::uint32_t>(p[0]) << 24;
    return std::bit_cast<float>(u);
}

void f32_to_le(float v, std::string& out) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(v);
    out.push_back(static_cast<char>(u & 0xff));
    out.push_back(static_cast<char>((u >> 8) & 0xff));
    out.push_back(static_cast<char>((u >> 16) & 0xff));
    out.push_back(static_cast<char>((u >> 24) & 0xff));
}

void f32_to_be(float v, std::string& out) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(v);
    out.push_back(static_cast<char>((u >> 24) & 0xff));
    out.push_back(static_cast<char>((u >> 16) & 0xff));
    out.push_back(static_cast<char>((u >> 8) & 0xff));
    out.push_back(static_cast<char>(u & 0xff));
}

void u32_to_le(std::uint32_t u, std::string& out) {
    out.push_back(static_cast<char>(u & 0xff));
    out.push_back(static_cast<char>((u >> 8) & 0xff));
    out.push_back(static_cast<char>((u >> 16) & 0xff));
    out.push_back(static_cast<char>((u >> 24) & 0xff));
}

std::uint32_t u32_from_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

// ---- PFM ---------------------------------------------------------------------

// Header lines are single-'\n' terminated per the format definition.
std::string read_header_line(const std::string& bytes, std::size_t& pos) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos)
        throw FormatError("pfm: truncated header at byte " + std::to_string(pos));
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
}

LoadedMap read_pfm(const std::string& bytes) {
    std::size_t pos = 0;
    const std::string magic = read_header_line(bytes, pos);
    if (magic == "PF")
        throw FormatError("pfm: color 'PF' maps are not supported, expected grayscale 'Pf'");
    if (magic != "Pf")
        throw FormatError("pfm: bad magic at byte 0, expected 'Pf'");

    const std::string dims = read_header_line(bytes, pos);
    int width = 0, height = 0;
    char extra = 0;
    if (std::sscanf(dims.c_str(), "%d %d %c", &width, &height, &extra) != 2 || width <= 0 ||
        height <= 0)
        throw FormatError("pfm: bad dimensions line '" + dims + "'");

    const std::size_t scale_pos = pos;
    const std::string scale_line = read_header_line(bytes, pos);
    double scale = 0;
    if (std::sscanf(scale_line.c_str(), "%lf %c", &scale, &extra) != 1 || scale == 0.0)
        throw FormatError("pfm: bad scale line at byte " + std::to_string(scale_pos));

    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() - pos != n * 4)
        throw FormatError("pfm: payload size " + std::to_string(bytes.size() - pos) +
                          " does not match " + std::to_string(width) + "x" +
                          std::to_string(height) + " floats");

    const bool little = scale < 0;
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + pos;

    LoadedMap map;
    map.kind = MapKind::Disparity;
    map.width = width;
    map.height = height;
    map.values.resize(n);
    // PFM stores the bottom row first; flip to top-left origin.
    for (int row = 0; row < height; ++row) {
        const int src_row = height - 1 - row;
        for (int col = 0; col < width; ++col) {
            const std::size_t src = (static_cast<std::size_t>(src_row) * width + col) * 4;
            map.values[static_cast<std::size_t>(row) * width + col] =
                little ? f32_from_le(p + src) : f32_from_be(p + src);
        }
    }
    check_pixels(map.values, width, pos);
    return map;
}

// ---- rawf32 --------------------------------------------------------------------

constexpr char kRawMagic[4] = {'P', 'X', 'D', 'M'};
constexpr std::uint32_t kRawFlagDepth = 1u;

LoadedMap read_rawf32(const std::string& bytes) {
    if (bytes.size() < 16)
        throw FormatError("rawf32: file shorter than the 16-byte header");
    if (std::memcmp(bytes.data(), kRawMagic, 4) != 0)
        throw FormatError("rawf32: bad magic at byte 0, expected 'PXDM'");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t width = u32_from_le(p + 4);
    const std::uint32_t height = u32_from_le(p + 8);
    const std::uint32_t flags = u32_from_le(p + 12);
    if (width == 0 || height == 0)
        throw FormatError("rawf32: zero dimension in header");
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (bytes.size() - 16 != n * 4)
        throw FormatError("rawf32: payload size " + std::to_string(bytes.size() - 16) +
                          " does not match " + std::to_string(width) + "x" +
                          std::to_string(height) + " floats");

    LoadedMap map;
    map.kind = (flags & kRawFlagDepth) ? MapKind::Depth : MapKind::Disparity;
    map.width = static_cast<int>(width);
    map.height = static_cast<int>(height);
    map.values.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        map.values[i] = f32_from_le(p + 16 + i * 4);
    check_pixels(map.values, map.width, 16);
    return map;
}

// ---- png16 via libpng -----------------------------------------------------------

struct PngReadState {
    const unsigned char* data;
    std::size_t size;
    std::size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t len) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->pos + len > st->size)
        png_error(png, "read past end of buffer");
    std::memcpy(out, st->data + st->pos, len);
    st->pos += len;
}

void png_mem_write(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), len);
}

void png_mem_flush(png_structp) {}

LoadedMap read_png16(const std::string& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
        throw FormatError("png16: not a PNG file (bad signature at byte 0)");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        throw FormatError("png16: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("png16: libpng init failed");
    }

    PngReadState state{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), 0};
    std::vector<png_bytep> rows;
    std::vector<unsigned char> pixels;
    int width = 0, height = 0;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png16: corrupt PNG stream");
    }

    png_set_read_fn(png, &state, png_mem_read);
    png_read_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png16: expected single-channel 16-bit grayscale, got color_type " +
                          std::to_string(color_type) + " bit_depth " + std::to_string(bit_depth));
    }

    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const std::size_t row_bytes = png_get_rowbytes(png, info);
    pixels.resize(row_bytes * static_cast<std::size_t>(height));
    rows.resize(static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r)
        rows[static_cast<std::size_t>(r)] = pixels.data() + row_bytes * static_cast<std::size_t>(r);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    LoadedMap map;
    map.kind = MapKind::Disparity;
    map.width = width;
    map.height = height;
    map.values.resize(static_cast<std::size_t>(width) * height);
    for (int r = 0; r < height; ++r) {
        const unsigned char* row = pixels.data() + row_bytes * static_cast<std::size_t>(r);
        for (int c = 0; c < width; ++c) {
            // PNG samples are big-endian.
            const unsigned raw = static_cast<unsigned>(row[2 * c]) << 8 | row[2 * c + 1];
            map.values[static_cast<std::size_t>(r) * width + c] =
                static_cast<float>(raw) / 65535.0f;
        }
    }
    return map;
}

} // namespace

// ---- public API ------------------------------------------------------------------

std::string DepthLabel::str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%d.%02d", centi / 100, centi % 100);
    return std::string(buf);
}

DepthLabel DepthLabel::from_value(double v) {
    int centi = round_half_up_centi(v);
    centi = std::clamp(centi, 0, 100);
    return DepthLabel{centi};
}

LoadedMap read_depth_file(const std::string& bytes, DepthFileFormat format) {
    switch (format) {
    case DepthFileFormat::Pfm: return read_pfm(bytes);
    case DepthFileFormat::Png16: return read_png16(bytes);
    case DepthFileFormat::RawF32: return read_rawf32(bytes);
    }
    throw FormatError("unknown depth file format");
}

LoadedMap read_depth_file_path(const std::string& path) {
    DepthFileFormat format;
    if (path.ends_with(".pfm"))
        format = DepthFileFormat::Pfm;
    else if (path.ends_with(".png"))
        format = DepthFileFormat::Png16;
    else if (path.ends_with(".rawf32"))
        format = DepthFileFormat::RawF32;
    else
        throw FormatError("unrecognized depth file extension: " + path);

    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f)
        throw FormatError("cannot open depth file: " + path);
    std::string bytes;
    char buf[1 << 16];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0)
        bytes.append(buf, got);
    std::fclose(f);
    try {
        return read_depth_file(bytes, format);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

std::string write_pfm(const DisparityMap& map, bool little_endian) {
    char header[64];
    std::snprintf(header, sizeof(header), "Pf\n%d %d\n%s\n", map.width, map.height,
                  little_endian ? "-1.0" : "1.0");
    std::string out(header);
    out.reserve(out.size() + map.values.size() * 4);
    for (int row = map.height - 1; row >= 0; --row)
        for (int col = 0; col < map.width; ++col) {
            const float v = map.at(row, col);
            little_endian ? f32_to_le(v, out) : f32_to_be(v, out);
        }
    return out;
}

std::string write_rawf32(int width, int height, const std::vector<float>& values, bool is_depth) {
    std::string out(kRawMagic, 4);
    u32_to_le(static_cast<std::uint32_t>(width), out);
    u32_to_le(static_cast<std::uint32_t>(height), out);
    u32_to_le(is_depth ? kRawFlagDepth : 0u, out);
    out.reserve(16 + values.size() * 4);
    for (float v : values)
        f32_to_le(v, out);
    return out;
}

std::string write_png16(int width, int height, const std::vector<std::uint16_t>& raw) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        throw FormatError("png16: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("png16: libpng init failed");
    }

    std::string out;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * height * 2);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        pixels[2 * i] = static_cast<unsigned char>(raw[i] >> 8);
        pixels[2 * i + 1] = static_cast<unsigned char>(raw[i] & 0xff);
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r)
        rows[static_cast<std::size_t>(r)] =
            pixels.data() + static_cast<std::size_t>(r) * width * 2;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("png16: write failed");
    }
    png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

DepthMap disparity_to_depth(const DisparityMap& map, double epsilon) {
    DepthMap out;
    out.width = map.width;
    out.height = map.height;
    out.normalized = false;
    out.values.resize(map.values.size());
    for (std::size_t i = 0; i < map.values.size(); ++i)
        out.values[i] = 1.0 / (static_cast<double>(map.values[i]) + epsilon);
    return out;
}

DepthMap normalize_depth(const DepthMap& map) {
    if (map.values.empty())
        throw DegenerateMapError("empty depth map");
    const auto [mn_it, mx_it] = std::minmax_element(map.values.begin(), map.values.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mn == mx)
        throw DegenerateMapError("flat depth map (min == max == " + std::to_string(mn) + ")");

    DepthMap out;
    out.width = map.width;
    out.height = map.height;
    out.normalized = true;
    out.values.resize(map.values.size());
    const double range = mx - mn;
    for (std::size_t i = 0; i < map.values.size(); ++i)
        out.values[i] = std::clamp((map.values[i] - mn) / range, 0.0, 1.0);
    return out;
}

DepthMap to_normalized_depth(const LoadedMap& loaded, double epsilon) {
    if (loaded.kind == MapKind::Disparity) {
        DisparityMap disp{loaded.width, loaded.height, loaded.values};
        return normalize_depth(disparity_to_depth(disp, epsilon));
    }
    DepthMap depth;
    depth.width = loaded.width;
    depth.height = loaded.height;
    depth.values.assign(loaded.values.begin(), loaded.values.end());
    return normalize_depth(depth);
}

namespace {

// round-half-up pixel index with a 1px out-of-bounds tolerance
int clamp_index(double coord, int size, const char* axis) {
    const int idx = static_cast<int>(std::floor(coord + 0.5));
    if (idx < -1 || idx > size)
        throw OutOfBoundsError(std::string("center ") + axis + "=" + std::to_string(coord) +
                               " outside the image (size " + std::to_string(size) + ")");
    return std::clamp(idx, 0, size - 1);
}

} // namespace

DepthLabel sample_object_depth(const DepthMap& map, double cx, double cy, int window) {
    if (!map.normalized)
        throw std::invalid_argument("sample_object_depth requires a normalized map");
    if (window < 1 || window % 2 == 0)
        throw std::invalid_argument("window must be an odd integer >= 1");

    const int col = clamp_index(cx, map.width, "x");
    const int row = clamp_index(cy, map.height, "y");

    if (window == 1)
        return DepthLabel::from_value(map.at(row, col));

    const int half = window / 2;
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(window) * window);
    for (int r = std::max(0, row - half); r <= std::min(map.height - 1, row + half); ++r)
        for (int c = std::max(0, col - half); c <= std::min(map.width - 1, col + half); ++c)
            vals.push_back(map.at(r, c));
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    const double median =
        (n % 2 == 1) ? vals[n / 2] : (vals[n / 2 - 1] + vals[n / 2]) / 2.0;
    return DepthLabel::from_value(median);
}

} // namespace proxforge
