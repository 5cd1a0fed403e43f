#pragma once

#include <stdexcept>
#include <string>

namespace proxforge {

/// Malformed input bytes (bad JSON, bad header, truncated payload).
/// Message carries a byte offset or line number where known.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Depth/disparity file does not match its declared format.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bounding box with non-positive width or height.
class InvalidBBoxError : public std::runtime_error {
public:
    explicit InvalidBBoxError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Flat map (max == min): cannot be normalized, the image must be skipped.
class DegenerateMapError : public std::runtime_error {
public:
    explicit DegenerateMapError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Sampling center outside the image beyond the 1px clamping tolerance.
class OutOfBoundsError : public std::runtime_error {
public:
    explicit OutOfBoundsError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Eval set / answer key / responses disagree structurally (id mismatch, empty set).
class InvalidEvalSetError : public std::runtime_error {
public:
    explicit InvalidEvalSetError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace proxforge
