#pragma once

#include <json.hpp>

#include "lungcrowd/segment.hpp"

namespace lungcrowd {

void to_json(nlohmann::json& j, const DisplayWindow& w);
void from_json(const nlohmann::json& j, DisplayWindow& w);
void to_json(nlohmann::json& j, const RenderConfig& c);
void from_json(const nlohmann::json& j, RenderConfig& c);
void to_json(nlohmann::json& j, const Box& b);
void from_json(const nlohmann::json& j, Box& b);
void to_json(nlohmann::json& j, const SliceRange& r);
void from_json(const nlohmann::json& j, SliceRange& r);
void to_json(nlohmann::json& j, const QcMarker& m);
void from_json(const nlohmann::json& j, QcMarker& m);
void to_json(nlohmann::json& j, const SegmentLayout& l);
void from_json(const nlohmann::json& j, SegmentLayout& l);

/// segment.json document: layout fields, fps, seed and the marker record (or null).
nlohmann::json segment_manifest(const SegmentLayout& layout, const std::optional<QcMarker>& marker,
                                std::uint64_t seed);

/// The manifest with every server-side field (marker, seed) removed.
nlohmann::json worker_manifest(const nlohmann::json& manifest);

}  // namespace lungcrowd
