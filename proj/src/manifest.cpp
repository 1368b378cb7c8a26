#include "lungcrowd/manifest.hpp"

#include "lungcrowd/error.hpp"

namespace lungcrowd {

using nlohmann::json;

void to_json(json& j, const DisplayWindow& w) { j = json{{"level", w.level}, {"width", w.width}}; }

void from_json(const json& j, DisplayWindow& w) {
  w.level = j.at("level").get<double>();
  w.width = j.at("width").get<double>();
  w.validate();
}

void to_json(json& j, const RenderConfig& c) {
  j = json{{"slab_thickness", c.slab_thickness},
           {"slab_stride", c.slab_stride},
           {"interp_frames", c.interp_frames},
           {"fps", c.fps},
           {"window", c.window}};
}

void from_json(const json& j, RenderConfig& c) {
  RenderConfig defaults;
  c.slab_thickness = j.value("slab_thickness", defaults.slab_thickness);
  c.slab_stride = j.value("slab_stride", defaults.slab_stride);
  c.interp_frames = j.value("interp_frames", defaults.interp_frames);
  c.fps = j.value("fps", defaults.fps);
  c.window = j.contains("window") ? j.at("window").get<DisplayWindow>() : defaults.window;
  c.validate();
}

void to_json(json& j, const Box& b) { j = json{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

void from_json(const json& j, Box& b) {
  b.x = j.at("x").get<int>();
  b.y = j.at("y").get<int>();
  b.w = j.at("w").get<int>();
  b.h = j.at("h").get<int>();
}

void to_json(json& j, const SliceRange& r) { j = json::array({r.z0, r.z1}); }

void from_json(const json& j, SliceRange& r) {
  if (!j.is_array() || j.size() != 2) fail(ErrorKind::format, "slice range must be [z0, z1]");
  r.z0 = j[0].get<int>();
  r.z1 = j[1].get<int>();
}

void to_json(json& j, const QcMarker& m) {
  j = json{{"sprite_id", m.sprite_id},
           {"frame_span", json::array({m.first_frame, m.last_frame})},
           {"box", m.box},
           {"seed", m.seed}};
}

void from_json(const json& j, QcMarker& m) {
  m.sprite_id = j.at("sprite_id").get<std::string>();
  const auto& span = j.at("frame_span");
  m.first_frame = span.at(0).get<int>();
  m.last_frame = span.at(1).get<int>();
  m.box = j.at("box").get<Box>();
  m.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(json& j, const SegmentLayout& l) {
  json frames = json::array();
  for (std::size_t i = 0; i < l.frames.size(); ++i) {
    const auto& f = l.frames[i];
    json entry{{"index", i}, {"slab", f.slab_index}};
    if (f.kind == FrameKind::keyframe) {
      entry["kind"] = "keyframe";
    } else {
      entry["kind"] = "interpolated";
      entry["step"] = f.step;
      entry["fraction"] = f.fraction;
    }
    frames.push_back(std::move(entry));
  }
  j = json{{"segment_id", l.segment_id},
           {"patient_id", l.patient_id},
           {"quadrant_id", std::string(to_string(l.quadrant))},
           {"bbox2d", l.bbox2d},
           {"width", l.width()},
           {"height", l.height()},
           {"frame_count", l.frame_count()},
           {"slice_range", l.slice_range},
           {"config", l.config},
           {"fps", l.config.fps},
           {"slab_table", l.slab_table},
           {"frames", std::move(frames)},
           {"mask_pixels", l.mask_pixels},
           {"thin", l.thin}};
}

void from_json(const json& j, SegmentLayout& l) {
  l.segment_id = j.at("segment_id").get<std::string>();
  l.patient_id = j.at("patient_id").get<std::string>();
  l.quadrant = quadrant_from_string(j.at("quadrant_id").get<std::string>());
  l.bbox2d = j.at("bbox2d").get<Box>();
  l.slice_range = j.at("slice_range").get<SliceRange>();
  l.config = j.at("config").get<RenderConfig>();
  l.slab_table = j.at("slab_table").get<std::vector<SliceRange>>();
  l.frames.clear();
  for (const auto& entry : j.at("frames")) {
    FrameInfo f;
    f.slab_index = entry.at("slab").get<int>();
    const auto kind = entry.at("kind").get<std::string>();
    if (kind == "keyframe") {
      f.kind = FrameKind::keyframe;
    } else if (kind == "interpolated") {
      f.kind = FrameKind::interpolated;
      f.step = entry.at("step").get<int>();
      f.fraction = entry.at("fraction").get<double>();
    } else {
      fail(ErrorKind::format, "unknown frame kind '" + kind + "'");
    }
    l.frames.push_back(f);
  }
  l.mask_pixels = j.value("mask_pixels", std::vector<std::int64_t>{});
  l.thin = j.value("thin", false);
}

json segment_manifest(const SegmentLayout& layout, const std::optional<QcMarker>& marker, std::uint64_t seed) {
  json j = layout;
  j["marker"] = marker ? json(*marker) : json(nullptr);
  j["seed"] = seed;
  return j;
}

json worker_manifest(const json& manifest) {
  json j = manifest;
  j.erase("marker");
  j.erase("seed");
  return j;
}

}  // namespace lungcrowd
