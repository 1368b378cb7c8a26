#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lungcrowd/geometry.hpp"
#include "lungcrowd/segmentation.hpp"
#include "lungcrowd/volume.hpp"

namespace lungcrowd {

struct RenderConfig {
  int slab_thickness = 5;
  int slab_stride = 1;
  int interp_frames = 2;  // frames inserted between consecutive keyframes
  double fps = 3.0;
  DisplayWindow window;

  void validate() const;

  friend bool operator==(const RenderConfig&, const RenderConfig&) = default;
};

enum class FrameKind { keyframe, interpolated };

/// Position of a frame in the video. For interpolated frames `slab_index` is
/// the earlier keyframe and `step` runs 1..interp_frames, so the blend
/// fraction is step / (interp_frames + 1).
struct FrameInfo {
  FrameKind kind = FrameKind::keyframe;
  int slab_index = 0;
  int step = 0;
  double fraction = 0.0;

  friend bool operator==(const FrameInfo&, const FrameInfo&) = default;
};

/// Frame-to-volume geometry of a rendered segment. Everything matching and
/// simulation need, without pixels.
struct SegmentLayout {
  std::string segment_id;
  std::string patient_id;
  QuadrantId quadrant = QuadrantId::left_upper;
  Box bbox2d;              // frame (0,0) is volume (bbox2d.x, bbox2d.y)
  SliceRange slice_range;  // of the quadrant
  RenderConfig config;
  std::vector<SliceRange> slab_table;  // one per keyframe
  std::vector<FrameInfo> frames;
  std::vector<std::int64_t> mask_pixels;  // in-mask pixel count per keyframe
  bool thin = false;                      // quadrant thinner than one slab

  int width() const { return bbox2d.w; }
  int height() const { return bbox2d.h; }
  int frame_count() const { return static_cast<int>(frames.size()); }
  Box frame_bounds() const { return Box{0, 0, bbox2d.w, bbox2d.h}; }

  friend bool operator==(const SegmentLayout&, const SegmentLayout&) = default;
};

/// Quality-control sprite placement. Visible on frames [first_frame, last_frame].
struct QcMarker {
  std::string sprite_id;
  int first_frame = 0;
  int last_frame = 0;
  Box box;
  std::uint64_t seed = 0;

  bool visible_on(int frame) const { return frame >= first_frame && frame <= last_frame; }

  friend bool operator==(const QcMarker&, const QcMarker&) = default;
};

struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
  FrameInfo info;

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct VideoSegment {
  SegmentLayout layout;
  std::vector<Frame> frames;
  /// Per keyframe, 1 where the quadrant mask has a voxel in the slab.
  std::vector<std::vector<std::uint8_t>> footprints;
  std::optional<QcMarker> marker;
  std::uint64_t seed = 0;
};

}  // namespace lungcrowd
