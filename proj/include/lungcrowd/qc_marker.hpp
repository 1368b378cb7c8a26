#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lungcrowd/ground_truth.hpp"
#include "lungcrowd/png_io.hpp"
#include "lungcrowd/segment.hpp"
#include "lungcrowd/submission.hpp"

namespace lungcrowd {

struct Sprite {
  std::string id;
  Image2D<Rgba> pixels;
};

/// Built-in gorilla silhouette, opaque body on a transparent background.
Sprite default_sprite(int size = 32);

/// Loads an RGBA PNG and rescales it (nearest neighbour) to size x size.
Sprite load_sprite(const std::filesystem::path& path, int size = 32);

struct MarkerConfig {
  double duration_s = 2.0;
  int max_attempts = 10000;
  double min_mask_coverage = 0.25;
  double hit_overlap = 0.5;  // QC pass rule: overlap_ratio(annotation, marker) >= this
};

/// Ground-truth boxes in frame coordinates that can appear on a frame: every
/// extent slice inside the frame's slab (both neighbouring slabs for
/// interpolated frames), clipped to the frame.
std::vector<Box> visible_ground_truth(const SegmentLayout& layout, const std::vector<GroundTruthNodule>& gt,
                                      int frame_index);

/// Seeded rejection sampling of a frame span and sprite position with zero
/// ground-truth overlap and enough in-mask coverage on every spanned frame.
QcMarker place_marker(const VideoSegment& segment, const std::vector<GroundTruthNodule>& gt, const Sprite& sprite,
                      std::uint64_t seed, const MarkerConfig& config = {});

/// Alpha-blends the sprite into the spanned frames and records the marker.
VideoSegment composite_marker(VideoSegment segment, const QcMarker& marker, const Sprite& sprite);

bool hits_marker(const QcMarker& marker, const Annotation& annotation, double min_overlap = 0.5);

/// passed iff at least one annotation hits the marker.
QcStatus qc_status_for(const QcMarker& marker, const std::vector<Annotation>& annotations, double min_overlap = 0.5);

}  // namespace lungcrowd
