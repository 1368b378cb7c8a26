#pragma once

#include <filesystem>
#include <string>

#include "lungcrowd/segment.hpp"

namespace lungcrowd {

/// Masked thin-slab MIP over slices [z_start, z_start + thickness - 1], cropped
/// to the quadrant bbox. Pixels with no mask voxel in the slab render black.
/// Throws if the slab leaves the quadrant's slice range.
Frame slab_mip(const CtVolume& volume, const Quadrant& quadrant, int z_start, const RenderConfig& config);

/// Same slab, as a 0/1 in-mask footprint.
std::vector<std::uint8_t> slab_footprint(const Quadrant& quadrant, const SliceRange& slab);

/// Per-pixel round(a*(1-t) + b*t), half away from zero.
Frame interpolate(const Frame& a, const Frame& b, double t);

/// Frame layout only: keyframes at z0, z0+stride, ... while the slab fits,
/// interp_frames blended frames between each pair.
SegmentLayout plan_segment(const Quadrant& quadrant, const RenderConfig& config, const std::string& patient_id);

VideoSegment render_segment(const CtVolume& volume, const Quadrant& quadrant, const RenderConfig& config,
                            const std::string& patient_id);

std::string make_segment_id(const std::string& patient_id, QuadrantId quadrant);

/// Keyframes map to their own slab. Interpolated frames map to the earlier
/// keyframe's slab below fraction 0.5 and to the later one from 0.5 up.
SliceRange frame_to_slab(const SegmentLayout& layout, int frame_index);
int frame_to_slab_index(const SegmentLayout& layout, int frame_index);

/// Keyframe index for slab k.
inline int keyframe_index(const SegmentLayout& layout, int slab) { return slab * (layout.config.interp_frames + 1); }

/// In-mask footprint for any frame; interpolated frames use the union of
/// both neighbouring keyframes.
std::vector<std::uint8_t> frame_footprint(const VideoSegment& segment, int frame_index);

/// Writes f%05d.png per frame, m%05d.png per keyframe footprint and segment.json.
std::filesystem::path export_frames(const VideoSegment& segment, const std::filesystem::path& dir);

/// Reads a segment directory. Pixels and footprints are loaded when `with_pixels`.
VideoSegment load_segment(const std::filesystem::path& dir, bool with_pixels = true);

}  // namespace lungcrowd
