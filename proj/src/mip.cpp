#include "lungcrowd/mip.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "lungcrowd/error.hpp"
#include "lungcrowd/manifest.hpp"
#include "lungcrowd/png_io.hpp"

namespace lungcrowd {

namespace {

Frame mip_over(const CtVolume& volume, const Quadrant& quadrant, const SliceRange& slab,
               const DisplayWindow& window) {
  const auto& box = quadrant.bbox2d;
  const auto& dims = volume.dims();
  Frame frame;
  frame.width = box.w;
  frame.height = box.h;
  frame.pixels.assign(static_cast<std::size_t>(box.w) * static_cast<std::size_t>(box.h), 0);
  for (int y = 0; y < box.h; ++y) {
    for (int x = 0; x < box.w; ++x) {
      const int vx = box.x + x;
      const int vy = box.y + y;
      bool any = false;
      Hu best = kMinHu;
      for (int z = slab.z0; z <= slab.z1; ++z) {
        const auto i = dims.index(vx, vy, z);
        if (!quadrant.mask.bits[i]) continue;
        best = any ? std::max(best, volume.voxels()[i]) : volume.voxels()[i];
        any = true;
      }
      if (any) frame.pixels[static_cast<std::size_t>(y) * box.w + x] = window_to_gray(best, window);
    }
  }
  return frame;
}

std::string numbered(const char* prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05d.png", prefix, n);
  return buf;
}

}  // namespace

void RenderConfig::validate() const {
  if (slab_thickness < 1) fail(ErrorKind::invalid_argument, "slab_thickness must be >= 1");
  if (slab_stride < 1) fail(ErrorKind::invalid_argument, "slab_stride must be >= 1");
  if (interp_frames < 0) fail(ErrorKind::invalid_argument, "interp_frames must be >= 0");
  if (!(fps > 0)) fail(ErrorKind::invalid_argument, "fps must be > 0");
  window.validate();
}

Frame slab_mip(const CtVolume& volume, const Quadrant& quadrant, int z_start, const RenderConfig& config) {
  config.validate();
  if (quadrant.empty) fail(ErrorKind::invalid_argument, "cannot render an empty quadrant");
  const SliceRange slab{z_start, z_start + config.slab_thickness - 1};
  if (slab.z0 < quadrant.slice_range.z0 || slab.z1 > quadrant.slice_range.z1)
    fail(ErrorKind::invalid_argument, "slab [" + std::to_string(slab.z0) + ", " + std::to_string(slab.z1) +
                                          "] outside quadrant slice range");
  return mip_over(volume, quadrant, slab, config.window);
}

std::vector<std::uint8_t> slab_footprint(const Quadrant& quadrant, const SliceRange& slab) {
  const auto& box = quadrant.bbox2d;
  const auto& dims = quadrant.mask.dims;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(box.w) * static_cast<std::size_t>(box.h), 0);
  for (int y = 0; y < box.h; ++y)
    for (int x = 0; x < box.w; ++x)
      for (int z = slab.z0; z <= slab.z1; ++z)
        if (quadrant.mask.bits[dims.index(box.x + x, box.y + y, z)]) {
          out[static_cast<std::size_t>(y) * box.w + x] = 1;
          break;
        }
  return out;
}

Frame interpolate(const Frame& a, const Frame& b, double t) {
  if (a.width != b.width || a.height != b.height || a.pixels.size() != b.pixels.size())
    fail(ErrorKind::invalid_argument, "interpolate: frame dimensions differ");
  if (t < 0.0 || t > 1.0) fail(ErrorKind::invalid_argument, "interpolate: fraction outside [0, 1]");
  Frame out = a;
  if (t == 0.0) return out;
  if (t == 1.0) {
    out.pixels = b.pixels;
    return out;
  }
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double v = a.pixels[i] * (1.0 - t) + b.pixels[i] * t;
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return out;
}

std::string make_segment_id(const std::string& patient_id, QuadrantId quadrant) {
  return patient_id + "_" + std::string(to_string(quadrant));
}

SegmentLayout plan_segment(const Quadrant& quadrant, const RenderConfig& config, const std::string& patient_id) {
  config.validate();
  if (quadrant.empty) fail(ErrorKind::invalid_argument, "cannot render an empty quadrant");
  SegmentLayout layout;
  layout.segment_id = make_segment_id(patient_id, quadrant.id);
  layout.patient_id = patient_id;
  layout.quadrant = quadrant.id;
  layout.bbox2d = quadrant.bbox2d;
  layout.slice_range = quadrant.slice_range;
  layout.config = config;

  const auto& range = quadrant.slice_range;
  if (range.length() < config.slab_thickness) {
    layout.thin = true;
    layout.slab_table.push_back(range);
  } else {
    for (int z = range.z0; z + config.slab_thickness - 1 <= range.z1; z += config.slab_stride)
      layout.slab_table.push_back({z, z + config.slab_thickness - 1});
  }
  const int keyframes = static_cast<int>(layout.slab_table.size());
  for (int k = 0; k < keyframes; ++k) {
    layout.frames.push_back(FrameInfo{FrameKind::keyframe, k, 0, 0.0});
    if (k + 1 == keyframes) break;
    for (int step = 1; step <= config.interp_frames; ++step) {
      const double fraction = static_cast<double>(step) / static_cast<double>(config.interp_frames + 1);
      layout.frames.push_back(FrameInfo{FrameKind::interpolated, k, step, fraction});
    }
  }
  return layout;
}

VideoSegment render_segment(const CtVolume& volume, const Quadrant& quadrant, const RenderConfig& config,
                            const std::string& patient_id) {
  VideoSegment seg;
  seg.layout = plan_segment(quadrant, config, patient_id);

  std::vector<Frame> keyframes;
  for (const auto& slab : seg.layout.slab_table) {
    keyframes.push_back(mip_over(volume, quadrant, slab, config.window));
    auto footprint = slab_footprint(quadrant, slab);
    seg.layout.mask_pixels.push_back(std::count(footprint.begin(), footprint.end(), std::uint8_t{1}));
    seg.footprints.push_back(std::move(footprint));
  }
  for (const auto& info : seg.layout.frames) {
    Frame frame = info.kind == FrameKind::keyframe
                      ? keyframes[static_cast<std::size_t>(info.slab_index)]
                      : interpolate(keyframes[static_cast<std::size_t>(info.slab_index)],
                                    keyframes[static_cast<std::size_t>(info.slab_index) + 1], info.fraction);
    frame.info = info;
    seg.frames.push_back(std::move(frame));
  }
  return seg;
}

int frame_to_slab_index(const SegmentLayout& layout, int frame_index) {
  if (frame_index < 0 || frame_index >= layout.frame_count())
    fail(ErrorKind::invalid_argument, "frame index " + std::to_string(frame_index) + " out of range [0, " +
                                          std::to_string(layout.frame_count()) + ")");
  const auto& info = layout.frames[static_cast<std::size_t>(frame_index)];
  if (info.kind == FrameKind::keyframe) return info.slab_index;
  // fraction = step / (interp + 1); compare in integers so 0.5 ties exactly go to the later slab
  return 2 * info.step < layout.config.interp_frames + 1 ? info.slab_index : info.slab_index + 1;
}

SliceRange frame_to_slab(const SegmentLayout& layout, int frame_index) {
  return layout.slab_table[static_cast<std::size_t>(frame_to_slab_index(layout, frame_index))];
}

std::vector<std::uint8_t> frame_footprint(const VideoSegment& segment, int frame_index) {
  const auto& info = segment.layout.frames.at(static_cast<std::size_t>(frame_index));
  const auto& first = segment.footprints.at(static_cast<std::size_t>(info.slab_index));
  if (info.kind == FrameKind::keyframe) return first;
  auto out = first;
  const auto& second = segment.footprints.at(static_cast<std::size_t>(info.slab_index) + 1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(out[i] | second[i]);
  return out;
}

std::filesystem::path export_frames(const VideoSegment& segment, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());

  for (std::size_t i = 0; i < segment.frames.size(); ++i) {
    const auto& f = segment.frames[i];
    Image2D<std::uint8_t> image;
    image.width = f.width;
    image.height = f.height;
    image.pixels = f.pixels;
    write_gray_png(dir / numbered("f", static_cast<int>(i)), image);
  }
  for (std::size_t k = 0; k < segment.footprints.size(); ++k) {
    Image2D<std::uint8_t> image(segment.layout.width(), segment.layout.height());
    for (std::size_t i = 0; i < image.pixels.size(); ++i) image.pixels[i] = segment.footprints[k][i] ? 255 : 0;
    write_gray_png(dir / numbered("m", static_cast<int>(k)), image);
  }
  const auto manifest_path = dir / "segment.json";
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + manifest_path.string());
  out << segment_manifest(segment.layout, segment.marker, segment.seed).dump(2) << '\n';
  if (!out) fail(ErrorKind::io, "write failed for " + manifest_path.string());
  return manifest_path;
}

VideoSegment load_segment(const std::filesystem::path& dir, bool with_pixels) {
  const auto manifest_path = dir / "segment.json";
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::io, "cannot open " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, manifest_path.string() + ": " + e.what());
  }
  VideoSegment seg;
  try {
    seg.layout = j.get<SegmentLayout>();
    if (!j.at("marker").is_null()) seg.marker = j.at("marker").get<QcMarker>();
    seg.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, manifest_path.string() + ": " + e.what());
  }
  if (!with_pixels) return seg;

  for (int i = 0; i < seg.layout.frame_count(); ++i) {
    auto image = read_gray_png(dir / numbered("f", i));
    if (image.width != seg.layout.width() || image.height != seg.layout.height())
      fail(ErrorKind::format, "frame " + std::to_string(i) + " size differs from manifest in " + dir.string());
    Frame f{image.width, image.height, std::move(image.pixels), seg.layout.frames[static_cast<std::size_t>(i)]};
    seg.frames.push_back(std::move(f));
  }
  for (std::size_t k = 0; k < seg.layout.slab_table.size(); ++k) {
    auto image = read_gray_png(dir / numbered("m", static_cast<int>(k)));
    for (auto& p : image.pixels) p = p ? 1 : 0;
    seg.footprints.push_back(std::move(image.pixels));
  }
  return seg;
}

}  // namespace lungcrowd
