#include "lungcrowd/qc_marker.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lungcrowd/error.hpp"
#include "lungcrowd/mip.hpp"

namespace lungcrowd {

namespace {

// Summed-area table over a 0/1 footprint, (w+1) x (h+1).
struct IntegralImage {
  int width = 0;
  std::vector<std::int64_t> sums;

  IntegralImage(const std::vector<std::uint8_t>& bits, int w, int h) : width(w + 1), sums(static_cast<std::size_t>((w + 1) * (h + 1)), 0) {
    for (int y = 0; y < h; ++y) {
      std::int64_t row = 0;
      for (int x = 0; x < w; ++x) {
        row += bits[static_cast<std::size_t>(y * w + x)];
        at(x + 1, y + 1) = at(x + 1, y) + row;
      }
    }
  }

  std::int64_t& at(int x, int y) { return sums[static_cast<std::size_t>(y * width + x)]; }
  std::int64_t get(int x, int y) const { return sums[static_cast<std::size_t>(y * width + x)]; }

  std::int64_t count(const Box& b) const {
    return get(b.right(), b.bottom()) - get(b.x, b.bottom()) - get(b.right(), b.y) + get(b.x, b.y);
  }
};

int span_length(const SegmentLayout& layout, const MarkerConfig& config) {
  const int wanted = std::max(1, static_cast<int>(std::lround(config.duration_s * layout.config.fps)));
  return std::min(wanted, layout.frame_count());
}

}  // namespace

Sprite default_sprite(int size) {
  Sprite sprite{"gorilla", Image2D<Rgba>(size, size, Rgba{0, 0, 0, 0})};
  // Silhouette drawn on a unit square: head, shoulders/body, arms, face patch.
  auto inside_ellipse = [](double x, double y, double cx, double cy, double rx, double ry) {
    const double dx = (x - cx) / rx;
    const double dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  };
  const Rgba fur{40, 36, 34, 255};
  const Rgba face{150, 130, 115, 255};
  const Rgba eye{250, 250, 250, 255};
  for (int py = 0; py < size; ++py) {
    for (int px = 0; px < size; ++px) {
      const double x = (px + 0.5) / size;
      const double y = (py + 0.5) / size;
      const bool head = inside_ellipse(x, y, 0.5, 0.24, 0.2, 0.19);
      const bool body = inside_ellipse(x, y, 0.5, 0.68, 0.34, 0.3);
      const bool arms = inside_ellipse(x, y, 0.16, 0.7, 0.12, 0.26) || inside_ellipse(x, y, 0.84, 0.7, 0.12, 0.26);
      if (!(head || body || arms)) continue;
      Rgba c = fur;
      if (inside_ellipse(x, y, 0.5, 0.3, 0.12, 0.09)) c = face;
      if (inside_ellipse(x, y, 0.42, 0.2, 0.035, 0.03) || inside_ellipse(x, y, 0.58, 0.2, 0.035, 0.03)) c = eye;
      sprite.pixels.at(px, py) = c;
    }
  }
  return sprite;
}

Sprite load_sprite(const std::filesystem::path& path, int size) {
  const auto source = read_rgba_png(path);
  if (source.width < 1 || source.height < 1) fail(ErrorKind::format, "empty sprite " + path.string());
  Sprite sprite{path.stem().string(), Image2D<Rgba>(size, size)};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      sprite.pixels.at(x, y) = source.at(x * source.width / size, y * source.height / size);
  return sprite;
}

std::vector<Box> visible_ground_truth(const SegmentLayout& layout, const std::vector<GroundTruthNodule>& gt,
                                      int frame_index) {
  const auto& info = layout.frames.at(static_cast<std::size_t>(frame_index));
  std::vector<SliceRange> slabs{layout.slab_table[static_cast<std::size_t>(info.slab_index)]};
  if (info.kind == FrameKind::interpolated) slabs.push_back(layout.slab_table[static_cast<std::size_t>(info.slab_index) + 1]);

  std::vector<Box> boxes;
  const Box bounds = layout.frame_bounds();
  for (const auto& n : gt) {
    if (n.patient_id != layout.patient_id) continue;
    for (const auto& e : n.extent) {
      const bool in_slab = std::any_of(slabs.begin(), slabs.end(), [&](const SliceRange& s) { return s.contains(e.z); });
      if (!in_slab) continue;
      const auto clipped = intersect(translated(e.box, -layout.bbox2d.x, -layout.bbox2d.y), bounds);
      if (!clipped.empty()) boxes.push_back(clipped);
    }
  }
  return boxes;
}

QcMarker place_marker(const VideoSegment& segment, const std::vector<GroundTruthNodule>& gt, const Sprite& sprite,
                      std::uint64_t seed, const MarkerConfig& config) {
  const auto& layout = segment.layout;
  const int sw = sprite.pixels.width;
  const int sh = sprite.pixels.height;
  if (sw > layout.width() || sh > layout.height())
    fail(ErrorKind::invalid_argument, "cannot place marker: sprite larger than frame in " + layout.segment_id);
  if (layout.frame_count() == 0) fail(ErrorKind::invalid_argument, "cannot place marker: segment has no frames");
  if (segment.footprints.size() != layout.slab_table.size())
    fail(ErrorKind::invalid_argument, "cannot place marker: segment footprints missing");

  const int span = span_length(layout, config);
  std::vector<std::vector<Box>> gt_boxes;
  std::vector<IntegralImage> coverage;
  for (int f = 0; f < layout.frame_count(); ++f) {
    gt_boxes.push_back(visible_ground_truth(layout, gt, f));
    coverage.emplace_back(frame_footprint(segment, f), layout.width(), layout.height());
  }
  const auto need = static_cast<std::int64_t>(std::ceil(config.min_mask_coverage * sw * sh));

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_start(0, layout.frame_count() - span);
  std::uniform_int_distribution<int> pick_x(0, layout.width() - sw);
  std::uniform_int_distribution<int> pick_y(0, layout.height() - sh);
  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    const int start = pick_start(rng);
    const Box box{pick_x(rng), pick_y(rng), sw, sh};
    bool ok = true;
    for (int f = start; f < start + span && ok; ++f) {
      if (coverage[static_cast<std::size_t>(f)].count(box) < need) ok = false;
      for (const auto& g : gt_boxes[static_cast<std::size_t>(f)])
        if (intersection_area(box, g) > 0) ok = false;
    }
    if (ok) return QcMarker{sprite.id, start, start + span - 1, box, seed};
  }
  fail(ErrorKind::algorithm, "cannot place marker in " + layout.segment_id + " after " +
                                 std::to_string(config.max_attempts) + " attempts");
}

VideoSegment composite_marker(VideoSegment segment, const QcMarker& marker, const Sprite& sprite) {
  const auto& layout = segment.layout;
  if (marker.first_frame < 0 || marker.last_frame >= static_cast<int>(segment.frames.size()) ||
      marker.first_frame > marker.last_frame)
    fail(ErrorKind::invalid_argument, "marker frame span out of bounds in " + layout.segment_id);
  if (!contains(layout.frame_bounds(), marker.box) || marker.box.w != sprite.pixels.width ||
      marker.box.h != sprite.pixels.height)
    fail(ErrorKind::invalid_argument, "marker box out of bounds in " + layout.segment_id);

  for (int f = marker.first_frame; f <= marker.last_frame; ++f) {
    auto& frame = segment.frames[static_cast<std::size_t>(f)];
    for (int y = 0; y < marker.box.h; ++y) {
      for (int x = 0; x < marker.box.w; ++x) {
        const Rgba s = sprite.pixels.at(x, y);
        if (s.a == 0) continue;
        auto& p = frame.pixels[static_cast<std::size_t>(marker.box.y + y) * frame.width + marker.box.x + x];
        const int gray = (299 * s.r + 587 * s.g + 114 * s.b + 500) / 1000;
        p = static_cast<std::uint8_t>((gray * s.a + p * (255 - s.a) + 127) / 255);
      }
    }
  }
  segment.marker = marker;
  return segment;
}

bool hits_marker(const QcMarker& marker, const Annotation& annotation, double min_overlap) {
  return marker.visible_on(annotation.frame_index) && overlap_ratio(annotation.box, marker.box) >= min_overlap;
}

QcStatus qc_status_for(const QcMarker& marker, const std::vector<Annotation>& annotations, double min_overlap) {
  for (const auto& a : annotations)
    if (hits_marker(marker, a, min_overlap)) return QcStatus::passed;
  return QcStatus::failed;
}

}  // namespace lungcrowd
