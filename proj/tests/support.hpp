#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <unistd.h>
#include <string>
#include <vector>

#include "lungcrowd/error.hpp"
#include "lungcrowd/geometry.hpp"
#include "lungcrowd/ground_truth.hpp"
#include "lungcrowd/qc_marker.hpp"
#include "lungcrowd/mip.hpp"
#include "lungcrowd/segmentation.hpp"
#include "lungcrowd/volume.hpp"

namespace lungcrowd::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lungcrowd-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename F>
ErrorKind error_kind_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::usage;  // sentinel: nothing thrown
}

inline CtVolume random_volume(std::mt19937_64& rng, Dims3 dims) {
  std::uniform_int_distribution<int> hu(kMinHu, kMaxHu);
  std::vector<Hu> v(dims.count());
  for (auto& x : v) x = static_cast<Hu>(hu(rng));
  return CtVolume(dims, Spacing3{1.0, 1.0, 1.0}, std::move(v));
}

/// Quadrant built straight from a mask: bbox and slice range are the tight
/// bounds of the set voxels.
inline Quadrant quadrant_from_mask(const LungMask& mask, QuadrantId id = QuadrantId::left_upper) {
  Quadrant q;
  q.id = id;
  q.mask = mask;
  const auto& d = mask.dims;
  int x0 = d.nx, y0 = d.ny, z0 = d.nz, x1 = -1, y1 = -1, z1 = -1;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (mask.at(x, y, z)) {
          x0 = std::min(x0, x), x1 = std::max(x1, x);
          y0 = std::min(y0, y), y1 = std::max(y1, y);
          z0 = std::min(z0, z), z1 = std::max(z1, z);
        }
  q.empty = x1 < 0;
  if (!q.empty) {
    q.bbox2d = Box{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    q.slice_range = SliceRange{z0, z1};
  }
  return q;
}

/// A full-block quadrant of the given size, no mask needed for layout work.
inline Quadrant block_quadrant(int width, int height, SliceRange slices, int x0 = 0, int y0 = 0) {
  Quadrant q;
  q.empty = false;
  q.bbox2d = Box{x0, y0, width, height};
  q.slice_range = slices;
  return q;
}

/// Keyframe pixels straight from the definition: brightest windowed in-mask
/// voxel of the slab, black where the slab has no mask voxel.
inline std::vector<std::uint8_t> brute_slab_max(const CtVolume& v, const Quadrant& q, const SliceRange& slab,
                                                const DisplayWindow& w) {
  const auto& b = q.bbox2d;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(b.w) * b.h, 0);
  for (int y = 0; y < b.h; ++y)
    for (int x = 0; x < b.w; ++x) {
      int best = -1;
      for (int z = slab.z0; z <= slab.z1; ++z)
        if (q.mask.at(b.x + x, b.y + y, z)) best = std::max<int>(best, window_to_gray(v.at(b.x + x, b.y + y, z), w));
      out[static_cast<std::size_t>(y) * b.w + x] = static_cast<std::uint8_t>(std::max(best, 0));
    }
  return out;
}

/// Random blob mask: a few random boxes unioned together.
inline LungMask random_mask(std::mt19937_64& rng, Dims3 dims) {
  auto m = LungMask::zeros(dims, {1, 1, 1});
  std::uniform_int_distribution<int> n(1, 4);
  const int boxes = n(rng);
  for (int i = 0; i < boxes; ++i) {
    auto span = [&](int len) {
      std::uniform_int_distribution<int> a(0, len - 1);
      int p = a(rng), q = a(rng);
      if (p > q) std::swap(p, q);
      return std::pair{p, q};
    };
    const auto [x0, x1] = span(dims.nx);
    const auto [y0, y1] = span(dims.ny);
    const auto [z0, z1] = span(dims.nz);
    std::bernoulli_distribution keep(0.8);
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
          if (keep(rng)) m.bits[dims.index(x, y, z)] = 1;
  }
  return m;
}

/// Geometry-only segment (no pixels) over a block quadrant. Footprints are a
/// disc that shrinks with depth so coverage matters near the rim.
inline VideoSegment geometry_segment(int size, SliceRange slices, const std::string& patient, Box origin_shift = {},
                                     RenderConfig cfg = {}) {
  auto q = block_quadrant(size, size, slices, origin_shift.x, origin_shift.y);
  VideoSegment seg;
  seg.layout = plan_segment(q, cfg, patient);
  seg.layout.segment_id = patient + "_left_upper";
  const double c = (size - 1) / 2.0;
  for (std::size_t k = 0; k < seg.layout.slab_table.size(); ++k) {
    const double r = size * (0.5 - 0.1 * static_cast<double>(k) / seg.layout.slab_table.size());
    std::vector<std::uint8_t> fp(static_cast<std::size_t>(size) * size, 0);
    std::int64_t n = 0;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if ((x - c) * (x - c) + (y - c) * (y - c) <= r * r) fp[static_cast<std::size_t>(y) * size + x] = 1, ++n;
    seg.footprints.push_back(std::move(fp));
    seg.layout.mask_pixels.push_back(n);
  }
  return seg;
}

/// Many nodules crowding the frame, at random depths.
inline std::vector<GroundTruthNodule> dense_ground_truth(const SegmentLayout& layout, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GroundTruthNodule> gt;
  std::uniform_int_distribution<int> size(4, 14);
  for (int i = 0; i < count; ++i) {
    GroundTruthNodule n;
    n.nodule_id = layout.patient_id + "-N" + std::to_string(i);
    n.patient_id = layout.patient_id;
    n.diameter_mm = size(rng);
    const int w = static_cast<int>(n.diameter_mm);
    std::uniform_int_distribution<int> px(0, layout.width() - w), py(0, layout.height() - w);
    std::uniform_int_distribution<int> pz(layout.slice_range.z0, layout.slice_range.z1 - 3);
    const int x = px(rng) + layout.bbox2d.x, y = py(rng) + layout.bbox2d.y, z = pz(rng);
    for (int dz = 0; dz < 3; ++dz) n.extent.push_back(ExtentSlice{z + dz, Box{x, y, w, w}});
    gt.push_back(std::move(n));
  }
  return gt;
}

/// Violations of the marker placement rules, counted pixel by pixel without
/// the library's helpers: GT pixels under the marker and frames where the
/// sprite box has too little in-mask area.
struct MarkerCheck {
  std::int64_t gt_pixels_under_marker = 0;
  int frames_short_of_coverage = 0;
};

inline MarkerCheck check_marker(const VideoSegment& seg, const std::vector<GroundTruthNodule>& gt, const QcMarker& m,
                                double min_coverage = 0.25) {
  MarkerCheck out;
  const auto& L = seg.layout;
  const int interp = L.config.interp_frames;
  for (int f = m.first_frame; f <= m.last_frame; ++f) {
    const int k0 = f / (interp + 1);
    const bool key = f % (interp + 1) == 0;
    std::vector<int> slabs{k0};
    if (!key) slabs.push_back(k0 + 1);
    std::int64_t covered = 0;
    for (int y = m.box.y; y < m.box.bottom(); ++y)
      for (int x = m.box.x; x < m.box.right(); ++x) {
        bool in_mask = false;
        for (int k : slabs) in_mask |= seg.footprints[static_cast<std::size_t>(k)][static_cast<std::size_t>(y) * L.width() + x] != 0;
        covered += in_mask;
        for (const auto& n : gt) {
          if (n.patient_id != L.patient_id) continue;
          for (const auto& e : n.extent) {
            bool in_slab = false;
            for (int k : slabs) in_slab |= L.slab_table[static_cast<std::size_t>(k)].contains(e.z);
            const int vx = x + L.bbox2d.x, vy = y + L.bbox2d.y;
            if (in_slab && vx >= e.box.x && vx < e.box.right() && vy >= e.box.y && vy < e.box.bottom())
              ++out.gt_pixels_under_marker;
          }
        }
      }
    if (static_cast<double>(covered) < min_coverage * static_cast<double>(m.box.area())) ++out.frames_short_of_coverage;
  }
  return out;
}

}  // namespace lungcrowd::testing
