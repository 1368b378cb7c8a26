#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>

namespace lungcrowd {

/// Axis-aligned pixel rectangle. Covers columns [x, x+w) and rows [y, y+h).
struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  std::int64_t area() const { return static_cast<std::int64_t>(std::max(w, 0)) * std::max(h, 0); }
  int right() const { return x + w; }
  int bottom() const { return y + h; }
  bool empty() const { return w <= 0 || h <= 0; }

  friend bool operator==(const Box&, const Box&) = default;
};

inline Box intersect(const Box& a, const Box& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.right(), b.right());
  const int y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return Box{x0, y0, 0, 0};
  return Box{x0, y0, x1 - x0, y1 - y0};
}

inline std::int64_t intersection_area(const Box& a, const Box& b) { return intersect(a, b).area(); }

/// Smallest box covering both; an empty operand is ignored.
inline Box bounding_union(const Box& a, const Box& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  const int x0 = std::min(a.x, b.x);
  const int y0 = std::min(a.y, b.y);
  return Box{x0, y0, std::max(a.right(), b.right()) - x0, std::max(a.bottom(), b.bottom()) - y0};
}

inline bool contains(const Box& outer, const Box& inner) {
  return inner.x >= outer.x && inner.y >= outer.y && inner.right() <= outer.right() &&
         inner.bottom() <= outer.bottom();
}

inline Box translated(const Box& b, int dx, int dy) { return Box{b.x + dx, b.y + dy, b.w, b.h}; }

/// Area of candidate ∩ reference divided by the area of the reference.
/// A zero-area reference yields 0.
inline double overlap_ratio(const Box& candidate, const Box& reference) {
  const auto ref_area = reference.area();
  if (ref_area == 0) return 0.0;
  return static_cast<double>(intersection_area(candidate, reference)) / static_cast<double>(ref_area);
}

inline double intersection_over_union(const Box& a, const Box& b) {
  const auto inter = intersection_area(a, b);
  const auto uni = a.area() + b.area() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Inclusive range of axial slice indices.
struct SliceRange {
  int z0 = 0;
  int z1 = 0;

  int length() const { return z1 - z0 + 1; }
  bool contains(int z) const { return z >= z0 && z <= z1; }
  bool intersects(const SliceRange& o) const { return z0 <= o.z1 && o.z0 <= z1; }

  friend bool operator==(const SliceRange&, const SliceRange&) = default;
};

struct Dims3 {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  std::size_t plane() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(nx) * (static_cast<std::size_t>(y) +
                                                                      static_cast<std::size_t>(ny) * z);
  }
  bool inside(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }

  friend bool operator==(const Dims3&, const Dims3&) = default;
};

/// Physical voxel size in millimetres.
struct Spacing3 {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

}  // namespace lungcrowd
