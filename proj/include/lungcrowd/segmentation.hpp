#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "lungcrowd/geometry.hpp"
#include "lungcrowd/volume.hpp"

namespace lungcrowd {

enum class LungLabel { combined, left, right };

/// Binary voxel mask sharing the geometry of its source volume.
struct LungMask {
  Dims3 dims;
  Spacing3 spacing;
  LungLabel label = LungLabel::combined;
  std::vector<std::uint8_t> bits;

  static LungMask zeros(const Dims3& dims, const Spacing3& spacing, LungLabel label = LungLabel::combined) {
    return LungMask{dims, spacing, label, std::vector<std::uint8_t>(dims.count(), 0)};
  }

  bool at(int x, int y, int z) const { return bits[dims.index(x, y, z)] != 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

/// Image-space naming: LEFT is the lung at smaller x. UPPER is the half at
/// smaller z (superior/inferior split) or smaller y (anterior/posterior split).
enum class QuadrantId { left_upper, left_lower, right_upper, right_lower };

inline constexpr std::array<QuadrantId, 4> kAllQuadrants = {QuadrantId::left_upper, QuadrantId::left_lower,
                                                            QuadrantId::right_upper, QuadrantId::right_lower};

std::string_view to_string(QuadrantId id);
QuadrantId quadrant_from_string(std::string_view text);

struct Quadrant {
  QuadrantId id = QuadrantId::left_upper;
  LungMask mask;
  SliceRange slice_range;
  Box bbox2d;
  bool empty = true;
};

enum class SplitAxis { superior_inferior, anterior_posterior };

struct SegmentationConfig {
  double initial_threshold = -500.0;
  double convergence_hu = 0.5;
  int max_iterations = 64;
  double component_fraction = 0.01;
  double closing_radius_mm = 8.0;
  int bbox_padding = 8;
  SplitAxis split_axis = SplitAxis::superior_inferior;
  std::optional<double> threshold_override;
};

/// Iterative two-class threshold: t <- (mean(v <= t) + mean(v > t)) / 2.
/// Depends only on the histogram. Throws algorithm error on a single-valued volume.
double optimal_threshold(const CtVolume& volume, const SegmentationConfig& config = {});

/// Low-density voxels minus boundary-touching background air, keeping
/// components of at least `component_fraction` of all voxels, with per-slice
/// hole filling. Throws "no lung found" if nothing survives.
LungMask extract_lungs(const CtVolume& volume, double threshold, const SegmentationConfig& config = {});

/// Returns (left, right). Disjoint components are assigned by centroid; a
/// single fused component is cut at the thinnest sagittal plane in the
/// central third of its x-extent.
std::pair<LungMask, LungMask> separate_lungs(const LungMask& combined);

/// Morphological closing with a ball of the given physical radius.
LungMask smooth_boundaries(const LungMask& mask, double radius_mm);

std::array<Quadrant, 4> make_quadrants(const LungMask& left, const LungMask& right,
                                       const SegmentationConfig& config = {});

struct SegmentationResult {
  double threshold = 0.0;
  LungMask combined;  // union of the smoothed left and right masks
  LungMask left;
  LungMask right;
  std::array<Quadrant, 4> quadrants;
};

SegmentationResult segment_lungs(const CtVolume& volume, const SegmentationConfig& config = {});

double dice_coefficient(const LungMask& a, const LungMask& b);

/// 26-connected component labelling. Labels start at 1; 0 is background.
struct ComponentLabels {
  std::vector<std::int32_t> labels;
  std::vector<std::size_t> sizes;  // sizes[label - 1]
};

ComponentLabels label_components_26(const std::vector<std::uint8_t>& bits, const Dims3& dims);

}  // namespace lungcrowd
