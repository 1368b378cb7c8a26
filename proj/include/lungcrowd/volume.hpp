#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lungcrowd/geometry.hpp"
#include "lungcrowd/image.hpp"

namespace lungcrowd {

using Hu = std::int16_t;

inline constexpr Hu kMinHu = -1024;
inline constexpr Hu kMaxHu = 3071;

/// Immutable CT volume of Hounsfield-unit samples, x-fastest then y then z.
class CtVolume {
 public:
  CtVolume() = default;

  /// Throws invalid_argument if dims/spacing are non-positive, the sample count
  /// mismatches, or any sample lies outside [kMinHu, kMaxHu].
  CtVolume(Dims3 dims, Spacing3 spacing, std::vector<Hu> voxels);

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  std::span<const Hu> voxels() const { return voxels_; }

  Hu at(int x, int y, int z) const { return voxels_[dims_.index(x, y, z)]; }

  friend bool operator==(const CtVolume&, const CtVolume&) = default;

 private:
  Dims3 dims_;
  Spacing3 spacing_;
  std::vector<Hu> voxels_;
};

/// Display window in HU. Width must be positive.
struct DisplayWindow {
  double level = -600.0;
  double width = 1500.0;

  void validate() const;

  friend bool operator==(const DisplayWindow&, const DisplayWindow&) = default;
};

/// round(255 * clamp((hu - (level - width/2)) / width, 0, 1)), half away from zero.
std::uint8_t window_to_gray(double hu, const DisplayWindow& window);

Image2D<Hu> axial_slice(const CtVolume& volume, int z);

/// CTVOL 1 container: text header, blank line, little-endian int16 payload.
/// Out-of-range samples are clamped with a warning.
CtVolume load_volume(const std::filesystem::path& path);
void save_volume(const CtVolume& volume, const std::filesystem::path& path);

/// MASK 1 variant of the container: same header layout, one 0/1 byte per voxel.
struct MaskFile {
  Dims3 dims;
  Spacing3 spacing;
  std::vector<std::uint8_t> bits;
};

MaskFile load_mask(const std::filesystem::path& path);
void save_mask(const MaskFile& mask, const std::filesystem::path& path);

}  // namespace lungcrowd
