#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lungcrowd/geometry.hpp"

namespace lungcrowd {

/// Diameter strata; each bin is (lower, upper] except the first (<= 4 mm).
enum class SizeBin { le4, gt4_le6, gt6_le8, gt8_le10, gt10 };

inline constexpr std::array<SizeBin, 5> kAllSizeBins = {SizeBin::le4, SizeBin::gt4_le6, SizeBin::gt6_le8,
                                                        SizeBin::gt8_le10, SizeBin::gt10};

SizeBin size_bin_for(double diameter_mm);
std::string_view to_string(SizeBin bin);
SizeBin size_bin_from_string(std::string_view text);
inline std::size_t bin_index(SizeBin bin) { return static_cast<std::size_t>(bin); }

/// small: <= 4 mm, medium: (4, 10], large: > 10.
enum class SizeClass { small, medium, large };
inline constexpr std::array<SizeClass, 3> kAllSizeClasses = {SizeClass::small, SizeClass::medium, SizeClass::large};
SizeClass size_class_for(SizeBin bin);
std::string_view to_string(SizeClass c);

enum class Location { peripheral, non_peripheral };
inline constexpr std::array<Location, 2> kAllLocations = {Location::peripheral, Location::non_peripheral};
std::string_view to_string(Location l);
Location location_from_string(std::string_view text);

enum class Attachment { pleural, vessel, hilar, central };
inline constexpr std::array<Attachment, 4> kAllAttachments = {Attachment::pleural, Attachment::vessel,
                                                              Attachment::hilar, Attachment::central};
std::string_view to_string(Attachment a);
Attachment attachment_from_string(std::string_view text);

/// One axial slice of an expert annotation, in volume voxel coordinates.
struct ExtentSlice {
  int z = 0;
  Box box;
  friend bool operator==(const ExtentSlice&, const ExtentSlice&) = default;
};

struct GroundTruthNodule {
  std::string nodule_id;
  std::string patient_id;
  double diameter_mm = 0.0;
  Location location = Location::non_peripheral;
  Attachment attachment = Attachment::central;
  std::vector<ExtentSlice> extent;

  SizeBin size_bin() const { return size_bin_for(diameter_mm); }
  SliceRange slices() const;
  std::optional<Box> box_on(int z) const;
  void validate() const;

  friend bool operator==(const GroundTruthNodule&, const GroundTruthNodule&) = default;
};

/// CSV with header nodule_id,patient_id,diameter_mm,location,attachment,z,x,y,w,h;
/// one row per extent slice.
std::vector<GroundTruthNodule> parse_ground_truth_csv(const std::string& text, const std::string& source = "<csv>");
std::vector<GroundTruthNodule> load_ground_truth_csv(const std::filesystem::path& path);
std::string format_ground_truth_csv(const std::vector<GroundTruthNodule>& nodules);
void save_ground_truth_csv(const std::vector<GroundTruthNodule>& nodules, const std::filesystem::path& path);

/// Throws if any extent box leaves the volume.
void validate_within(const GroundTruthNodule& nodule, const Dims3& dims);

struct DatasetStats {
  std::map<std::string, int> nodules_per_patient;
  int total = 0;
  double mean_per_patient = 0.0;
  double stddev_per_patient = 0.0;  // population
  std::array<int, 5> size_histogram{};
};

DatasetStats summarize_ground_truth(const std::vector<GroundTruthNodule>& nodules);

}  // namespace lungcrowd
