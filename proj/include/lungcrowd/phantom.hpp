#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lungcrowd/ground_truth.hpp"
#include "lungcrowd/segmentation.hpp"
#include "lungcrowd/volume.hpp"

namespace lungcrowd {

/// Synthetic thorax: air around an elliptic body cylinder, two ellipsoidal
/// lungs, optional parenchymal bridge between them, a small gas pocket and
/// spherical nodules with known extents.
struct PhantomConfig {
  Dims3 dims{96, 80, 48};
  Spacing3 spacing{1.5, 1.5, 2.5};
  int nodules = 6;
  bool bridge = false;
  bool gas_pocket = true;
  double noise_sigma_hu = 20.0;
  double min_diameter_mm = 3.0;
  double max_diameter_mm = 16.0;
  std::uint64_t seed = 1;
};

struct Phantom {
  std::string patient_id;
  CtVolume volume;
  LungMask left_truth;   // lung parenchyma including embedded nodules
  LungMask right_truth;
  std::vector<GroundTruthNodule> nodules;
};

Phantom make_phantom(const PhantomConfig& config, const std::string& patient_id);

}  // namespace lungcrowd
