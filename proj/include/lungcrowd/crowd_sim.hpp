#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lungcrowd/evaluation.hpp"
#include "lungcrowd/ground_truth.hpp"
#include "lungcrowd/segment.hpp"
#include "lungcrowd/submission.hpp"

namespace lungcrowd {

class TaskStore;

enum class WorkerKind { ideal, spammer, calibrated };
std::string_view to_string(WorkerKind kind);
WorkerKind worker_kind_from_string(std::string_view text);

struct WorkerProfile {
  WorkerKind kind = WorkerKind::ideal;
  std::array<double, 5> p_detect{1.0, 1.0, 1.0, 1.0, 1.0};  // by size bin, calibrated only
  double fp_rate = 0.06;   // expected extra boxes per video
  double jitter_px = 2.0;  // sigma of box placement noise, capped at 10% of the box side
  std::uint64_t seed = 0;
  std::optional<int> max_tasks;  // unlimited when empty

  void validate() const;
};

/// Detection probabilities by size bin taken from the recorded crowd outcome.
inline constexpr std::array<double, 5> kRecordedDetectRates{0.857, 0.933, 0.941, 1.0, 0.958};

struct ProjectedBox {
  int frame_index = 0;  // always a keyframe
  Box box;              // frame coordinates, clipped to the frame
  bool clipped = false;
  friend bool operator==(const ProjectedBox&, const ProjectedBox&) = default;
};

/// Forward projection of a ground-truth nodule into a segment: one entry per
/// keyframe whose slab holds extent slices, the union of those slices' boxes
/// shifted into frame coordinates. Throws when the nodule misses the quadrant.
std::vector<ProjectedBox> project_nodule(const SegmentLayout& layout, const GroundTruthNodule& nodule);

/// Ground-truth nodules of the segment's patient that project into it.
std::vector<const GroundTruthNodule*> nodules_in_segment(const SegmentLayout& layout,
                                                         const std::vector<GroundTruthNodule>& gt);

/// Deterministic in (profile, segment id, gt). The segment must carry a marker.
WorkerSubmission simulate_worker(const WorkerProfile& profile, const VideoSegment& segment,
                                 const std::vector<GroundTruthNodule>& gt);

std::uint64_t splitmix64(std::uint64_t x);

/// Independent stream seed for a named sub-task.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

struct ProfileGroup {
  std::string name;
  WorkerProfile profile;
  int count = 1;
};

struct Scenario {
  std::string name;
  std::vector<ProfileGroup> groups;
};

Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::filesystem::path& path);
nlohmann::json scenario_to_json(const Scenario& s);

struct CrowdRunStats {
  int workers = 0;
  int submissions = 0;
  int passed = 0;
  int failed = 0;
};

/// Registers the scenario's workers and lets them draw tasks round-robin
/// until nobody can get one. Worker seeds derive from `seed`.
CrowdRunStats run_crowd(TaskStore& store, const Scenario& scenario, const SegmentCatalog& segments,
                        const std::vector<GroundTruthNodule>& gt, std::uint64_t seed);

}  // namespace lungcrowd
