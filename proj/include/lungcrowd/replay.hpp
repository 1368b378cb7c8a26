#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lungcrowd/evaluation.hpp"
#include "lungcrowd/ground_truth.hpp"
#include "lungcrowd/submission.hpp"

namespace lungcrowd {

class TaskStore;

/// A synthetic study rebuilt from recorded aggregate outcomes: geometry-only
/// segments, ground truth and the submissions that produce those outcomes.
struct ReplayFixture {
  SegmentCatalog segments;
  std::vector<GroundTruthNodule> gt;
  /// In submission order. worker_id holds the fixture's worker index as
  /// text, task_id is empty; replay_into maps both onto store ids.
  std::vector<WorkerSubmission> submissions;
  int workers = 0;
  int workers_per_video = 10;
};

nlohmann::json load_recorded_outcomes(const std::filesystem::path& path);

/// Deterministic; throws when the recorded counts are mutually inconsistent.
ReplayFixture build_replay_fixture(const nlohmann::json& recorded);

/// Creates one task per segment, registers the workers and submits every
/// recorded submission. Returns the stored submissions.
std::vector<WorkerSubmission> replay_into(TaskStore& store, const ReplayFixture& fixture);

}  // namespace lungcrowd
