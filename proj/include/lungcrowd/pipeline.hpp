#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lungcrowd/crowd_sim.hpp"
#include "lungcrowd/evaluation.hpp"
#include "lungcrowd/http_service.hpp"
#include "lungcrowd/phantom.hpp"
#include "lungcrowd/segment.hpp"
#include "lungcrowd/segmentation.hpp"

namespace lungcrowd {

struct PipelineConfig {
  std::vector<std::filesystem::path> volumes;  // patient id = file stem
  std::filesystem::path ground_truth;
  RenderConfig render;
  SegmentationConfig segmentation;
  std::optional<std::filesystem::path> qc_sprite;
  int sprite_size = 32;
  int workers_per_video = 10;
  bool reissue_on_qc_fail = true;
  double overlap_threshold = 0.6;
  OverlapMode overlap_mode = OverlapMode::reference;
  int min_workers = 1;
  std::optional<std::filesystem::path> scenario;  // ideal crowd when unset
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency

  /// Throws when a referenced input file is missing or a value is out of range.
  void validate() const;
};

nlohmann::json pipeline_config_to_json(const PipelineConfig& config);
/// Relative paths resolve against `base_dir`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// SHA-256 of the canonical config JSON without the output root.
std::string config_hash(const PipelineConfig& config);

std::string patient_id_for(const std::filesystem::path& volume_path);

// Stage directories under config.out.
namespace stage_dir {
inline constexpr const char* segmentation = "segmentation";
inline constexpr const char* rendered = "rendered";
inline constexpr const char* segments = "segments";
inline constexpr const char* service = "service";
inline constexpr const char* simulation = "simulation";
inline constexpr const char* evaluation = "evaluation";
inline constexpr const char* report = "report";
}  // namespace stage_dir

void cmd_segment(const PipelineConfig& config);
void cmd_render(const PipelineConfig& config);
void cmd_inject(const PipelineConfig& config);
CrowdRunStats cmd_simulate(const PipelineConfig& config);
MatchResult cmd_evaluate(const PipelineConfig& config);
MetricsReport cmd_report(const PipelineConfig& config);
MetricsReport cmd_all(const PipelineConfig& config);

/// Opens (or creates) the service store under out/service and serves it
/// until the process is stopped.
void cmd_serve(const PipelineConfig& config, ServiceOptions options);

/// Loads every segment directory under out/segments.
SegmentCatalog load_catalog(const std::filesystem::path& segments_root, bool with_pixels);

std::vector<WorkerSubmission> load_submissions(const std::filesystem::path& path);
void save_submissions(const std::vector<WorkerSubmission>& submissions, const std::filesystem::path& path);

struct PhantomDatasetOptions {
  int count = 1;
  std::uint64_t seed = 1;
  PhantomConfig phantom;  // seed overridden per patient
  bool alternate_bridge = true;  // every other patient gets a junction bridge
};

/// Writes volumes/<pid>.ctvol, truth/<pid>_{left,right}.mask,
/// ground_truth.csv and pipeline.json under `dir`. Returns the config.
PipelineConfig write_phantom_dataset(const std::filesystem::path& dir, const PhantomDatasetOptions& options);

/// Rebuilds the recorded study, pushes it through a task store and writes the
/// evaluation outputs under `out`.
MetricsReport cmd_replay(const std::filesystem::path& recorded, const std::filesystem::path& out,
                         const MatchConfig& match_config = {});

}  // namespace lungcrowd
