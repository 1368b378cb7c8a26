#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lungcrowd/ground_truth.hpp"
#include "lungcrowd/segment.hpp"
#include "lungcrowd/submission.hpp"

namespace lungcrowd {

/// reference: |a ∩ ref| / |ref|. iou: intersection over union.
enum class OverlapMode { reference, iou };
std::string_view to_string(OverlapMode mode);
OverlapMode overlap_mode_from_string(std::string_view text);

double box_overlap(const Box& annotation, const Box& reference, OverlapMode mode);

struct MappedAnnotation {
  SliceRange slices;
  Box box;  // volume voxel coordinates
  friend bool operator==(const MappedAnnotation&, const MappedAnnotation&) = default;
};

/// Frame-space annotation to volume space: slab of the frame, box shifted by
/// the quadrant origin. Throws on a frame outside the segment.
MappedAnnotation map_annotation(const SegmentLayout& layout, const Annotation& annotation);

struct MatchConfig {
  double threshold = 0.6;  // strict: overlap must exceed it
  int min_workers = 1;
  OverlapMode mode = OverlapMode::reference;
  double qc_hit_overlap = 0.5;
  double fp_cluster_overlap = 0.3;
};

enum class AnnotationClass { true_positive, false_positive, qc_hit };
std::string_view to_string(AnnotationClass c);

struct AnnotationOutcome {
  std::string submission_id;
  std::string worker_id;
  std::string segment_id;
  int annotation_index = 0;
  AnnotationClass classification = AnnotationClass::false_positive;
  std::string nodule_id;  // set for true positives
  double overlap = 0.0;
};

struct NoduleOutcome {
  std::string nodule_id;
  bool detected = false;
  int worker_count = 0;
  std::vector<std::string> submission_ids;
};

struct MatchResult {
  std::vector<NoduleOutcome> nodules;          // ground-truth order
  std::vector<AnnotationOutcome> annotations;  // accepted submissions only
  std::vector<std::vector<std::size_t>> fp_clusters;  // indices into annotations
  int accepted_submissions = 0;
  int failed_submissions = 0;
  int videos = 0;
};

/// Segment geometry and marker, keyed by segment id.
using SegmentCatalog = std::map<std::string, VideoSegment>;

/// Matches qc-passed submissions against ground truth. Failed submissions are
/// counted but otherwise ignored.
MatchResult match(const std::vector<WorkerSubmission>& submissions, const SegmentCatalog& segments,
                  const std::vector<GroundTruthNodule>& gt, const MatchConfig& config = {});

struct Cell {
  int detected = 0;
  int total = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct WorkerCountStats {
  int nodules = 0;  // detected nodules in the class
  double mean = 0.0;
  double median = 0.0;
  double stddev = 0.0;  // population
  friend bool operator==(const WorkerCountStats&, const WorkerCountStats&) = default;
};

struct MetricsReport {
  std::array<Cell, 5> by_size{};
  Cell overall;
  std::array<std::array<Cell, 5>, 2> by_location{};
  std::array<std::array<Cell, 5>, 4> by_attachment{};
  std::array<WorkerCountStats, 3> worker_counts{};
  int videos = 0;
  int patients = 0;
  int accepted_submissions = 0;
  int failed_submissions = 0;
  int annotations = 0;  // accepted, excluding qc hits
  int annotations_with_qc = 0;
  int qc_hits = 0;
  int true_positive_annotations = 0;
  int false_positive_annotations = 0;
  int false_positive_clusters = 0;
  nlohmann::json provenance = nlohmann::json::object();
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport compute_metrics(const MatchResult& result, const std::vector<GroundTruthNodule>& gt);

/// detected/total as a one-decimal percentage ("90.4%"), "n/a" when total is 0.
/// Computed in integers, halves rounded up.
std::string format_percent(int detected, int total);

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

enum class ReportFormat { json, text, csv };
ReportFormat report_format_from_string(std::string_view text);
std::string render_report(const MetricsReport& report, ReportFormat format);

nlohmann::json match_to_json(const MatchResult& result);

}  // namespace lungcrowd
