#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lungcrowd/geometry.hpp"

namespace lungcrowd {

enum class AnnotationLabel { nodule, qc };
std::string_view to_string(AnnotationLabel label);
AnnotationLabel annotation_label_from_string(std::string_view text);

/// A box drawn on a paused frame, in frame pixel coordinates.
struct Annotation {
  int frame_index = 0;
  Box box;
  AnnotationLabel label = AnnotationLabel::nodule;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

enum class QcStatus { pending, passed, failed };
std::string_view to_string(QcStatus status);
QcStatus qc_status_from_string(std::string_view text);

struct WorkerSubmission {
  std::string submission_id;
  std::string task_id;
  std::string worker_id;
  std::string segment_id;  // resolved from the task by the store
  std::vector<Annotation> annotations;
  std::int64_t wall_time_ms = 0;
  QcStatus qc_status = QcStatus::pending;
  bool payable = false;

  friend bool operator==(const WorkerSubmission&, const WorkerSubmission&) = default;
};

void to_json(nlohmann::json& j, const Annotation& a);
void from_json(const nlohmann::json& j, Annotation& a);
void to_json(nlohmann::json& j, const WorkerSubmission& s);
void from_json(const nlohmann::json& j, WorkerSubmission& s);

}  // namespace lungcrowd
