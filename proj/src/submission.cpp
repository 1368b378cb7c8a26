#include "lungcrowd/submission.hpp"

#include "lungcrowd/error.hpp"
#include "lungcrowd/manifest.hpp"

namespace lungcrowd {

using nlohmann::json;

std::string_view to_string(AnnotationLabel label) { return label == AnnotationLabel::qc ? "qc" : "nodule"; }

AnnotationLabel annotation_label_from_string(std::string_view text) {
  if (text == "nodule") return AnnotationLabel::nodule;
  if (text == "qc") return AnnotationLabel::qc;
  fail(ErrorKind::format, "unknown annotation label '" + std::string(text) + "'");
}

std::string_view to_string(QcStatus status) {
  switch (status) {
    case QcStatus::pending: return "pending";
    case QcStatus::passed: return "passed";
    case QcStatus::failed: return "failed";
  }
  return "?";
}

QcStatus qc_status_from_string(std::string_view text) {
  for (auto s : {QcStatus::pending, QcStatus::passed, QcStatus::failed})
    if (to_string(s) == text) return s;
  fail(ErrorKind::format, "unknown qc status '" + std::string(text) + "'");
}

void to_json(json& j, const Annotation& a) {
  j = json{{"frame_index", a.frame_index}, {"box", a.box}, {"label", std::string(to_string(a.label))}};
}

void from_json(const json& j, Annotation& a) {
  a.frame_index = j.at("frame_index").get<int>();
  a.box = j.at("box").get<Box>();
  a.label = annotation_label_from_string(j.value("label", std::string("nodule")));
}

void to_json(json& j, const WorkerSubmission& s) {
  j = json{{"submission_id", s.submission_id},
           {"task_id", s.task_id},
           {"worker_id", s.worker_id},
           {"segment_id", s.segment_id},
           {"annotations", s.annotations},
           {"wall_time_ms", s.wall_time_ms},
           {"qc_status", std::string(to_string(s.qc_status))},
           {"payable", s.payable}};
}

void from_json(const json& j, WorkerSubmission& s) {
  s.submission_id = j.value("submission_id", std::string{});
  s.task_id = j.at("task_id").get<std::string>();
  s.worker_id = j.at("worker_id").get<std::string>();
  s.segment_id = j.value("segment_id", std::string{});
  s.annotations = j.value("annotations", std::vector<Annotation>{});
  s.wall_time_ms = j.value("wall_time_ms", std::int64_t{0});
  s.qc_status = qc_status_from_string(j.value("qc_status", std::string("pending")));
  s.payable = j.value("payable", false);
}

}  // namespace lungcrowd
