#include "lungcrowd/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "lungcrowd/error.hpp"
#include "lungcrowd/manifest.hpp"
#include "lungcrowd/mip.hpp"
#include "lungcrowd/qc_marker.hpp"

namespace lungcrowd {

using nlohmann::json;

std::string_view to_string(OverlapMode mode) { return mode == OverlapMode::iou ? "iou" : "reference"; }

OverlapMode overlap_mode_from_string(std::string_view text) {
  if (text == "reference") return OverlapMode::reference;
  if (text == "iou") return OverlapMode::iou;
  fail(ErrorKind::invalid_argument, "unknown overlap mode '" + std::string(text) + "' (expected reference or iou)");
}

double box_overlap(const Box& annotation, const Box& reference, OverlapMode mode) {
  return mode == OverlapMode::iou ? intersection_over_union(annotation, reference)
                                  : overlap_ratio(annotation, reference);
}

MappedAnnotation map_annotation(const SegmentLayout& layout, const Annotation& annotation) {
  if (annotation.frame_index < 0 || annotation.frame_index >= layout.frame_count())
    fail(ErrorKind::invalid_argument, "annotation frame " + std::to_string(annotation.frame_index) +
                                          " outside segment " + layout.segment_id);
  return MappedAnnotation{frame_to_slab(layout, annotation.frame_index),
                          translated(annotation.box, layout.bbox2d.x, layout.bbox2d.y)};
}

std::string_view to_string(AnnotationClass c) {
  switch (c) {
    case AnnotationClass::true_positive: return "true_positive";
    case AnnotationClass::false_positive: return "false_positive";
    case AnnotationClass::qc_hit: return "qc_hit";
  }
  return "?";
}

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Best overlap of a mapped box with a nodule over the slices both share.
double nodule_overlap(const MappedAnnotation& m, const GroundTruthNodule& n, OverlapMode mode) {
  double best = 0.0;
  for (const auto& e : n.extent)
    if (m.slices.contains(e.z)) best = std::max(best, box_overlap(m.box, e.box, mode));
  return best;
}

}  // namespace

MatchResult match(const std::vector<WorkerSubmission>& submissions, const SegmentCatalog& segments,
                  const std::vector<GroundTruthNodule>& gt, const MatchConfig& config) {
  if (config.min_workers < 1) fail(ErrorKind::invalid_argument, "min_workers must be >= 1");

  std::set<std::string> patients;
  for (const auto& [id, seg] : segments) patients.insert(seg.layout.patient_id);
  std::map<std::string, std::vector<std::size_t>> gt_by_patient;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!patients.count(gt[i].patient_id))
      fail(ErrorKind::invalid_argument, "ground truth nodule " + gt[i].nodule_id + " references unknown patient " +
                                            gt[i].patient_id);
    gt_by_patient[gt[i].patient_id].push_back(i);
  }

  MatchResult result;
  result.videos = static_cast<int>(segments.size());
  std::vector<std::set<std::string>> crediting_workers(gt.size());
  std::vector<std::set<std::string>> crediting_submissions(gt.size());
  std::vector<MappedAnnotation> mapped;

  for (const auto& s : submissions) {
    auto sit = segments.find(s.segment_id);
    if (sit == segments.end())
      fail(ErrorKind::invalid_argument, "submission " + s.submission_id + " references unknown segment " +
                                            s.segment_id);
    const auto& seg = sit->second;
    QcStatus status = s.qc_status;
    if (status == QcStatus::pending)
      status = seg.marker ? qc_status_for(*seg.marker, s.annotations, config.qc_hit_overlap) : QcStatus::failed;
    if (status != QcStatus::passed) {
      ++result.failed_submissions;
      continue;
    }
    ++result.accepted_submissions;

    const auto gt_it = gt_by_patient.find(seg.layout.patient_id);
    for (std::size_t k = 0; k < s.annotations.size(); ++k) {
      const auto& a = s.annotations[k];
      AnnotationOutcome out{s.submission_id, s.worker_id, s.segment_id, static_cast<int>(k),
                            AnnotationClass::false_positive, {}, 0.0};
      const auto m = map_annotation(seg.layout, a);
      if (seg.marker && hits_marker(*seg.marker, a, config.qc_hit_overlap)) {
        out.classification = AnnotationClass::qc_hit;
      } else if (gt_it != gt_by_patient.end()) {
        std::optional<std::size_t> best;
        double best_overlap = 0.0;
        for (auto idx : gt_it->second) {
          const double ov = nodule_overlap(m, gt[idx], config.mode);
          if (!(ov > config.threshold)) continue;
          if (!best || ov > best_overlap || (ov == best_overlap && gt[idx].nodule_id < gt[*best].nodule_id)) {
            best = idx;
            best_overlap = ov;
          }
        }
        if (best) {
          out.classification = AnnotationClass::true_positive;
          out.nodule_id = gt[*best].nodule_id;
          out.overlap = best_overlap;
          crediting_workers[*best].insert(s.worker_id);
          crediting_submissions[*best].insert(s.submission_id);
        }
      }
      result.annotations.push_back(std::move(out));
      mapped.push_back(m);
    }
  }

  for (std::size_t i = 0; i < gt.size(); ++i) {
    NoduleOutcome n;
    n.nodule_id = gt[i].nodule_id;
    n.worker_count = static_cast<int>(crediting_workers[i].size());
    n.detected = n.worker_count >= config.min_workers;
    n.submission_ids.assign(crediting_submissions[i].begin(), crediting_submissions[i].end());
    result.nodules.push_back(std::move(n));
  }

  // False-positive regions: transitive pairwise overlap within a segment on
  // intersecting slabs.
  std::vector<std::size_t> fps;
  for (std::size_t i = 0; i < result.annotations.size(); ++i)
    if (result.annotations[i].classification == AnnotationClass::false_positive) fps.push_back(i);
  DisjointSets sets(fps.size());
  for (std::size_t a = 0; a < fps.size(); ++a) {
    for (std::size_t b = a + 1; b < fps.size(); ++b) {
      const auto& oa = result.annotations[fps[a]];
      const auto& ob = result.annotations[fps[b]];
      if (oa.segment_id != ob.segment_id) continue;
      const auto& ma = mapped[fps[a]];
      const auto& mb = mapped[fps[b]];
      if (!ma.slices.intersects(mb.slices)) continue;
      if (std::max(overlap_ratio(ma.box, mb.box), overlap_ratio(mb.box, ma.box)) > config.fp_cluster_overlap)
        sets.unite(a, b);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> clusters;
  for (std::size_t a = 0; a < fps.size(); ++a) clusters[sets.find(a)].push_back(fps[a]);
  for (auto& [root, members] : clusters) result.fp_clusters.push_back(std::move(members));
  return result;
}

MetricsReport compute_metrics(const MatchResult& result, const std::vector<GroundTruthNodule>& gt) {
  if (result.nodules.size() != gt.size())
    fail(ErrorKind::invalid_argument, "match result does not cover the ground truth");
  MetricsReport r;
  std::set<std::string> patients;
  std::array<std::vector<int>, 3> counts;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto& n = gt[i];
    const auto& outcome = result.nodules[i];
    if (outcome.nodule_id != n.nodule_id) fail(ErrorKind::invalid_argument, "match result out of order");
    patients.insert(n.patient_id);
    const auto b = bin_index(n.size_bin());
    const int hit = outcome.detected ? 1 : 0;
    for (Cell* c : {&r.by_size[b], &r.overall, &r.by_location[static_cast<std::size_t>(n.location)][b],
                    &r.by_attachment[static_cast<std::size_t>(n.attachment)][b]}) {
      ++c->total;
      c->detected += hit;
    }
    if (outcome.detected) counts[static_cast<std::size_t>(size_class_for(n.size_bin()))].push_back(outcome.worker_count);
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    auto& v = counts[c];
    auto& s = r.worker_counts[c];
    s.nodules = static_cast<int>(v.size());
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    s.median = v.size() % 2 ? v[v.size() / 2] : (v[v.size() / 2 - 1] + v[v.size() / 2]) / 2.0;
    double ss = 0.0;
    for (int x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / n);
  }
  r.videos = result.videos;
  r.patients = static_cast<int>(patients.size());
  r.accepted_submissions = result.accepted_submissions;
  r.failed_submissions = result.failed_submissions;
  for (const auto& a : result.annotations) {
    ++r.annotations_with_qc;
    switch (a.classification) {
      case AnnotationClass::qc_hit: ++r.qc_hits; break;
      case AnnotationClass::true_positive: ++r.true_positive_annotations; break;
      case AnnotationClass::false_positive: ++r.false_positive_annotations; break;
    }
  }
  r.annotations = r.annotations_with_qc - r.qc_hits;
  r.false_positive_clusters = static_cast<int>(result.fp_clusters.size());
  return r;
}

std::string format_percent(int detected, int total) {
  if (total <= 0) return "n/a";
  const long long tenths = (2000LL * detected + total) / (2LL * total);
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + "%";
}

namespace {

json cell_json(const Cell& c) {
  return json{{"detected", c.detected}, {"total", c.total}, {"sensitivity", format_percent(c.detected, c.total)}};
}

Cell cell_from(const json& j) { return Cell{j.at("detected").get<int>(), j.at("total").get<int>()}; }

json stats_json(const WorkerCountStats& s) {
  return json{{"nodules", s.nodules}, {"mean", s.mean}, {"median", s.median}, {"stddev", s.stddev}};
}

WorkerCountStats stats_from(const json& j) {
  return WorkerCountStats{j.at("nodules").get<int>(), j.at("mean").get<double>(), j.at("median").get<double>(),
                          j.at("stddev").get<double>()};
}

std::string bin_label(SizeBin b) {
  switch (b) {
    case SizeBin::le4: return "<= 4";
    case SizeBin::gt4_le6: return "> 4 and <= 6";
    case SizeBin::gt6_le8: return "> 6 and <= 8";
    case SizeBin::gt8_le10: return "> 8 and <= 10";
    case SizeBin::gt10: return "> 10";
  }
  return "?";
}

std::string column_label(SizeBin b) {
  switch (b) {
    case SizeBin::le4: return "<=4mm";
    case SizeBin::gt4_le6: return "4-6mm";
    case SizeBin::gt6_le8: return "6-8mm";
    case SizeBin::gt8_le10: return "8-10mm";
    case SizeBin::gt10: return ">10mm";
  }
  return "?";
}

std::string title_case(std::string_view s) {
  std::string out(s);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string cross_cell(const Cell& c) {
  if (c.total == 0) return "0/0";
  return std::to_string(c.detected) + "/" + std::to_string(c.total) + " (" + format_percent(c.detected, c.total) + ")";
}

std::string render_text(const MetricsReport& r) {
  std::ostringstream os;
  const bool has_rows = r.overall.total > 0;
  os << "Nodules detected by the crowd\n\n";
  os << "| Nodule size (mm) | Ground truth | Detected | Sensitivity |\n";
  os << "|---|---|---|---|\n";
  if (has_rows)
    for (auto b : kAllSizeBins) {
      const auto& c = r.by_size[bin_index(b)];
      os << "| " << bin_label(b) << " | " << c.total << " | " << c.detected << " | "
         << format_percent(c.detected, c.total) << " |\n";
    }
  os << "| Total | " << r.overall.total << " | " << r.overall.detected << " | "
     << format_percent(r.overall.detected, r.overall.total) << " |\n\n";

  os << "Sensitivity by location and attachment\n\n";
  os << "| Variable | |";
  for (auto b : kAllSizeBins) os << ' ' << column_label(b) << " |";
  os << "\n|---|---|---|---|---|---|---|\n";
  if (has_rows) {
    for (auto l : kAllLocations) {
      os << "| Location | " << title_case(to_string(l)) << " |";
      for (auto b : kAllSizeBins) os << ' ' << cross_cell(r.by_location[static_cast<std::size_t>(l)][bin_index(b)]) << " |";
      os << '\n';
    }
    for (auto a : kAllAttachments) {
      os << "| Attachment | " << title_case(to_string(a)) << " |";
      for (auto b : kAllSizeBins)
        os << ' ' << cross_cell(r.by_attachment[static_cast<std::size_t>(a)][bin_index(b)]) << " |";
      os << '\n';
    }
  }

  os << "\nWorkers per detected nodule\n\n";
  os << "| Size class | Nodules | Mean | Median | Std dev |\n|---|---|---|---|---|\n";
  for (auto c : kAllSizeClasses) {
    const auto& s = r.worker_counts[static_cast<std::size_t>(c)];
    os << "| " << to_string(c) << " | " << s.nodules << " | " << fixed(s.mean, 2) << " | " << fixed(s.median, 1)
       << " | " << fixed(s.stddev, 2) << " |\n";
  }

  os << "\nVideos: " << r.videos << "\n";
  os << "Patients: " << r.patients << "\n";
  os << "Accepted submissions: " << r.accepted_submissions << "\n";
  os << "Failed QC submissions: " << r.failed_submissions << "\n";
  os << "Annotations (excluding QC marker): " << r.annotations << "\n";
  os << "Annotations (including QC marker): " << r.annotations_with_qc << "\n";
  os << "True-positive annotations: " << r.true_positive_annotations << "\n";
  os << "False-positive annotations: " << r.false_positive_annotations << "\n";
  os << "False-positive regions: " << r.false_positive_clusters << "\n";
  return os.str();
}

std::string render_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "size_bin,ground_truth,detected,sensitivity\n";
  if (r.overall.total > 0)
    for (auto b : kAllSizeBins) {
      const auto& c = r.by_size[bin_index(b)];
      os << to_string(b) << ',' << c.total << ',' << c.detected << ',' << format_percent(c.detected, c.total) << '\n';
    }
  os << "total," << r.overall.total << ',' << r.overall.detected << ','
     << format_percent(r.overall.detected, r.overall.total) << '\n';
  return os.str();
}

}  // namespace

void to_json(json& j, const MetricsReport& r) {
  json bins = json::array();
  if (r.overall.total > 0)
    for (auto b : kAllSizeBins) {
      auto row = cell_json(r.by_size[bin_index(b)]);
      row["size_bin"] = std::string(to_string(b));
      bins.push_back(std::move(row));
    }
  json location = json::object();
  for (auto l : kAllLocations) {
    json cells = json::array();
    for (auto b : kAllSizeBins) cells.push_back(cell_json(r.by_location[static_cast<std::size_t>(l)][bin_index(b)]));
    location[std::string(to_string(l))] = std::move(cells);
  }
  json attachment = json::object();
  for (auto a : kAllAttachments) {
    json cells = json::array();
    for (auto b : kAllSizeBins)
      cells.push_back(cell_json(r.by_attachment[static_cast<std::size_t>(a)][bin_index(b)]));
    attachment[std::string(to_string(a))] = std::move(cells);
  }
  json workers = json::object();
  for (auto c : kAllSizeClasses) workers[std::string(to_string(c))] = stats_json(r.worker_counts[static_cast<std::size_t>(c)]);
  j = json{{"size_bins", std::move(bins)},
           {"overall", cell_json(r.overall)},
           {"location", std::move(location)},
           {"attachment", std::move(attachment)},
           {"worker_counts", std::move(workers)},
           {"counts",
            {{"videos", r.videos},
             {"patients", r.patients},
             {"accepted_submissions", r.accepted_submissions},
             {"failed_submissions", r.failed_submissions},
             {"annotations", r.annotations},
             {"annotations_with_qc", r.annotations_with_qc},
             {"qc_hits", r.qc_hits},
             {"true_positive_annotations", r.true_positive_annotations},
             {"false_positive_annotations", r.false_positive_annotations},
             {"false_positive_clusters", r.false_positive_clusters}}},
           {"provenance", r.provenance}};
}

void from_json(const json& j, MetricsReport& r) {
  r = MetricsReport{};
  for (const auto& row : j.at("size_bins"))
    r.by_size[bin_index(size_bin_from_string(row.at("size_bin").get<std::string>()))] = cell_from(row);
  r.overall = cell_from(j.at("overall"));
  for (auto l : kAllLocations) {
    const auto& cells = j.at("location").at(std::string(to_string(l)));
    for (auto b : kAllSizeBins) r.by_location[static_cast<std::size_t>(l)][bin_index(b)] = cell_from(cells.at(bin_index(b)));
  }
  for (auto a : kAllAttachments) {
    const auto& cells = j.at("attachment").at(std::string(to_string(a)));
    for (auto b : kAllSizeBins)
      r.by_attachment[static_cast<std::size_t>(a)][bin_index(b)] = cell_from(cells.at(bin_index(b)));
  }
  for (auto c : kAllSizeClasses)
    r.worker_counts[static_cast<std::size_t>(c)] = stats_from(j.at("worker_counts").at(std::string(to_string(c))));
  const auto& n = j.at("counts");
  r.videos = n.at("videos").get<int>();
  r.patients = n.at("patients").get<int>();
  r.accepted_submissions = n.at("accepted_submissions").get<int>();
  r.failed_submissions = n.at("failed_submissions").get<int>();
  r.annotations = n.at("annotations").get<int>();
  r.annotations_with_qc = n.at("annotations_with_qc").get<int>();
  r.qc_hits = n.at("qc_hits").get<int>();
  r.true_positive_annotations = n.at("true_positive_annotations").get<int>();
  r.false_positive_annotations = n.at("false_positive_annotations").get<int>();
  r.false_positive_clusters = n.at("false_positive_clusters").get<int>();
  r.provenance = j.value("provenance", json::object());
}

ReportFormat report_format_from_string(std::string_view text) {
  if (text == "json") return ReportFormat::json;
  if (text == "text" || text == "text-table" || text == "txt") return ReportFormat::text;
  if (text == "csv") return ReportFormat::csv;
  fail(ErrorKind::invalid_argument, "unknown report format '" + std::string(text) + "'");
}

std::string render_report(const MetricsReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::json: return json(report).dump(2) + "\n";
    case ReportFormat::text: return render_text(report);
    case ReportFormat::csv: return render_csv(report);
  }
  fail(ErrorKind::invalid_argument, "unknown report format");
}

json match_to_json(const MatchResult& result) {
  json nodules = json::array();
  for (const auto& n : result.nodules)
    nodules.push_back(json{{"nodule_id", n.nodule_id},
                           {"detected", n.detected},
                           {"worker_count", n.worker_count},
                           {"submission_ids", n.submission_ids}});
  json annotations = json::array();
  for (const auto& a : result.annotations) {
    json row{{"submission_id", a.submission_id},
             {"worker_id", a.worker_id},
             {"segment_id", a.segment_id},
             {"annotation_index", a.annotation_index},
             {"classification", std::string(to_string(a.classification))}};
    if (a.classification == AnnotationClass::true_positive) {
      row["nodule_id"] = a.nodule_id;
      row["overlap"] = a.overlap;
    }
    annotations.push_back(std::move(row));
  }
  return json{{"nodules", std::move(nodules)},
              {"annotations", std::move(annotations)},
              {"fp_clusters", result.fp_clusters},
              {"accepted_submissions", result.accepted_submissions},
              {"failed_submissions", result.failed_submissions},
              {"videos", result.videos}};
}

}  // namespace lungcrowd
