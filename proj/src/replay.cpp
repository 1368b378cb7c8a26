#include "lungcrowd/replay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "lungcrowd/crowd_sim.hpp"
#include "lungcrowd/error.hpp"
#include "lungcrowd/mip.hpp"
#include "lungcrowd/qc_marker.hpp"
#include "lungcrowd/task_store.hpp"

namespace lungcrowd {

using nlohmann::json;

namespace {

constexpr int kFrameSize = 128;
constexpr int kCell = 16;
constexpr int kGrid = kFrameSize / kCell;
constexpr int kQuadrantSlices = 20;

struct Planned {
  SizeBin bin;
  Location location;
  Attachment attachment;
  bool detected;
};

using Pairs = std::vector<std::pair<int, int>>;  // (detected, total) per size bin

Pairs read_pairs(const json& j, const std::string& what) {
  Pairs out;
  for (const auto& p : j) out.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  if (out.size() != kAllSizeBins.size()) fail(ErrorKind::format, what + ": expected one pair per size bin");
  return out;
}

// Northwest-corner fill: a joint table with the given row and column sums.
std::vector<std::vector<int>> northwest_corner(std::vector<int> rows, std::vector<int> cols) {
  std::vector<std::vector<int>> t(rows.size(), std::vector<int>(cols.size(), 0));
  std::size_t i = 0, j = 0;
  while (i < rows.size() && j < cols.size()) {
    const int v = std::min(rows[i], cols[j]);
    t[i][j] = v;
    rows[i] -= v;
    cols[j] -= v;
    if (rows[i] == 0) ++i;
    else ++j;
  }
  return t;
}

double diameter_for(SizeBin bin, int i) {
  switch (bin) {
    case SizeBin::le4: return 2.0 + (i % 5) * 0.5;
    case SizeBin::gt4_le6: return 4.5 + (i % 4) * 0.5;
    case SizeBin::gt6_le8: return 6.5 + (i % 4) * 0.5;
    case SizeBin::gt8_le10: return 8.5 + (i % 4) * 0.5;
    case SizeBin::gt10: return 11.0 + (i % 10) * 2.0;
  }
  return 1.0;
}

Box cell_box(int cell, int size) {
  const int gx = cell % kGrid;
  const int gy = cell / kGrid;
  const int off = (kCell - size) / 2;
  return Box{gx * kCell + off, gy * kCell + off, size, size};
}

// Cells usable for nodules and false positives; the bottom-right block stays
// free for the QC marker.
std::vector<int> free_cells() {
  std::vector<int> cells;
  for (int c = 0; c < kGrid * kGrid; ++c)
    if (!(c % kGrid >= kGrid / 2 && c / kGrid >= kGrid / 2)) cells.push_back(c);
  return cells;
}

std::string patient_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%02d", index + 1);
  return buf;
}

VideoSegment geometry_segment(const std::string& patient, QuadrantId q) {
  const bool right = q == QuadrantId::right_upper || q == QuadrantId::right_lower;
  const bool lower = q == QuadrantId::left_lower || q == QuadrantId::right_lower;
  Quadrant quadrant;
  quadrant.id = q;
  quadrant.empty = false;
  quadrant.bbox2d = Box{right ? kFrameSize : 0, 0, kFrameSize, kFrameSize};
  quadrant.slice_range = lower ? SliceRange{kQuadrantSlices, 2 * kQuadrantSlices - 1} : SliceRange{0, kQuadrantSlices - 1};
  VideoSegment seg;
  seg.layout = plan_segment(quadrant, RenderConfig{}, patient);
  for (std::size_t k = 0; k < seg.layout.slab_table.size(); ++k) {
    seg.footprints.emplace_back(static_cast<std::size_t>(kFrameSize * kFrameSize), std::uint8_t{1});
    seg.layout.mask_pixels.push_back(kFrameSize * kFrameSize);
  }
  return seg;
}

}  // namespace

json load_recorded_outcomes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, path.string() + ": " + e.what());
  }
}

ReplayFixture build_replay_fixture(const json& recorded) {
  const int patients = recorded.at("patients").get<int>();
  const int per_video = recorded.at("workers_per_video").get<int>();
  const int unique_workers = recorded.at("unique_workers").get<int>();
  const int spam = recorded.at("spam_submissions").get<int>();
  const int annotations = recorded.at("annotations").get<int>();
  const int fp_total = recorded.at("false_positive_annotations").get<int>();

  // Joint location x attachment per size bin, separately for hits and misses.
  std::vector<Planned> planned;
  std::array<int, 5> bin_totals{};
  const auto& bins = recorded.at("size_bins");
  for (auto b : kAllSizeBins) {
    const auto& row = bins.at(bin_index(b));
    if (size_bin_from_string(row.at("size_bin").get<std::string>()) != b)
      fail(ErrorKind::format, "size_bins out of order");
    const int total = row.at("total").get<int>();
    const int detected = row.at("detected").get<int>();
    bin_totals[bin_index(b)] = total;
    for (bool hit : {true, false}) {
      std::vector<int> rows, cols;
      for (auto l : kAllLocations) {
        const auto p = read_pairs(recorded.at("location").at(std::string(to_string(l))), "location")[bin_index(b)];
        rows.push_back(hit ? p.first : p.second - p.first);
      }
      for (auto a : kAllAttachments) {
        const auto p = read_pairs(recorded.at("attachment").at(std::string(to_string(a))), "attachment")[bin_index(b)];
        cols.push_back(hit ? p.first : p.second - p.first);
      }
      int rs = 0, cs = 0;
      for (int v : rows) rs += v;
      for (int v : cols) cs += v;
      const int want = hit ? detected : total - detected;
      if (rs != want || cs != want)
        fail(ErrorKind::invalid_argument, "recorded outcomes: location/attachment counts disagree with size bin " +
                                              std::string(to_string(b)));
      const auto joint = northwest_corner(rows, cols);
      for (std::size_t i = 0; i < joint.size(); ++i)
        for (std::size_t j = 0; j < joint[i].size(); ++j)
          for (int k = 0; k < joint[i][j]; ++k)
            planned.push_back(Planned{b, kAllLocations[i], kAllAttachments[j], hit});
    }
  }

  // Patient composition: the two special cases first, the rest round-robin.
  std::vector<std::vector<Planned>> by_patient(static_cast<std::size_t>(patients));
  std::vector<bool> used(planned.size(), false);
  auto take = [&](std::size_t patient, auto pred, int count) {
    for (std::size_t i = 0; i < planned.size() && count > 0; ++i) {
      if (used[i] || !pred(planned[i])) continue;
      used[i] = true;
      by_patient[patient].push_back(planned[i]);
      --count;
    }
    if (count > 0) fail(ErrorKind::invalid_argument, "recorded outcomes: not enough nodules for special patient");
  };
  std::vector<int> patient_fps(static_cast<std::size_t>(patients), 0);
  const auto& special = recorded.at("special_patients");
  if (static_cast<int>(special.size()) >= patients) fail(ErrorKind::invalid_argument, "too many special patients");
  int special_fps = 0;
  for (std::size_t p = 0; p < special.size(); ++p) {
    const auto& s = special[p];
    const int nodules = s.at("nodules").get<int>();
    const int missed = s.value("missed", 0);
    const auto bin = size_bin_from_string(s.at("size_bin").get<std::string>());
    const bool only_bin = s.value("only_size_bin", false);
    take(p, [&](const Planned& n) { return !n.detected && n.bin == bin; }, missed);
    take(p, [&](const Planned& n) { return n.detected && (n.bin == bin || !only_bin); }, nodules - missed);
    patient_fps[p] = s.at("false_positives").get<int>();
    special_fps += patient_fps[p];
  }
  {
    std::size_t next = special.size();
    for (std::size_t i = 0; i < planned.size(); ++i) {
      if (used[i]) continue;
      by_patient[next].push_back(planned[i]);
      next = next + 1 < by_patient.size() ? next + 1 : special.size();
    }
  }

  // Worker credits per size class: large and medium from the recorded means,
  // small takes whatever the annotation total leaves.
  const auto& means = recorded.at("worker_count_means");
  std::array<int, 3> class_nodules{};
  for (const auto& n : planned)
    if (n.detected) ++class_nodules[static_cast<std::size_t>(size_class_for(n.bin))];
  const int tp_annotations = annotations - fp_total;
  std::array<int, 3> class_credits{};
  class_credits[2] = static_cast<int>(std::lround(means.at("large").get<double>() * class_nodules[2]));
  class_credits[1] = static_cast<int>(std::lround(means.at("medium").get<double>() * class_nodules[1]));
  class_credits[0] = tp_annotations - class_credits[1] - class_credits[2];
  for (std::size_t c = 0; c < 3; ++c)
    if (class_credits[c] < class_nodules[c] || class_credits[c] > per_video * class_nodules[c])
      fail(ErrorKind::invalid_argument, "recorded outcomes: worker credits for size class " +
                                            std::string(to_string(kAllSizeClasses[c])) + " are infeasible");

  // Remaining false positives spread over the other patients' videos.
  const int rest_fps = fp_total - special_fps;
  if (rest_fps < 0) fail(ErrorKind::invalid_argument, "recorded outcomes: special false positives exceed total");

  ReplayFixture fx;
  fx.workers = unique_workers;
  fx.workers_per_video = per_video;
  const auto cells = free_cells();
  const Sprite sprite = default_sprite();
  std::array<int, 3> class_seen{};
  std::vector<std::string> video_order;
  std::map<std::string, std::vector<std::pair<std::size_t, int>>> credits_by_video;  // (gt index, workers)
  std::map<std::string, int> cursor;                                                  // next free cell
  std::array<int, 5> bin_counter{};

  for (int p = 0; p < patients; ++p) {
    const auto pid = patient_name(p);
    for (auto q : kAllQuadrants) {
      auto seg = geometry_segment(pid, q);
      video_order.push_back(seg.layout.segment_id);
      cursor[seg.layout.segment_id] = 0;
      fx.segments.emplace(seg.layout.segment_id, std::move(seg));
    }
    const auto& list = by_patient[static_cast<std::size_t>(p)];
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& plan = list[i];
      const auto q = kAllQuadrants[i % kAllQuadrants.size()];
      auto& seg = fx.segments.at(make_segment_id(pid, q));
      int& c = cursor[seg.layout.segment_id];
      if (c >= static_cast<int>(cells.size())) fail(ErrorKind::invalid_argument, "too many nodules in one video");
      GroundTruthNodule n;
      char id[24];
      std::snprintf(id, sizeof id, "%s-N%02zu", pid.c_str(), i + 1);
      n.nodule_id = id;
      n.patient_id = pid;
      n.diameter_mm = diameter_for(plan.bin, bin_counter[bin_index(plan.bin)]++);
      n.location = plan.location;
      n.attachment = plan.attachment;
      const int size = std::clamp(static_cast<int>(std::lround(n.diameter_mm * 0.5)) + 2, 3, 14);
      const Box local = cell_box(cells[static_cast<std::size_t>(c++)], size);
      const int depth = std::clamp(static_cast<int>(std::lround(n.diameter_mm / 2.5)), 1, 5);
      for (int dz = 0; dz < depth; ++dz)
        n.extent.push_back(ExtentSlice{seg.layout.slice_range.z0 + 7 + dz,
                                       translated(local, seg.layout.bbox2d.x, seg.layout.bbox2d.y)});
      if (plan.detected) {
        const auto cls = static_cast<std::size_t>(size_class_for(plan.bin));
        const int k = class_seen[cls]++;
        const int base = class_credits[cls] / class_nodules[cls];
        const int extra = class_credits[cls] % class_nodules[cls];
        credits_by_video[seg.layout.segment_id].emplace_back(fx.gt.size(), base + (k < extra ? 1 : 0));
      }
      fx.gt.push_back(std::move(n));
    }
  }
  if (fx.gt.size() != planned.size()) fail(ErrorKind::invalid_argument, "recorded outcomes: nodule count mismatch");

  // Markers, placed exactly as for rendered segments.
  for (std::size_t v = 0; v < video_order.size(); ++v) {
    auto& seg = fx.segments.at(video_order[v]);
    seg.seed = splitmix64(0x5eedULL + v);
    seg.marker = place_marker(seg, fx.gt, sprite, seg.seed);
  }

  // False positives per video.
  std::map<std::string, int> fps_by_video;
  int rest_left = rest_fps;
  for (std::size_t p = 0; p < special.size(); ++p)
    for (int i = 0; i < patient_fps[p]; ++i)
      ++fps_by_video[make_segment_id(patient_name(static_cast<int>(p)), kAllQuadrants[i % 4])];
  for (std::size_t v = special.size() * 4; rest_left > 0; v = v + 1 < video_order.size() ? v + 1 : special.size() * 4) {
    ++fps_by_video[video_order[v]];
    --rest_left;
  }

  // Submissions: spam first on the first videos, then ten accepted per video.
  const int regular = unique_workers - spam;
  if (regular < per_video) fail(ErrorKind::invalid_argument, "recorded outcomes: too few regular workers");
  for (int s = 0; s < spam; ++s) {
    WorkerSubmission sub;
    sub.worker_id = std::to_string(regular + s);
    sub.segment_id = video_order[static_cast<std::size_t>(s) % video_order.size()];
    sub.annotations.push_back(Annotation{0, Box{0, 0, 6, 6}, AnnotationLabel::nodule});
    sub.wall_time_ms = 4000;
    fx.submissions.push_back(std::move(sub));
  }
  int slot = 0;
  for (const auto& vid : video_order) {
    const auto& seg = fx.segments.at(vid);
    std::vector<WorkerSubmission> subs(static_cast<std::size_t>(per_video));
    for (int j = 0; j < per_video; ++j) {
      auto& sub = subs[static_cast<std::size_t>(j)];
      sub.worker_id = std::to_string((slot + j) % regular);
      sub.segment_id = vid;
      sub.wall_time_ms = 60000 + 1000 * j;
      sub.annotations.push_back(Annotation{seg.marker->first_frame, seg.marker->box, AnnotationLabel::qc});
    }
    slot += per_video;
    int rotation = 0;
    for (const auto& [gi, workers] : credits_by_video[vid]) {
      const auto projections = project_nodule(seg.layout, fx.gt[gi]);
      const auto& target = projections[projections.size() / 2];
      for (int w = 0; w < workers; ++w)
        subs[static_cast<std::size_t>((rotation + w) % per_video)].annotations.push_back(
            Annotation{target.frame_index, target.box, AnnotationLabel::nodule});
      ++rotation;
    }
    const int fps = fps_by_video[vid];
    int c = cursor[vid];
    for (int i = 0; i < fps; ++i) {
      if (c >= static_cast<int>(cells.size())) fail(ErrorKind::invalid_argument, "too many boxes in one video");
      const Box b = cell_box(cells[static_cast<std::size_t>(c++)], 8);
      const int frame = keyframe_index(seg.layout, static_cast<int>(seg.layout.slab_table.size()) / 2);
      subs[static_cast<std::size_t>(i % per_video)].annotations.push_back(Annotation{frame, b, AnnotationLabel::nodule});
    }
    for (auto& s : subs) fx.submissions.push_back(std::move(s));
  }
  for (auto b : kAllSizeBins) {
    int n = 0;
    for (const auto& g : fx.gt) n += g.size_bin() == b ? 1 : 0;
    if (n != bin_totals[bin_index(b)]) fail(ErrorKind::invalid_argument, "recorded outcomes: size bin totals drift");
  }
  return fx;
}

std::vector<WorkerSubmission> replay_into(TaskStore& store, const ReplayFixture& fixture) {
  std::vector<TaskSegment> segments;
  for (const auto& [id, seg] : fixture.segments) segments.push_back(task_segment_from(seg));
  const auto tasks = store.add_tasks(segments);
  std::map<std::string, std::string> task_for;
  for (const auto& t : tasks) task_for[t.segment_id] = t.task_id;
  std::vector<std::string> workers;
  for (int i = 0; i < fixture.workers; ++i) workers.push_back(store.register_worker());

  std::vector<WorkerSubmission> stored;
  for (auto sub : fixture.submissions) {
    sub.worker_id = workers.at(static_cast<std::size_t>(std::stoi(sub.worker_id)));
    sub.task_id = task_for.at(sub.segment_id);
    stored.push_back(store.submit(std::move(sub)));
  }
  return stored;
}

}  // namespace lungcrowd
