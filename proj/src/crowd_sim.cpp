#include "lungcrowd/crowd_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "lungcrowd/error.hpp"
#include "lungcrowd/mip.hpp"
#include "lungcrowd/qc_marker.hpp"
#include "lungcrowd/task_store.hpp"

namespace lungcrowd {

using nlohmann::json;

std::string_view to_string(WorkerKind kind) {
  switch (kind) {
    case WorkerKind::ideal: return "ideal";
    case WorkerKind::spammer: return "spammer";
    case WorkerKind::calibrated: return "calibrated";
  }
  return "?";
}

WorkerKind worker_kind_from_string(std::string_view text) {
  for (auto k : {WorkerKind::ideal, WorkerKind::spammer, WorkerKind::calibrated})
    if (to_string(k) == text) return k;
  fail(ErrorKind::format, "unknown worker kind '" + std::string(text) + "'");
}

void WorkerProfile::validate() const {
  for (double p : p_detect)
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::invalid_argument, "p_detect values must lie in [0, 1]");
  if (!(fp_rate >= 0.0)) fail(ErrorKind::invalid_argument, "fp_rate must be >= 0");
  if (!(jitter_px >= 0.0)) fail(ErrorKind::invalid_argument, "jitter_px must be >= 0");
  if (max_tasks && *max_tasks < 0) fail(ErrorKind::invalid_argument, "max_tasks must be >= 0");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return splitmix64(seed ^ splitmix64(fnv1a(label)));
}

namespace {

bool touches_quadrant(const SegmentLayout& layout, const GroundTruthNodule& n) {
  for (const auto& e : n.extent)
    if (layout.slice_range.contains(e.z) && intersection_area(e.box, layout.bbox2d) > 0) return true;
  return false;
}

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Moves a box back inside the frame without changing its size (when it fits).
Box clamp_into(Box b, const Box& bounds) {
  b.w = std::min(b.w, bounds.w);
  b.h = std::min(b.h, bounds.h);
  b.x = std::clamp(b.x, bounds.x, bounds.right() - b.w);
  b.y = std::clamp(b.y, bounds.y, bounds.bottom() - b.h);
  return b;
}

// A frame for an annotation of `projections`: a keyframe outside the marker
// span when one exists, central among the candidates.
const ProjectedBox& pick_central(const std::vector<ProjectedBox>& projections, const QcMarker& marker) {
  std::vector<const ProjectedBox*> pool;
  for (bool avoid_clip : {true, false}) {
    for (bool avoid_marker : {true, false}) {
      for (const auto& p : projections)
        if ((!avoid_clip || !p.clipped) && (!avoid_marker || !marker.visible_on(p.frame_index))) pool.push_back(&p);
      if (!pool.empty()) return *pool[pool.size() / 2];
    }
  }
  return projections[projections.size() / 2];
}

Box random_box_avoiding(std::mt19937_64& rng, const VideoSegment& segment, const std::vector<GroundTruthNodule>& gt,
                        int frame, const Box& marker_box, bool need_mask) {
  const auto& layout = segment.layout;
  const bool have_mask = need_mask && segment.footprints.size() == layout.slab_table.size();
  const auto footprint = have_mask ? frame_footprint(segment, frame) : std::vector<std::uint8_t>{};
  const auto visible = visible_ground_truth(layout, gt, frame);
  for (int attempt = 0; attempt < 200; ++attempt) {
    const int w = uniform(rng, 4, std::min(12, layout.width()));
    const int h = uniform(rng, 4, std::min(12, layout.height()));
    const Box b{uniform(rng, 0, layout.width() - w), uniform(rng, 0, layout.height() - h), w, h};
    if (intersection_area(b, marker_box) > 0) continue;
    if (std::any_of(visible.begin(), visible.end(), [&](const Box& g) { return intersection_area(b, g) > 0; }))
      continue;
    if (have_mask && !footprint[static_cast<std::size_t>((b.y + h / 2) * layout.width() + b.x + w / 2)]) continue;
    return b;
  }
  return Box{};
}

}  // namespace

std::vector<ProjectedBox> project_nodule(const SegmentLayout& layout, const GroundTruthNodule& nodule) {
  if (!touches_quadrant(layout, nodule))
    fail(ErrorKind::invalid_argument, "nodule " + nodule.nodule_id + " lies outside segment " + layout.segment_id);
  std::vector<ProjectedBox> out;
  const Box bounds = layout.frame_bounds();
  for (std::size_t k = 0; k < layout.slab_table.size(); ++k) {
    Box u;
    for (const auto& e : nodule.extent)
      if (layout.slab_table[k].contains(e.z)) u = bounding_union(u, e.box);
    if (u.empty()) continue;
    const Box local = translated(u, -layout.bbox2d.x, -layout.bbox2d.y);
    const Box clipped = intersect(local, bounds);
    if (clipped.empty()) continue;
    out.push_back(ProjectedBox{keyframe_index(layout, static_cast<int>(k)), clipped, !(clipped == local)});
  }
  return out;
}

std::vector<const GroundTruthNodule*> nodules_in_segment(const SegmentLayout& layout,
                                                         const std::vector<GroundTruthNodule>& gt) {
  std::vector<const GroundTruthNodule*> out;
  for (const auto& n : gt)
    if (n.patient_id == layout.patient_id && touches_quadrant(layout, n)) out.push_back(&n);
  return out;
}

WorkerSubmission simulate_worker(const WorkerProfile& profile, const VideoSegment& segment,
                                 const std::vector<GroundTruthNodule>& gt) {
  profile.validate();
  const auto& layout = segment.layout;
  if (!segment.marker) fail(ErrorKind::invalid_argument, "segment " + layout.segment_id + " has no QC marker");
  const auto& marker = *segment.marker;
  std::mt19937_64 rng(derive_seed(profile.seed, layout.segment_id));

  WorkerSubmission s;
  s.segment_id = layout.segment_id;
  auto& out = s.annotations;

  if (profile.kind == WorkerKind::spammer) {
    const int n = uniform(rng, 1, 3);
    for (int i = 0; i < n; ++i) {
      for (int attempt = 0; attempt < 1000; ++attempt) {
        const int w = uniform(rng, 4, std::min(24, layout.width()));
        const int h = uniform(rng, 4, std::min(24, layout.height()));
        const Box b{uniform(rng, 0, layout.width() - w), uniform(rng, 0, layout.height() - h), w, h};
        if (intersection_area(b, marker.box) > 0) continue;
        out.push_back(Annotation{uniform(rng, 0, layout.frame_count() - 1), b, AnnotationLabel::nodule});
        break;
      }
    }
  } else {
    out.push_back(Annotation{marker.first_frame, marker.box, AnnotationLabel::qc});
    for (const auto* n : nodules_in_segment(layout, gt)) {
      const auto projections = project_nodule(layout, *n);
      if (projections.empty()) continue;
      if (profile.kind == WorkerKind::ideal) {
        // a nodule cut by the frame edge belongs to a neighbouring quadrant's video
        if (std::all_of(projections.begin(), projections.end(), [](const ProjectedBox& p) { return p.clipped; }))
          continue;
        const auto& p = pick_central(projections, marker);
        out.push_back(Annotation{p.frame_index, p.box, AnnotationLabel::nodule});
        continue;
      }
      const double p_detect = profile.p_detect[bin_index(n->size_bin())];
      if (!std::bernoulli_distribution(p_detect)(rng)) continue;
      const auto& p = projections[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(projections.size()) - 1))];
      Box b = p.box;
      if (profile.jitter_px > 0.0) {
        // A worker who saw the nodule boxes it imprecisely but still around
        // it: the shift is capped at a tenth of the box side per axis.
        std::normal_distribution<double> noise(0.0, profile.jitter_px);
        const auto shift = [&](int side) {
          const long cap = side / 10;
          return static_cast<int>(std::clamp(std::lround(noise(rng)), -cap, cap));
        };
        b.x += shift(b.w);
        b.y += shift(b.h);
      }
      out.push_back(Annotation{p.frame_index, clamp_into(b, layout.frame_bounds()), AnnotationLabel::nodule});
    }
    if (profile.kind == WorkerKind::calibrated && profile.fp_rate > 0.0) {
      const int extra = std::poisson_distribution<int>(profile.fp_rate)(rng);
      for (int i = 0; i < extra; ++i) {
        const int frame = uniform(rng, 0, layout.frame_count() - 1);
        const Box b = random_box_avoiding(rng, segment, gt, frame, marker.box, true);
        if (!b.empty()) out.push_back(Annotation{frame, b, AnnotationLabel::nodule});
      }
    }
  }
  s.wall_time_ms = uniform(rng, 15000, 240000);
  return s;
}

Scenario parse_scenario(const json& j) {
  Scenario s;
  s.name = j.value("name", std::string("scenario"));
  if (!j.contains("workers") || !j.at("workers").is_array())
    fail(ErrorKind::format, "scenario needs a 'workers' array");
  for (const auto& w : j.at("workers")) {
    ProfileGroup g;
    g.profile.kind = worker_kind_from_string(w.at("kind").get<std::string>());
    g.name = w.value("name", std::string(to_string(g.profile.kind)));
    g.count = w.value("count", 1);
    if (g.count < 0) fail(ErrorKind::invalid_argument, "worker count must be >= 0");
    if (w.contains("p_detect")) {
      const auto& p = w.at("p_detect");
      if (p.is_array()) {
        if (p.size() != 5) fail(ErrorKind::format, "p_detect needs one value per size bin");
        for (std::size_t i = 0; i < 5; ++i) g.profile.p_detect[i] = p.at(i).get<double>();
      } else {
        for (auto b : kAllSizeBins) g.profile.p_detect[bin_index(b)] = p.at(std::string(to_string(b))).get<double>();
      }
    } else if (g.profile.kind == WorkerKind::calibrated) {
      g.profile.p_detect = kRecordedDetectRates;
    }
    g.profile.fp_rate = w.value("fp_rate", g.profile.kind == WorkerKind::calibrated ? 0.06 : 0.0);
    g.profile.jitter_px = w.value("jitter_px", g.profile.kind == WorkerKind::calibrated ? 2.0 : 0.0);
    g.profile.seed = w.value("seed", std::uint64_t{0});
    if (w.contains("max_tasks") && !w.at("max_tasks").is_null()) g.profile.max_tasks = w.at("max_tasks").get<int>();
    g.profile.validate();
    s.groups.push_back(std::move(g));
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open scenario " + path.string());
  try {
    return parse_scenario(json::parse(in));
  } catch (const json::exception& e) {
    fail(ErrorKind::format, path.string() + ": " + e.what());
  }
}

json scenario_to_json(const Scenario& s) {
  json workers = json::array();
  for (const auto& g : s.groups) {
    json p = json::object();
    for (auto b : kAllSizeBins) p[std::string(to_string(b))] = g.profile.p_detect[bin_index(b)];
    workers.push_back(json{{"name", g.name},
                           {"kind", std::string(to_string(g.profile.kind))},
                           {"count", g.count},
                           {"p_detect", p},
                           {"fp_rate", g.profile.fp_rate},
                           {"jitter_px", g.profile.jitter_px},
                           {"seed", g.profile.seed},
                           {"max_tasks", g.profile.max_tasks ? json(*g.profile.max_tasks) : json(nullptr)}});
  }
  return json{{"name", s.name}, {"workers", std::move(workers)}};
}

CrowdRunStats run_crowd(TaskStore& store, const Scenario& scenario, const SegmentCatalog& segments,
                        const std::vector<GroundTruthNodule>& gt, std::uint64_t seed) {
  struct SimWorker {
    std::string id;
    WorkerProfile profile;
    int done = 0;
    bool active = true;
  };
  std::vector<SimWorker> crowd;
  for (const auto& g : scenario.groups) {
    for (int i = 0; i < g.count; ++i) {
      SimWorker w{store.register_worker(), g.profile};
      w.profile.seed = splitmix64(g.profile.seed ^ splitmix64(seed + crowd.size()));
      crowd.push_back(std::move(w));
    }
  }
  CrowdRunStats stats;
  stats.workers = static_cast<int>(crowd.size());
  bool progress = true;
  while (progress) {
    progress = false;
    for (auto& w : crowd) {
      if (!w.active) continue;
      if (w.profile.max_tasks && w.done >= *w.profile.max_tasks) {
        w.active = false;
        continue;
      }
      const auto task = store.assign_next(w.id);
      if (!task) {
        w.active = false;
        continue;
      }
      auto sub = simulate_worker(w.profile, segments.at(task->segment_id), gt);
      sub.task_id = task->task_id;
      sub.worker_id = w.id;
      const auto stored = store.submit(std::move(sub));
      ++w.done;
      ++stats.submissions;
      if (stored.qc_status == QcStatus::passed) ++stats.passed;
      else ++stats.failed;
      progress = true;
    }
  }
  return stats;
}

}  // namespace lungcrowd
