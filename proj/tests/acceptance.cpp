// Acceptance runner: one PASS/FAIL line per requirement, nonzero exit on any failure.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "lungcrowd/crowd_sim.hpp"
#include "lungcrowd/evaluation.hpp"
#include "lungcrowd/hash.hpp"
#include "lungcrowd/http_service.hpp"
#include "lungcrowd/log.hpp"
#include "lungcrowd/phantom.hpp"
#include "lungcrowd/pipeline.hpp"
#include "lungcrowd/replay.hpp"
#include "lungcrowd/task_store.hpp"
#include "support.hpp"

using namespace lungcrowd;
using namespace lungcrowd::testing;
using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------

Outcome mip_oracle() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> side(2, 32), thick(1, 5), stride(1, 3), interp(0, 3);
  std::int64_t pixels = 0;
  int volumes = 0;
  double render_s = 0;
  const auto t0 = Clock::now();
  while (volumes < 100) {
    const Dims3 d{side(rng), side(rng), side(rng)};
    const auto vol = random_volume(rng, d);
    const auto q = quadrant_from_mask(random_mask(rng, d));
    if (q.empty) continue;
    RenderConfig cfg;
    cfg.slab_thickness = std::min(thick(rng), q.slice_range.length());
    cfg.slab_stride = stride(rng);
    cfg.interp_frames = interp(rng);
    const auto r0 = Clock::now();
    const auto seg = render_segment(vol, q, cfg, "P01");
    render_s += seconds_since(r0);
    for (std::size_t k = 0; k < seg.layout.slab_table.size(); ++k) {
      const auto& f = seg.frames[static_cast<std::size_t>(keyframe_index(seg.layout, static_cast<int>(k)))];
      const auto want = brute_slab_max(vol, q, seg.layout.slab_table[k], cfg.window);
      if (f.pixels != want) return {false, "keyframe mismatch on volume " + std::to_string(volumes)};
      pixels += static_cast<std::int64_t>(want.size());
    }
    ++volumes;
  }
  const double total = seconds_since(t0);
  return {total < 10.0, std::to_string(volumes) + " volumes, " + std::to_string(pixels) +
                            " keyframe pixels exact, " + fmt(total) + " s (render " + fmt(render_s) + " s)"};
}

Outcome frame_layout() {
  const auto q = block_quadrant(48, 40, {0, 9}, 7, 3);
  const auto layout = plan_segment(q, RenderConfig{}, "P01");
  if (layout.frame_count() != 16) return {false, std::to_string(layout.frame_count()) + " frames"};
  for (int k = 0; k < 6; ++k)
    if (!(layout.slab_table[static_cast<std::size_t>(k)] == SliceRange{k, k + 4}))
      return {false, "slab table entry " + std::to_string(k)};
  for (int f = 0; f < 16; ++f) {
    const auto s = frame_to_slab(layout, f);
    if (s.length() != 5) return {false, "frame " + std::to_string(f) + " maps to a short slab"};
  }
  for (int f : {-1, 16})
    if (error_kind_of([&] { frame_to_slab(layout, f); }) != ErrorKind::invalid_argument)
      return {false, "frame " + std::to_string(f) + " not rejected"};

  // map an annotation into the volume, build a nodule there, project it back
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> frame(0, 15), bx(0, 47), by(0, 39);
  for (int i = 0; i < 1000; ++i) {
    const int f = frame(rng);
    int x0 = bx(rng), x1 = bx(rng), y0 = by(rng), y1 = by(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    const Annotation a{f, Box{x0, y0, x1 - x0 + 1, y1 - y0 + 1}, AnnotationLabel::nodule};
    const auto m = map_annotation(layout, a);
    if (!(m.slices == frame_to_slab(layout, f))) return {false, "mapped slices differ from the frame's slab"};
    GroundTruthNodule n;
    n.nodule_id = "P01-N01";
    n.patient_id = "P01";
    n.diameter_mm = 5;
    for (int z = m.slices.z0; z <= m.slices.z1; ++z) n.extent.push_back({z, m.box});
    const int key = keyframe_index(layout, frame_to_slab_index(layout, f));
    bool found = false;
    for (const auto& p : project_nodule(layout, n))
      if (p.frame_index == key) found = p.box == a.box && !p.clipped;
    if (!found) return {false, "round trip lost annotation " + std::to_string(i)};
  }
  return {true, "16 frames, slab table [0..4]..[5..9], 1000 round trips exact"};
}

Outcome segmentation_suite() {
  const auto t0 = Clock::now();
  double worst = 1.0;
  for (int i = 0; i < 10; ++i) {
    PhantomConfig cfg;
    cfg.seed = 1000 + static_cast<std::uint64_t>(i);
    cfg.bridge = i % 2 == 1;
    cfg.nodules = 4 + i % 4;
    const auto ph = make_phantom(cfg, "P" + std::to_string(i + 1));
    const auto r = segment_lungs(ph.volume);
    const double dl = dice_coefficient(r.left, ph.left_truth);
    const double dr = dice_coefficient(r.right, ph.right_truth);
    worst = std::min({worst, dl, dr});
    if (dl < 0.95 || dr < 0.95)
      return {false, "phantom " + std::to_string(i) + " dice " + fmt(dl) + "/" + fmt(dr)};
    for (std::size_t v = 0; v < r.combined.bits.size(); ++v) {
      int owners = 0;
      for (const auto& q : r.quadrants) owners += q.mask.bits[v] ? 1 : 0;
      const bool lung = r.left.bits[v] || r.right.bits[v];
      if (owners != (lung ? 1 : 0) || (r.left.bits[v] && r.right.bits[v]) || (r.combined.bits[v] != 0) != lung)
        return {false, "partition broken on phantom " + std::to_string(i)};
    }
  }
  const double s = seconds_since(t0);
  return {s < 60.0, "10 phantoms, worst per-lung dice " + fmt(worst, 4) + ", partition exact, " + fmt(s) + " s"};
}

Outcome qc_placement() {
  const auto seg = geometry_segment(96, {0, 39}, "P01", Box{20, 30, 0, 0});
  const auto gt = dense_ground_truth(seg.layout, 40, 77);
  const auto sprite = default_sprite(16);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto m = place_marker(seg, gt, sprite, seed);
    const auto c = check_marker(seg, gt, m);
    if (c.gt_pixels_under_marker != 0 || c.frames_short_of_coverage != 0 || !contains(seg.layout.frame_bounds(), m.box))
      return {false, "seed " + std::to_string(seed) + ": " + std::to_string(c.gt_pixels_under_marker) +
                         " gt pixels, " + std::to_string(c.frames_short_of_coverage) + " thin frames"};
  }
  return {true, "1000 seeds, 40 nodules: no ground-truth pixel under any marker, coverage >= 25% on every frame"};
}

Outcome matching_semantics() {
  auto seg = geometry_segment(64, {0, 9}, "P01");
  seg.layout.bbox2d = Box{0, 0, 200000, 64};
  seg.marker = QcMarker{"gorilla", 0, 5, Box{48, 48, 16, 16}, 1};
  SegmentCatalog catalog{{seg.layout.segment_id, seg}};
  GroundTruthNodule n;
  n.nodule_id = "P01-N01";
  n.patient_id = "P01";
  n.diameter_mm = 6;
  n.extent = {{2, Box{0, 10, 100000, 1}}};
  const auto detected = [&](int width) {
    WorkerSubmission s;
    s.submission_id = "s1";
    s.worker_id = "w1";
    s.segment_id = seg.layout.segment_id;
    s.annotations = {{1, seg.marker->box, AnnotationLabel::qc}, {0, Box{0, 10, width, 1}, AnnotationLabel::nodule}};
    return match({s}, catalog, {n}).nodules[0].detected;
  };
  if (detected(60000)) return {false, "overlap 0.60 accepted"};
  if (!detected(60001)) return {false, "overlap 0.60001 rejected"};

  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> pos(-40, 60), len(0, 45);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const Box a{pos(rng), pos(rng), len(rng), len(rng)};
    const Box r{pos(rng), pos(rng), len(rng), len(rng)};
    std::int64_t inter = 0;
    for (int y = r.y; y < r.bottom(); ++y)
      for (int x = r.x; x < r.right(); ++x) inter += x >= a.x && x < a.right() && y >= a.y && y < a.bottom();
    const double want = r.area() ? static_cast<double>(inter) / static_cast<double>(r.area()) : 0.0;
    worst = std::max(worst, std::abs(overlap_ratio(a, r) - want));
  }
  return {worst < 1e-9, "0.60 rejected, 0.60001 accepted; 10000 pairs, max raster error " + [&] {
    std::ostringstream os;
    os << worst;
    return os.str();
  }()};
}

Outcome table_replay(const fs::path& scratch) {
  const auto m = cmd_replay(fs::path(LUNGCROWD_TEST_DATA) / "recorded_outcomes.json", scratch / "replay");
  const std::array<Cell, 5> want{Cell{78, 91}, Cell{28, 30}, Cell{17, 18}, Cell{15, 15}, Cell{23, 24}};
  const std::array<const char*, 5> pct{"85.7%", "93.3%", "94.4%", "100.0%", "95.8%"};
  for (std::size_t b = 0; b < 5; ++b) {
    if (!(m.by_size[b] == want[b])) return {false, "size bin " + std::to_string(b) + " differs"};
    if (format_percent(m.by_size[b].detected, m.by_size[b].total) != pct[b]) return {false, "percentage differs"};
  }
  if (!(m.overall == Cell{161, 178}) || format_percent(161, 178) != "90.4%") return {false, "total differs"};
  std::ostringstream counts;
  counts << m.videos << " videos, " << m.accepted_submissions << " accepted, " << m.annotations << " annotations, "
         << m.false_positive_annotations << " FP, " << m.failed_submissions << " spam";
  const bool ok = m.videos == 80 && m.accepted_submissions == 800 && m.annotations == 1021 &&
                  m.false_positive_annotations == 47 && m.failed_submissions == 5;
  return {ok, "78/91 28/30 17/18 15/15 23/24 total 161/178 (90.4%); " + counts.str()};
}

Outcome ideal_end_to_end(const fs::path& scratch) {
  PhantomDatasetOptions opts;
  opts.count = 4;
  opts.seed = 11;
  auto cfg = write_phantom_dataset(scratch / "ideal-data", opts);
  cfg.out = scratch / "ideal-out";
  const auto m = cmd_all(cfg);
  int failed_qc = 0;
  for (const auto& s : load_submissions(cfg.out / stage_dir::simulation / "submissions.jsonl"))
    failed_qc += s.qc_status != QcStatus::passed;
  const bool ok = m.overall.total > 0 && m.overall.detected == m.overall.total && m.false_positive_annotations == 0 &&
                  m.failed_submissions == 0 && failed_qc == 0 && m.accepted_submissions == m.videos * cfg.workers_per_video;
  return {ok, std::to_string(m.overall.detected) + "/" + std::to_string(m.overall.total) + " detected, " +
                  std::to_string(m.false_positive_annotations) + " FP, " + std::to_string(m.accepted_submissions) +
                  " submissions all QC-passed"};
}

Outcome calibrated_consistency() {
  // four segments, five nodules each (one per size bin) on a grid clear of each other
  SegmentCatalog catalog;
  std::vector<GroundTruthNodule> gt;
  const std::array<double, 5> diameters{3.0, 5.0, 7.0, 9.0, 12.0};
  for (int s = 0; s < 4; ++s) {
    const std::string pid = "P0" + std::to_string(s + 1);
    auto seg = geometry_segment(96, {0, 29}, pid, Box{10, 10, 0, 0});
    std::vector<GroundTruthNodule> local;
    for (int i = 0; i < 5; ++i) {
      GroundTruthNodule n;
      n.nodule_id = pid + "-N0" + std::to_string(i + 1);
      n.patient_id = pid;
      n.diameter_mm = diameters[static_cast<std::size_t>(i)];
      const int w = static_cast<int>(std::lround(n.diameter_mm)) + 2;
      const int x = 10 + 28 + 20 * (i % 3), y = 10 + 28 + 20 * (i / 3);
      for (int z = 8 + 3 * s; z < 12 + 3 * s; ++z) n.extent.push_back({z, Box{x, y, w, w}});
      local.push_back(n);
    }
    seg.marker = place_marker(seg, local, default_sprite(16), 500 + static_cast<std::uint64_t>(s));
    catalog[seg.layout.segment_id] = seg;
    gt.insert(gt.end(), local.begin(), local.end());
  }

  WorkerProfile p;
  p.kind = WorkerKind::calibrated;
  p.p_detect = kRecordedDetectRates;
  p.jitter_px = 0.0;
  std::array<int, 5> hits{}, trials{};
  for (int t = 0; t < 200; ++t) {
    p.seed = splitmix64(0xca1b + static_cast<std::uint64_t>(t));
    std::vector<WorkerSubmission> subs;
    for (const auto& [id, seg] : catalog) {
      auto s = simulate_worker(p, seg, gt);
      s.submission_id = id + "-" + std::to_string(t);
      s.worker_id = "w" + std::to_string(t);
      s.segment_id = id;
      subs.push_back(std::move(s));
    }
    const auto r = match(subs, catalog, gt);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const auto b = bin_index(gt[i].size_bin());
      ++trials[b];
      hits[b] += r.nodules[i].detected ? 1 : 0;
    }
  }
  std::ostringstream os;
  bool ok = true;
  for (std::size_t b = 0; b < 5; ++b) {
    const double q = p.p_detect[b];
    const double f = static_cast<double>(hits[b]) / trials[b];
    const double bound = 3.0 * std::sqrt(q * (1.0 - q) / trials[b]);
    const bool in = std::abs(f - q) <= bound;
    ok = ok && in;
    os << to_string(kAllSizeBins[b]) << ' ' << fmt(f) << " vs " << fmt(q) << " +/- " << fmt(bound)
       << (in ? "" : " OUT") << (b < 4 ? "; " : "");
  }
  return {ok, "200 trials: " + os.str()};
}

// Child process: feeds a logged store until killed. Each step appends
// "<events> <state hash>" to a sidecar so the parent knows what was live.
[[noreturn]] void durability_child(const fs::path& dir) {
  log::set_quiet(true);
  StoreConfig sc;
  sc.log_path = dir / "events.jsonl";
  sc.fsync_each_event = true;
  TaskStore store(sc);
  if (store.tasks().empty()) {
    std::vector<TaskSegment> segs;
    for (int i = 0; i < 80; ++i)
      segs.push_back(TaskSegment{"S" + std::to_string(100 + i), 128, 128, 40, QcMarker{"g", 0, 5, Box{96, 96, 32, 32}, 1}});
    store.add_tasks(segs);
  }
  std::ofstream side(dir / "sidecar.txt", std::ios::app);
  auto note = [&] { side << store.event_count() << ' ' << store.state_hash() << std::endl; };
  note();
  std::vector<std::string> workers;
  for (int i = 0; i < 143; ++i) {
    workers.push_back(store.register_worker());
    note();
  }
  for (;;) {
    for (const auto& w : workers) {
      const auto t = store.assign_next(w);
      note();
      if (!t) continue;
      WorkerSubmission s;
      s.worker_id = w;
      s.task_id = t->task_id;
      s.annotations = {{2, Box{96, 96, 32, 32}, AnnotationLabel::qc}};
      store.submit(s);
      note();
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
  }
}

Outcome service_durability(const fs::path& scratch) {
  const auto dir = scratch / "durable";
  fs::create_directories(dir);
  std::cout.flush();
  const pid_t pid = fork();
  if (pid < 0) return {false, "fork failed"};
  if (pid == 0) durability_child(dir);

  // let it get well into the submission phase, then kill it hard
  const auto t0 = Clock::now();
  while (seconds_since(t0) < 20) {
    std::error_code ec;
    if (fs::file_size(dir / "events.jsonl", ec) > 200000 && !ec) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  kill(pid, SIGKILL);
  int status = 0;
  waitpid(pid, &status, 0);

  std::map<std::size_t, std::string> live;
  {
    std::ifstream side(dir / "sidecar.txt");
    std::size_t n;
    std::string h;
    while (side >> n >> h)
      if (h.size() == 64) live[n] = h;
  }
  if (live.empty()) return {false, "child recorded no state"};

  // restart: the reopened store must match the last state the child reported
  StoreConfig sc;
  sc.log_path = dir / "events.jsonl";
  auto reopened = std::make_unique<TaskStore>(sc);
  const auto events = reopened->event_count();
  const auto hash = reopened->state_hash();
  auto it = live.find(events);
  if (it != live.end() && it->second != hash) return {false, "restart hash differs at event " + std::to_string(events)};
  if (it == live.end() && live.rbegin()->first + 1 != events)
    return {false, "restart saw " + std::to_string(events) + " events, child last reported " +
                       std::to_string(live.rbegin()->first)};
  // every reported state is reproduced by replaying that many events
  int checked = 0;
  for (auto jt = live.begin(); jt != live.end(); ++jt) {
    const bool sample = std::next(jt) == live.end() || jt->first % 97 == 0;
    if (!sample) continue;
    if (TaskStore::replay_prefix(sc.log_path, jt->first)->state_hash() != jt->second)
      return {false, "replayed prefix of " + std::to_string(jt->first) + " events differs"};
    ++checked;
  }
  {
    TaskStore again(sc);
    if (again.state_hash() != hash) return {false, "second restart differs"};
  }
  const auto killed_at = reopened->submissions().size();

  // the restarted store serves 32 concurrent HTTP clients to completion
  ServiceOptions opts;
  opts.port = 0;
  opts.threads = 32;
  TaskService service(*reopened, opts);
  const int port = service.start();
  std::atomic<int> conflicts{0}, errors{0};
  std::vector<std::thread> clients;
  const auto known = reopened->workers();
  for (int c = 0; c < 32; ++c) {
    clients.emplace_back([&, c] {
      httplib::Client cli("127.0.0.1", port);
      // half the clients resume existing workers, the rest sign up new ones
      std::vector<std::string> mine;
      for (std::size_t i = static_cast<std::size_t>(c); i < known.size(); i += 32) mine.push_back(known[i]);
      if (c % 2) {
        auto r = cli.Post("/workers");
        if (!r || r->status != 201) return void(++errors);
        mine.push_back(json::parse(r->body).at("worker_id").get<std::string>());
      }
      for (const auto& w : mine) {
        for (;;) {
          auto next = cli.Get(("/tasks/next?worker=" + w).c_str());
          if (!next) return void(++errors);
          if (next->status == 204) break;
          if (next->status != 200) return void(++errors);
          const auto task = json::parse(next->body).at("task_id");
          json body{{"task_id", task},
                    {"worker_id", w},
                    {"annotations", json::array({json{{"frame_index", 1},
                                                      {"box", {{"x", 96}, {"y", 96}, {"w", 32}, {"h", 32}}},
                                                      {"label", "qc"}}})}};
          auto sub = cli.Post("/submissions", body.dump(), "application/json");
          if (!sub || sub->status != 201) return void(++errors);
          auto dup = cli.Post("/submissions", body.dump(), "application/json");
          if (!dup || dup->status != 409) return void(++errors);
          ++conflicts;
        }
      }
    });
  }
  for (auto& t : clients) t.join();
  service.stop();

  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& s : reopened->submissions())
    if (!pairs.emplace(s.worker_id, s.task_id).second) return {false, "duplicate (worker, task) pair"};
  int complete = 0;
  for (const auto& t : reopened->tasks()) complete += t.state == TaskState::complete;
  const auto final_hash = reopened->state_hash();
  reopened.reset();
  TaskStore last(sc);
  const bool ok = errors == 0 && pairs.size() == 800 && complete == 80 && last.state_hash() == final_hash;
  return {ok, "killed after " + std::to_string(killed_at) + " submissions (" + std::to_string(events) +
                  " events); restart hash equal, " + std::to_string(checked) + " prefixes replayed; 32 clients: " +
                  std::to_string(pairs.size()) + " unique submissions, " + std::to_string(conflicts.load()) +
                  " duplicates refused, " + std::to_string(errors.load()) + " errors"};
}

Outcome determinism(const fs::path& scratch) {
  PhantomDatasetOptions opts;
  opts.count = 3;
  opts.seed = 5;
  auto cfg = write_phantom_dataset(scratch / "det-data", opts);
  cfg.scenario = fs::path(LUNGCROWD_SOURCE_DIR) / "data" / "scenarios" / "recorded_crowd.json";
  cfg.seed = 424242;
  cfg.out = scratch / "det-a";
  cfg.threads = 0;
  cmd_all(cfg);
  cfg.out = scratch / "det-b";
  cfg.threads = 1;
  cmd_all(cfg);
  const auto a = sha256_tree(scratch / "det-a");
  const auto b = sha256_tree(scratch / "det-b");
  return {a == b, "tree sha256 " + a.substr(0, 16) + (a == b ? " == " : " != ") + b.substr(0, 16)};
}

}  // namespace

int main() {
  log::set_quiet(true);
  TempDir scratch("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"mip-oracle-equivalence", mip_oracle},
      {"frame-layout", frame_layout},
      {"segmentation-phantom-suite", segmentation_suite},
      {"qc-placement-property", qc_placement},
      {"matching-semantics", matching_semantics},
      {"table-replay", [&] { return table_replay(scratch.path()); }},
      {"ideal-crowd-end-to-end", [&] { return ideal_end_to_end(scratch.path()); }},
      {"calibrated-crowd-consistency", calibrated_consistency},
      {"service-durability", [&] { return service_durability(scratch.path()); }},
      {"determinism", [&] { return determinism(scratch.path()); }},
  };
  int failures = 0;
  for (const auto& [name, fn] : checks) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (failures ? std::to_string(failures) + " acceptance check(s) failed" : "all acceptance checks passed")
            << std::endl;
  return failures ? 1 : 0;
}
