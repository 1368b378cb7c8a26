#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "lungcrowd/evaluation.hpp"
#include "lungcrowd/replay.hpp"
#include "lungcrowd/task_store.hpp"
#include "support.hpp"

using namespace lungcrowd;
using namespace lungcrowd::testing;

namespace {

double raster_overlap(const Box& a, const Box& ref) {
  std::int64_t inter = 0;
  for (int y = ref.y; y < ref.bottom(); ++y)
    for (int x = ref.x; x < ref.right(); ++x) inter += x >= a.x && x < a.right() && y >= a.y && y < a.bottom();
  return ref.area() ? static_cast<double>(inter) / static_cast<double>(ref.area()) : 0.0;
}

struct Scene {
  SegmentCatalog catalog;
  std::vector<GroundTruthNodule> gt;
  QcMarker marker;
};

// One 64x64 segment at volume origin (40, 60), slices 0-9, one 10x10 nodule
// on slices 2-4 at volume (60, 80).
Scene scene() {
  Scene s;
  auto seg = geometry_segment(64, {0, 9}, "P01", Box{40, 60, 0, 0});
  s.marker = QcMarker{"gorilla", 0, 5, Box{48, 48, 16, 16}, 1};
  seg.marker = s.marker;
  s.catalog[seg.layout.segment_id] = seg;
  GroundTruthNodule n;
  n.nodule_id = "P01-N01";
  n.patient_id = "P01";
  n.diameter_mm = 5;
  for (int z = 2; z <= 4; ++z) n.extent.push_back({z, Box{60, 80, 10, 10}});
  s.gt.push_back(n);
  return s;
}

WorkerSubmission sub(const std::string& id, const std::string& worker, std::vector<Annotation> boxes,
                     const Scene& s) {
  WorkerSubmission w;
  w.submission_id = id;
  w.worker_id = worker;
  w.segment_id = s.catalog.begin()->first;
  w.annotations = {Annotation{1, s.marker.box, AnnotationLabel::qc}};
  for (auto& b : boxes) w.annotations.push_back(b);
  return w;
}

ReplayFixture fixture() {
  return build_replay_fixture(load_recorded_outcomes(std::filesystem::path(LUNGCROWD_TEST_DATA) / "recorded_outcomes.json"));
}

}  // namespace

TEST_CASE("overlap ratio worked examples") {
  CHECK(overlap_ratio(Box{0, 0, 10, 10}, Box{0, 0, 10, 10}) == 1.0);
  CHECK(overlap_ratio(Box{5, 0, 10, 10}, Box{0, 0, 10, 10}) == 0.5);
  CHECK(overlap_ratio(Box{0, 0, 100, 100}, Box{10, 10, 4, 4}) == 1.0);  // big box covering a small nodule
  CHECK(overlap_ratio(Box{20, 20, 4, 4}, Box{0, 0, 10, 10}) == 0.0);
  CHECK(overlap_ratio(Box{0, 0, 4, 4}, Box{0, 0, 0, 5}) == 0.0);
  CHECK(intersection_over_union(Box{5, 0, 10, 10}, Box{0, 0, 10, 10}) == Catch::Approx(50.0 / 150.0));
}

TEST_CASE("overlap ratio agrees with pixel rasterization") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> pos(-20, 40), len(0, 30);
  for (int i = 0; i < 2000; ++i) {
    const Box a{pos(rng), pos(rng), len(rng), len(rng)};
    const Box r{pos(rng), pos(rng), len(rng), len(rng)};
    REQUIRE(std::abs(overlap_ratio(a, r) - raster_overlap(a, r)) < 1e-9);
  }
}

TEST_CASE("overlap ratio is scale invariant") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pos(0, 30), len(1, 20), k(2, 7);
  for (int i = 0; i < 500; ++i) {
    const Box a{pos(rng), pos(rng), len(rng), len(rng)};
    const Box r{pos(rng), pos(rng), len(rng), len(rng)};
    const int s = k(rng);
    REQUIRE(overlap_ratio(Box{a.x * s, a.y * s, a.w * s, a.h * s}, Box{r.x * s, r.y * s, r.w * s, r.h * s}) ==
            Catch::Approx(overlap_ratio(a, r)).margin(1e-12));
  }
}

TEST_CASE("exactly sixty percent is not a detection") {
  auto s = scene();
  // nodule in frame coordinates: (20, 20, 10, 10); frame 6 is keyframe 2 = slices 2-6
  const Annotation sixty{6, Box{20, 20, 6, 10}, AnnotationLabel::nodule};
  auto r = match({sub("s1", "w1", {sixty}, s)}, s.catalog, s.gt);
  CHECK_FALSE(r.nodules[0].detected);
  CHECK(r.annotations[1].classification == AnnotationClass::false_positive);

  // one more column: 70 %
  r = match({sub("s1", "w1", {Annotation{6, Box{20, 20, 7, 10}, AnnotationLabel::nodule}}, s)}, s.catalog, s.gt);
  CHECK(r.nodules[0].detected);

  // a wide nodule lets the overlap sit just above 0.6
  s.gt[0].extent = {{3, Box{40, 80, 60000, 1}}};
  s.catalog.begin()->second.layout.bbox2d = Box{40, 60, 60064, 64};
  const Annotation just_over{6, Box{0, 20, 36001, 1}, AnnotationLabel::nodule};
  r = match({sub("s1", "w1", {just_over}, s)}, s.catalog, s.gt);
  CHECK(r.annotations[1].overlap > 0.6);
  CHECK(r.nodules[0].detected);
  const Annotation exactly{6, Box{0, 20, 36000, 1}, AnnotationLabel::nodule};
  CHECK_FALSE(match({sub("s1", "w1", {exactly}, s)}, s.catalog, s.gt).nodules[0].detected);
}

TEST_CASE("annotations map to volume space through the slab and quadrant origin") {
  const auto s = scene();
  const auto& layout = s.catalog.begin()->second.layout;
  const auto m = map_annotation(layout, Annotation{0, Box{10, 10, 5, 5}, AnnotationLabel::nodule});
  CHECK(m.box == Box{50, 70, 5, 5});
  CHECK(m.slices == SliceRange{0, 4});
  CHECK(map_annotation(layout, Annotation{2, Box{0, 0, 1, 1}, AnnotationLabel::nodule}).slices == SliceRange{1, 5});
  CHECK_THROWS_AS(map_annotation(layout, Annotation{99, Box{0, 0, 1, 1}, AnnotationLabel::nodule}), Error);
}

TEST_CASE("a slab that misses the nodule's slices does not match") {
  auto s = scene();
  // keyframe 5 covers slices 5-9; the nodule sits on 2-4
  const Annotation a{15, Box{20, 20, 10, 10}, AnnotationLabel::nodule};
  CHECK_FALSE(match({sub("s1", "w1", {a}, s)}, s.catalog, s.gt).nodules[0].detected);
}

TEST_CASE("failed submissions and marker hits are kept apart") {
  auto s = scene();
  const Annotation hit{6, Box{20, 20, 10, 10}, AnnotationLabel::nodule};
  auto failed = sub("s2", "w2", {hit}, s);
  failed.annotations.erase(failed.annotations.begin());
  const auto r = match({sub("s1", "w1", {hit}, s), failed}, s.catalog, s.gt);
  CHECK(r.accepted_submissions == 1);
  CHECK(r.failed_submissions == 1);
  CHECK(r.nodules[0].worker_count == 1);
  CHECK(r.annotations.size() == 2);
  CHECK(r.annotations[0].classification == AnnotationClass::qc_hit);
  const auto m = compute_metrics(r, s.gt);
  CHECK(m.annotations == 1);
  CHECK(m.annotations_with_qc == 2);
  CHECK(m.true_positive_annotations == 1);
}

TEST_CASE("min_workers counts distinct workers") {
  auto s = scene();
  const Annotation hit{6, Box{20, 20, 10, 10}, AnnotationLabel::nodule};
  const std::vector<WorkerSubmission> subs{sub("s1", "w1", {hit, hit}, s), sub("s2", "w2", {hit}, s)};
  MatchConfig cfg;
  cfg.min_workers = 2;
  CHECK(match(subs, s.catalog, s.gt, cfg).nodules[0].detected);
  cfg.min_workers = 3;
  CHECK_FALSE(match(subs, s.catalog, s.gt, cfg).nodules[0].detected);
}

TEST_CASE("false positives cluster by overlap on shared slabs") {
  auto s = scene();
  const std::vector<WorkerSubmission> subs{
      sub("s1", "w1", {Annotation{0, Box{0, 0, 8, 8}, AnnotationLabel::nodule}}, s),
      sub("s2", "w2", {Annotation{1, Box{2, 2, 8, 8}, AnnotationLabel::nodule}}, s),
      sub("s3", "w3", {Annotation{15, Box{2, 2, 8, 8}, AnnotationLabel::nodule}}, s),
      sub("s4", "w4", {Annotation{0, Box{40, 0, 8, 8}, AnnotationLabel::nodule}}, s)};
  const auto r = match(subs, s.catalog, s.gt);
  CHECK(compute_metrics(r, s.gt).false_positive_annotations == 4);
  CHECK(r.fp_clusters.size() == 3);
}

TEST_CASE("unknown patient in ground truth is an error") {
  auto s = scene();
  s.gt[0].patient_id = "P99";
  CHECK(error_kind_of([&] { match({}, s.catalog, s.gt); }) == ErrorKind::invalid_argument);
}

TEST_CASE("raising the threshold never adds detections") {
  const auto fx = fixture();
  int prev = 1 << 30;
  for (double t : {0.0, 0.2, 0.4, 0.6, 0.8, 0.95}) {
    MatchConfig cfg;
    cfg.threshold = t;
    auto subs = fx.submissions;
    for (auto& x : subs) x.qc_status = QcStatus::pending;
    const auto m = compute_metrics(match(subs, fx.segments, fx.gt, cfg), fx.gt);
    CHECK(m.overall.detected <= prev);
    prev = m.overall.detected;
  }
  prev = 1 << 30;
  for (int w = 1; w <= 11; ++w) {
    MatchConfig cfg;
    cfg.min_workers = w;
    const auto m = compute_metrics(match(fx.submissions, fx.segments, fx.gt, cfg), fx.gt);
    CHECK(m.overall.detected <= prev);
    prev = m.overall.detected;
  }
  CHECK(prev == 0);
}

TEST_CASE("percentages round half up in integer arithmetic") {
  CHECK(format_percent(78, 91) == "85.7%");
  CHECK(format_percent(28, 30) == "93.3%");
  CHECK(format_percent(17, 18) == "94.4%");
  CHECK(format_percent(15, 15) == "100.0%");
  CHECK(format_percent(23, 24) == "95.8%");
  CHECK(format_percent(161, 178) == "90.4%");
  CHECK(format_percent(1, 16) == "6.3%");
  CHECK(format_percent(0, 7) == "0.0%");
  CHECK(format_percent(0, 0) == "n/a");
}

TEST_CASE("recorded study reproduces the published tables") {
  const auto fx = fixture();
  const auto m = compute_metrics(match(fx.submissions, fx.segments, fx.gt), fx.gt);
  const std::array<Cell, 5> want{Cell{78, 91}, Cell{28, 30}, Cell{17, 18}, Cell{15, 15}, Cell{23, 24}};
  CHECK(m.by_size == want);
  CHECK(m.overall == Cell{161, 178});
  CHECK(m.videos == 80);
  CHECK(m.accepted_submissions == 800);
  CHECK(m.annotations == 1021);
  CHECK(m.false_positive_annotations == 47);

  const auto text = render_report(m, ReportFormat::text);
  CHECK(text.find("| Total | 178 | 161 | 90.4% |") != std::string::npos);
  CHECK(text.find("| <= 4 | 91 | 78 | 85.7% |") != std::string::npos);

  std::istringstream csv(render_report(m, ReportFormat::csv));
  std::vector<std::string> rows;
  for (std::string line; std::getline(csv, line);) rows.push_back(line);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "size_bin,ground_truth,detected,sensitivity");
  CHECK(rows[1] == "<=4,91,78,85.7%");
  CHECK(rows[6] == "total,178,161,90.4%");

  MetricsReport back;
  from_json(nlohmann::json::parse(render_report(m, ReportFormat::json)), back);
  CHECK(back == m);
}

TEST_CASE("an empty study reports n/a") {
  const auto m = compute_metrics(MatchResult{}, {});
  CHECK(render_report(m, ReportFormat::text).find("| Total | 0 | 0 | n/a |") != std::string::npos);
  CHECK(render_report(m, ReportFormat::csv) == "size_bin,ground_truth,detected,sensitivity\ntotal,0,0,n/a\n");
}

TEST_CASE("worker-count statistics use the population deviation") {
  auto s = scene();
  const Annotation hit{6, Box{20, 20, 10, 10}, AnnotationLabel::nodule};
  std::vector<WorkerSubmission> subs;
  for (int i = 0; i < 4; ++i) subs.push_back(sub("s" + std::to_string(i), "w" + std::to_string(i), {hit}, s));
  auto second = s.gt[0];
  second.nodule_id = "P01-N02";
  second.diameter_mm = 7;
  for (auto& e : second.extent) e.box.x += 25;
  s.gt.push_back(second);
  subs.push_back(sub("s9", "w9", {Annotation{6, Box{45, 20, 10, 10}, AnnotationLabel::nodule}}, s));
  const auto m = compute_metrics(match(subs, s.catalog, s.gt), s.gt);
  const auto& medium = m.worker_counts[1];
  CHECK(medium.nodules == 2);
  CHECK(medium.mean == 2.5);
  CHECK(medium.median == 2.5);
  CHECK(medium.stddev == 1.5);
}

TEST_CASE("recorded ground truth summary") {
  const auto stats = summarize_ground_truth(fixture().gt);
  CHECK(stats.size_histogram == std::array<int, 5>{91, 30, 18, 15, 24});
  CHECK(stats.total == 178);
  CHECK(stats.nodules_per_patient.size() == 20);
  CHECK(stats.mean_per_patient * static_cast<double>(stats.nodules_per_patient.size()) ==
        Catch::Approx(static_cast<double>(stats.total)));
}

TEST_CASE("replay through the task store keeps every recorded submission") {
  const auto fx = fixture();
  TaskStore store(StoreConfig{});
  const auto stored = replay_into(store, fx);
  CHECK(stored.size() == 805);
  int failed = 0;
  for (const auto& s : stored) failed += s.qc_status == QcStatus::failed;
  CHECK(failed == 5);
  const auto m = compute_metrics(match(stored, fx.segments, fx.gt), fx.gt);
  CHECK(m.overall == Cell{161, 178});
  CHECK(m.failed_submissions == 5);
  CHECK(store.workers().size() == 143);
}
