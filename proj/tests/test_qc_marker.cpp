#include <catch2/catch_amalgamated.hpp>

#include "lungcrowd/qc_marker.hpp"
#include "support.hpp"

using namespace lungcrowd;
using namespace lungcrowd::testing;

TEST_CASE("marker avoids dense ground truth and sits on lung") {
  const auto seg = geometry_segment(96, {0, 39}, "P01", Box{20, 30, 0, 0});
  const auto gt = dense_ground_truth(seg.layout, 40, 77);
  const auto sprite = default_sprite(16);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = place_marker(seg, gt, sprite, seed);
    const auto check = check_marker(seg, gt, m);
    REQUIRE(check.gt_pixels_under_marker == 0);
    REQUIRE(check.frames_short_of_coverage == 0);
    REQUIRE(contains(seg.layout.frame_bounds(), m.box));
  }
}

TEST_CASE("marker span lasts two seconds of playback") {
  const auto seg = geometry_segment(64, {0, 19}, "P01");
  const auto m = place_marker(seg, {}, default_sprite(16), 5);
  CHECK(m.last_frame - m.first_frame + 1 == 6);  // 2 s at 3 fps

  auto cfg = RenderConfig{};
  cfg.fps = 50;
  const auto short_seg = geometry_segment(64, {0, 9}, "P01", {}, cfg);
  const auto clamped = place_marker(short_seg, {}, default_sprite(16), 5);
  CHECK(clamped.first_frame == 0);
  CHECK(clamped.last_frame == short_seg.layout.frame_count() - 1);
}

TEST_CASE("placement is deterministic in the seed") {
  const auto seg = geometry_segment(80, {0, 29}, "P02");
  const auto gt = dense_ground_truth(seg.layout, 20, 3);
  CHECK(place_marker(seg, gt, default_sprite(), 99) == place_marker(seg, gt, default_sprite(), 99));
}

TEST_CASE("impossible placement is an algorithm error") {
  const auto seg = geometry_segment(32, {0, 9}, "P03");
  GroundTruthNodule wall;
  wall.nodule_id = "P03-N00";
  wall.patient_id = "P03";
  wall.diameter_mm = 30;
  for (int z = 0; z <= 9; ++z) wall.extent.push_back({z, Box{0, 0, 32, 32}});
  MarkerConfig cfg;
  cfg.max_attempts = 50;
  CHECK(error_kind_of([&] { place_marker(seg, {wall}, default_sprite(16), 1, cfg); }) == ErrorKind::algorithm);
}

TEST_CASE("qc status follows the hit rule") {
  const QcMarker m{"gorilla", 10, 15, Box{40, 40, 20, 20}, 1};
  const Annotation exact{12, m.box, AnnotationLabel::qc};
  const Annotation half{12, Box{40, 40, 10, 20}, AnnotationLabel::nodule};
  const Annotation under_half{12, Box{40, 40, 9, 20}, AnnotationLabel::qc};
  const Annotation wrong_frame{16, m.box, AnnotationLabel::qc};
  CHECK(qc_status_for(m, {exact}) == QcStatus::passed);
  CHECK(qc_status_for(m, {half}) == QcStatus::passed);
  CHECK(qc_status_for(m, {under_half}) == QcStatus::failed);
  CHECK(qc_status_for(m, {wrong_frame}) == QcStatus::failed);
  CHECK(qc_status_for(m, {}) == QcStatus::failed);
  CHECK(qc_status_for(m, {under_half, exact}) == QcStatus::passed);
}

TEST_CASE("compositing only touches the spanned frames inside the box") {
  std::mt19937_64 rng(2);
  const Dims3 d{40, 40, 12};
  auto mask = LungMask::zeros(d, {1, 1, 1});
  std::fill(mask.bits.begin(), mask.bits.end(), 1);
  const auto vol = random_volume(rng, d);
  const auto seg = render_segment(vol, quadrant_from_mask(mask), RenderConfig{}, "P01");
  const auto sprite = default_sprite(16);
  const auto m = place_marker(seg, {}, sprite, 4);
  const auto out = composite_marker(seg, m, sprite);
  REQUIRE(out.marker == m);
  for (int f = 0; f < seg.layout.frame_count(); ++f) {
    const auto& a = seg.frames[static_cast<std::size_t>(f)];
    const auto& b = out.frames[static_cast<std::size_t>(f)];
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        const bool inside = m.visible_on(f) && x >= m.box.x && x < m.box.right() && y >= m.box.y && y < m.box.bottom();
        if (!inside) REQUIRE(a.at(x, y) == b.at(x, y));
      }
  }
}

TEST_CASE("default sprite has an opaque body and a transparent surround") {
  const auto s = default_sprite(32);
  CHECK(s.pixels.width == 32);
  int opaque = 0;
  for (const auto& p : s.pixels.pixels) opaque += p.a == 255;
  CHECK(opaque > 32 * 32 / 5);
  CHECK(opaque < 32 * 32);
}
