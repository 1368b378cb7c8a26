#include <catch2/catch_amalgamated.hpp>

#include "lungcrowd/mip.hpp"
#include "support.hpp"

using namespace lungcrowd;
using namespace lungcrowd::testing;

TEST_CASE("keyframes equal the brute-force slab maximum") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> side(6, 16);
  for (int trial = 0; trial < 15; ++trial) {
    const Dims3 d{side(rng), side(rng), side(rng)};
    const auto vol = random_volume(rng, d);
    const auto q = quadrant_from_mask(random_mask(rng, d));
    if (q.empty) continue;
    RenderConfig cfg;
    cfg.slab_thickness = std::min(3, q.slice_range.length());
    const auto seg = render_segment(vol, q, cfg, "P01");
    for (std::size_t k = 0; k < seg.layout.slab_table.size(); ++k) {
      const auto& frame = seg.frames[static_cast<std::size_t>(keyframe_index(seg.layout, static_cast<int>(k)))];
      REQUIRE(frame.pixels == brute_slab_max(vol, q, seg.layout.slab_table[k], cfg.window));
    }
  }
}

TEST_CASE("ten-slice quadrant renders sixteen frames") {
  const auto q = block_quadrant(8, 8, {0, 9});
  const auto layout = plan_segment(q, RenderConfig{}, "P01");
  REQUIRE(layout.frame_count() == 16);
  REQUIRE(layout.slab_table.size() == 6);
  for (int k = 0; k < 6; ++k) CHECK(layout.slab_table[static_cast<std::size_t>(k)] == SliceRange{k, k + 4});

  // keyframes 0,3,6,...; in between, 1/3 stays on the earlier slab and 2/3 moves on
  CHECK(frame_to_slab_index(layout, 0) == 0);
  CHECK(frame_to_slab_index(layout, 1) == 0);
  CHECK(frame_to_slab_index(layout, 2) == 1);
  CHECK(frame_to_slab_index(layout, 3) == 1);
  CHECK(frame_to_slab(layout, 15) == SliceRange{5, 9});
  CHECK_THROWS_AS(frame_to_slab(layout, 16), Error);
  CHECK_THROWS_AS(frame_to_slab(layout, -1), Error);
}

TEST_CASE("a midpoint blend maps to the later slab") {
  RenderConfig cfg;
  cfg.interp_frames = 1;
  const auto layout = plan_segment(block_quadrant(4, 4, {0, 6}), cfg, "P01");
  CHECK(layout.frames[1].kind == FrameKind::interpolated);
  CHECK(layout.frames[1].fraction == 0.5);
  CHECK(frame_to_slab_index(layout, 1) == 1);
}

TEST_CASE("stride larger than one skips slices") {
  RenderConfig cfg;
  cfg.slab_thickness = 3;
  cfg.slab_stride = 2;
  cfg.interp_frames = 0;
  const auto layout = plan_segment(block_quadrant(4, 4, {10, 19}), cfg, "P01");
  // (10 - 3) / 2 + 1 keyframes
  REQUIRE(layout.slab_table.size() == 4);
  CHECK(layout.slab_table.back() == SliceRange{16, 18});
  CHECK(layout.frame_count() == 4);
}

TEST_CASE("interpolation rounds half away from zero") {
  Frame a{2, 1, {0, 255}, {}};
  Frame b{2, 1, {1, 0}, {}};
  const auto mid = interpolate(a, b, 0.5);
  CHECK(mid.pixels[0] == 1);
  CHECK(mid.pixels[1] == 128);
  CHECK(interpolate(a, b, 0.0).pixels == a.pixels);
  CHECK(interpolate(a, b, 1.0).pixels == b.pixels);
}

TEST_CASE("slab outside the quadrant is rejected") {
  std::mt19937_64 rng(1);
  const Dims3 d{4, 4, 6};
  auto mask = LungMask::zeros(d, {1, 1, 1});
  std::fill(mask.bits.begin(), mask.bits.end(), 1);
  const auto q = quadrant_from_mask(mask);
  const auto vol = random_volume(rng, d);
  CHECK_THROWS_AS(slab_mip(vol, q, 3, RenderConfig{}), Error);
  CHECK_NOTHROW(slab_mip(vol, q, 1, RenderConfig{}));
}

TEST_CASE("exported frames load back unchanged") {
  TempDir dir("mip");
  std::mt19937_64 rng(9);
  const Dims3 d{10, 9, 8};
  const auto vol = random_volume(rng, d);
  auto mask = LungMask::zeros(d, {1, 1, 1});
  std::fill(mask.bits.begin(), mask.bits.end(), 1);
  const auto seg = render_segment(vol, quadrant_from_mask(mask), RenderConfig{}, "P07");
  export_frames(seg, dir.path() / seg.layout.segment_id);
  const auto back = load_segment(dir.path() / seg.layout.segment_id);
  CHECK(back.layout == seg.layout);
  REQUIRE(back.frames.size() == seg.frames.size());
  for (std::size_t i = 0; i < seg.frames.size(); ++i) CHECK(back.frames[i].pixels == seg.frames[i].pixels);
  CHECK(back.footprints == seg.footprints);
}
