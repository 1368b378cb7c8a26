#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "lungcrowd/volume.hpp"
#include "support.hpp"

using namespace lungcrowd;
using lungcrowd::testing::TempDir;
using lungcrowd::testing::error_kind_of;

TEST_CASE("lung window maps reference densities to fixed gray levels") {
  const DisplayWindow lung;  // level -600, width 1500
  CHECK(window_to_gray(-1000, lung) == 60);
  CHECK(window_to_gray(-600, lung) == 128);
  CHECK(window_to_gray(-1350, lung) == 0);
  CHECK(window_to_gray(-2000, lung) == 0);
  CHECK(window_to_gray(150, lung) == 255);
  CHECK(window_to_gray(3000, lung) == 255);
}

TEST_CASE("windowing is monotone in HU") {
  const DisplayWindow w{-400, 1200};
  int prev = -1;
  for (int hu = kMinHu; hu <= kMaxHu; ++hu) {
    const int g = window_to_gray(hu, w);
    REQUIRE(g >= prev);
    prev = g;
  }
}

TEST_CASE("window width must be positive") {
  CHECK(error_kind_of([] { DisplayWindow{0, 0}.validate(); }) == ErrorKind::invalid_argument);
}

TEST_CASE("volume constructor rejects bad geometry and samples") {
  CHECK(error_kind_of([] { CtVolume({2, 2, 2}, {1, 1, 1}, std::vector<Hu>(7)); }) == ErrorKind::invalid_argument);
  CHECK(error_kind_of([] { CtVolume({0, 2, 2}, {1, 1, 1}, {}); }) == ErrorKind::invalid_argument);
  CHECK(error_kind_of([] { CtVolume({1, 1, 1}, {1, 0, 1}, std::vector<Hu>(1)); }) == ErrorKind::invalid_argument);
  CHECK(error_kind_of([] { CtVolume({1, 1, 1}, {1, 1, 1}, std::vector<Hu>{-1100}); }) ==
        ErrorKind::invalid_argument);
}

TEST_CASE("volume and mask files round trip") {
  TempDir dir("volume");
  std::mt19937_64 rng(3);
  const auto vol = lungcrowd::testing::random_volume(rng, {7, 5, 3});
  save_volume(vol, dir / "a.ctvol");
  CHECK(load_volume(dir / "a.ctvol") == vol);

  MaskFile mask{{4, 3, 2}, {0.7, 0.7, 2.0}, std::vector<std::uint8_t>(24, 0)};
  mask.bits[5] = mask.bits[23] = 1;
  save_mask(mask, dir / "a.mask");
  const auto back = load_mask(dir / "a.mask");
  CHECK(back.dims == mask.dims);
  CHECK(back.spacing == mask.spacing);
  CHECK(back.bits == mask.bits);
}

TEST_CASE("truncated payload and bad header are format errors") {
  TempDir dir("volume-bad");
  std::mt19937_64 rng(4);
  save_volume(lungcrowd::testing::random_volume(rng, {4, 4, 4}), dir / "v.ctvol");
  std::filesystem::resize_file(dir / "v.ctvol", std::filesystem::file_size(dir / "v.ctvol") - 1);
  CHECK(error_kind_of([&] { load_volume(dir / "v.ctvol"); }) == ErrorKind::format);

  std::ofstream(dir / "h.ctvol") << "CTVOL 2\ndims 1 1 1\nspacing 1 1 1\n\n\0\0";
  CHECK(error_kind_of([&] { load_volume(dir / "h.ctvol"); }) == ErrorKind::format);

  CHECK(error_kind_of([&] { load_volume(dir / "missing.ctvol"); }) == ErrorKind::io);
}

TEST_CASE("axial slice reads the right plane") {
  std::vector<Hu> v(2 * 2 * 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<Hu>(i);
  const CtVolume vol({2, 2, 3}, {1, 1, 1}, v);
  const auto s = axial_slice(vol, 2);
  CHECK(s.width == 2);
  CHECK(s.at(1, 1) == 11);
  CHECK(error_kind_of([&] { axial_slice(vol, 3); }) == ErrorKind::invalid_argument);
}
