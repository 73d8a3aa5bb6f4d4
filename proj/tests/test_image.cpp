#include "ntd/error.hpp"
#include "ntd/image.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <fstream>

using ntd::GrayImage;

namespace {

GrayImage ramp(int rows, int cols) {
  GrayImage img(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) img(r, c) = ((r * cols + c) % 256) / 255.0;
  return img;
}

}  // namespace

TEST_CASE("pgm and png round trip at 8 bits") {
  const auto dir = oracle::scratch_dir("image_rt");
  const GrayImage img = ramp(17, 23);
  for (const char* name : {"a.pgm", "a.png"}) {
    ntd::save_image(img, dir / name);
    const GrayImage back = ntd::load_image(dir / name);
    REQUIRE(back.rows() == 17);
    REQUIRE(back.cols() == 23);
    CHECK((back - img).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("save_image clamps out-of-range values") {
  const auto dir = oracle::scratch_dir("image_clamp");
  GrayImage img(1, 3);
  img << -0.5, 0.5, 7.0;
  ntd::save_image(img, dir / "c.pgm");
  const GrayImage back = ntd::load_image(dir / "c.pgm");
  CHECK(back(0, 0) == 0.0);
  CHECK(back(0, 1) == doctest::Approx(128.0 / 255.0));
  CHECK(back(0, 2) == 1.0);
}

TEST_CASE("pgm header comments are skipped") {
  const auto dir = oracle::scratch_dir("image_comment");
  {
    std::ofstream out(dir / "c.pgm", std::ios::binary);
    out << "P5\n# made by hand\n2 1\n255\n";
    out.put(static_cast<char>(0));
    out.put(static_cast<char>(255));
  }
  const GrayImage img = ntd::load_image(dir / "c.pgm");
  CHECK(img(0, 0) == 0.0);
  CHECK(img(0, 1) == 1.0);
}

TEST_CASE("16-bit pgm is rejected") {
  const auto dir = oracle::scratch_dir("image_16");
  {
    std::ofstream out(dir / "d.pgm", std::ios::binary);
    out << "P5\n1 1\n65535\n";
    out.put(0);
    out.put(1);
  }
  CHECK_THROWS_WITH_AS(ntd::load_image(dir / "d.pgm"), doctest::Contains("bit depth"), ntd::ValidationError);
}

TEST_CASE("missing and corrupt files raise IoError or ValidationError") {
  const auto dir = oracle::scratch_dir("image_bad");
  CHECK_THROWS_AS(ntd::load_image(dir / "nope.png"), ntd::IoError);
  {
    std::ofstream out(dir / "bad.png", std::ios::binary);
    out << "not an image";
  }
  CHECK_THROWS_AS(ntd::load_image(dir / "bad.png"), ntd::Error);
}

TEST_CASE("encode_png decodes to the same pixels") {
  const auto dir = oracle::scratch_dir("image_encode");
  const GrayImage img = ramp(9, 11);
  const auto bytes = ntd::encode_png(img);
  REQUIRE(bytes.size() > 8);
  CHECK(bytes[1] == 'P');
  {
    std::ofstream out(dir / "e.png", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK((ntd::load_image(dir / "e.png") - img).abs().maxCoeff() < 1e-12);
}

TEST_CASE("overlay without peaks is the original frame") {
  const GrayImage img = ramp(32, 32);
  CHECK((ntd::render_overlay(img, {}) - img).abs().maxCoeff() == 0.0);
}

TEST_CASE("overlay draws a ring and the ordinal glyph") {
  const GrayImage img = GrayImage::Zero(64, 64);
  ntd::PeakReport report;
  report.count = 1;
  report.peaks.push_back({30.0, 20.0, 10, 28, 18, 32, 22, 1.0});
  const GrayImage out = ntd::render_overlay(img, report);
  CHECK(out(30, 26) == 1.0);  // on the ring, radius 6
  CHECK(out(24, 20) == 1.0);
  CHECK(out(30, 20) == 0.0);  // centre untouched
  const auto [tr, tc] = ntd::label_anchor(30.0, 20.0, 6);
  const std::uint8_t* one = ntd::digit_glyph(1);
  int drawn = 0, expected = 0;
  for (int r = 0; r < ntd::kGlyphHeight; ++r)
    for (int c = 0; c < ntd::kGlyphWidth; ++c) {
      const bool bit = (one[r] >> (ntd::kGlyphWidth - 1 - c)) & 1;
      expected += bit;
      drawn += bit && out(tr + r, tc + c) == 1.0;
    }
  CHECK(expected > 0);
  CHECK(drawn == expected);
}

TEST_CASE("overlay clips markers at the frame edge") {
  const GrayImage img = GrayImage::Zero(10, 10);
  ntd::PeakReport report;
  report.count = 1;
  report.peaks.push_back({0.0, 9.0, 3, 0, 8, 1, 9, 1.0});
  CHECK_NOTHROW(ntd::render_overlay(img, report));
}
