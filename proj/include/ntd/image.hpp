#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ntd {

/// Row-major dense raster. Index as img(row, col).
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// The universal carrier for frames, masks and response maps. Frames read from
/// disk live in [0,1]; response maps may exceed that range but stay finite.
using GrayImage = Image<double>;

using BinaryMap = Image<bool>;

struct Peak {
  double row = 0.0;  // intensity-weighted centroid
  double col = 0.0;
  int area = 0;
  int top = 0, left = 0, bottom = 0, right = 0;  // inclusive bbox
  double max_response = 0.0;
};

struct PeakReport {
  int count = 0;
  std::vector<Peak> peaks;
};

struct OverlayStyle {
  double intensity = 1.0;
  int marker_radius = 6;
};

GrayImage load_image(const std::filesystem::path& path);

/// Clamps to [0,1] and quantizes to 8 bits. `.png` writes PNG, anything else P5 PGM.
void save_image(const GrayImage& img, const std::filesystem::path& path);

/// 8-bit PNG encoding of an image, used by the HTTP preview endpoint.
std::vector<std::uint8_t> encode_png(const GrayImage& img);

/// Copy of `img` with a ring at every peak and its 1-based ordinal drawn in a
/// 5x7 bitmap font. Ordinals follow centroid (row, col) order.
GrayImage render_overlay(const GrayImage& img, const PeakReport& report, const OverlayStyle& style = {});

/// Bitmap rows for digit d (7 rows, 5 low bits each, MSB = leftmost column).
const std::uint8_t* digit_glyph(int d);
inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

/// Ordinal text anchor for a marker at (row, col): top-left of the first glyph.
inline std::pair<int, int> label_anchor(double row, double col, int marker_radius) {
  return {static_cast<int>(std::lround(row)) - kGlyphHeight / 2,
          static_cast<int>(std::lround(col)) + marker_radius + 2};
}

inline bool all_finite(const GrayImage& img) { return img.allFinite(); }

}  // namespace ntd
