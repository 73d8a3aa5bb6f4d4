#pragma once
// Independent reference implementations used by the unit and acceptance tests.

#include "ntd/image.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Direct O(N^2 M^2) full linear convolution.
inline ntd::GrayImage convolve_full(const ntd::GrayImage& a, const ntd::GrayImage& b) {
  ntd::GrayImage out = ntd::GrayImage::Zero(a.rows() + b.rows() - 1, a.cols() + b.cols() - 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index k = 0; k < b.rows(); ++k)
        for (Eigen::Index l = 0; l < b.cols(); ++l) out(i + k, j + l) += a(i, j) * b(k, l);
  return out;
}

// "same" crop about the mask centre.
inline ntd::GrayImage convolve_same(const ntd::GrayImage& a, const ntd::GrayImage& b) {
  const ntd::GrayImage full = convolve_full(a, b);
  return full.block((b.rows() - 1) / 2, (b.cols() - 1) / 2, a.rows(), a.cols());
}

// Recursive flood fill labeling; labels 1..n in raster order of first pixel.
struct FloodLabels {
  Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels;
  int count = 0;
};

inline void flood(const ntd::BinaryMap& bin, FloodLabels& out, int r, int c, int label, int connectivity) {
  if (r < 0 || c < 0 || r >= bin.rows() || c >= bin.cols()) return;
  if (!bin(r, c) || out.labels(r, c) != 0) return;
  out.labels(r, c) = label;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      if (connectivity == 4 && dr != 0 && dc != 0) continue;
      flood(bin, out, r + dr, c + dc, label, connectivity);
    }
}

inline FloodLabels flood_label(const ntd::BinaryMap& bin, int connectivity) {
  FloodLabels out;
  out.labels.setZero(bin.rows(), bin.cols());
  for (int r = 0; r < bin.rows(); ++r)
    for (int c = 0; c < bin.cols(); ++c)
      if (bin(r, c) && out.labels(r, c) == 0) flood(bin, out, r, c, ++out.count, connectivity);
  return out;
}

inline ntd::GrayImage random_image(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ntd::GrayImage img(rows, cols);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = u(gen);
  return img;
}

inline ntd::BinaryMap random_binary(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols, double density) {
  std::bernoulli_distribution b(density);
  ntd::BinaryMap bin(rows, cols);
  for (Eigen::Index i = 0; i < bin.size(); ++i) bin.data()[i] = b(gen);
  return bin;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("ntd_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
