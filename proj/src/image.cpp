#include "ntd/image.hpp"

#include "ntd/error.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ntd {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

[[noreturn]] void fail_format(const std::filesystem::path& path, const std::string& reason) {
  throw ValidationError(path.string() + ": " + reason);
}

// Reads one whitespace/comment-delimited header token of a netpbm file.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open file");
  if (pnm_token(in) != "P5") fail_format(path, "malformed header (expected binary P5 PGM)");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(pnm_token(in));
    height = std::stoi(pnm_token(in));
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    fail_format(path, "malformed header");
  }
  if (width <= 0 || height <= 0) fail_format(path, "malformed header (non-positive size)");
  if (maxval != 255) fail_format(path, "unsupported bit depth (maxval " + std::to_string(maxval) + ")");

  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) fail_format(path, "truncated pixel data");

  GrayImage img(height, width);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = bytes[i] / 255.0;
  return img;
}

GrayImage load_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    std::string msg = image.message;
    png_image_free(&image);
    fail_format(path, "malformed PNG (" + msg + ")");
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    fail_format(path, "unsupported bit depth (16-bit PNG)");
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    fail_format(path, "malformed PNG (" + msg + ")");
  }

  GrayImage img(image.height, image.width);
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) sum += buffer[i * channels + c];
    img.data()[i] = sum / (255.0 * channels);
  }
  return img;
}

std::vector<std::uint8_t> quantize(const GrayImage& img) {
  std::vector<std::uint8_t> bytes(img.size());
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.data()[i], 0.0, 1.0);
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return bytes;
}

png_image gray_png_header(const GrayImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.cols());
  image.height = static_cast<png_uint_32>(img.rows());
  image.format = PNG_FORMAT_GRAY;
  return image;
}

// 5x7 digits, one byte per row, bit 4 = leftmost column.
constexpr std::array<std::array<std::uint8_t, 7>, 10> kDigits = {{
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
}};

void plot(GrayImage& img, int row, int col, double value) {
  if (row >= 0 && col >= 0 && row < img.rows() && col < img.cols()) img(row, col) = value;
}

void draw_ring(GrayImage& img, double row, double col, int radius, double value) {
  // Pixels whose distance to the centre rounds to the radius.
  const int r0 = static_cast<int>(std::floor(row)) - radius - 1;
  const int c0 = static_cast<int>(std::floor(col)) - radius - 1;
  for (int r = r0; r <= r0 + 2 * radius + 3; ++r) {
    for (int c = c0; c <= c0 + 2 * radius + 3; ++c) {
      const double d = std::hypot(r - row, c - col);
      if (std::abs(d - radius) < 0.5) plot(img, r, c, value);
    }
  }
}

void draw_number(GrayImage& img, int top, int left, int number, double value) {
  const std::string text = std::to_string(number);
  for (std::size_t k = 0; k < text.size(); ++k) {
    const auto* glyph = digit_glyph(text[k] - '0');
    const int x0 = left + static_cast<int>(k) * (kGlyphWidth + 1);
    for (int gr = 0; gr < kGlyphHeight; ++gr)
      for (int gc = 0; gc < kGlyphWidth; ++gc)
        if (glyph[gr] & (1u << (kGlyphWidth - 1 - gc))) plot(img, top + gr, x0 + gc, value);
  }
}

}  // namespace

const std::uint8_t* digit_glyph(int d) { return kDigits.at(static_cast<std::size_t>(d)).data(); }

GrayImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError(path.string() + ": file not found");
  const std::string ext = lower_extension(path);
  if (ext == ".png") return load_png(path);
  return load_pgm(path);
}

void save_image(const GrayImage& img, const std::filesystem::path& path) {
  if (!img.allFinite()) throw ValidationError(path.string() + ": image has non-finite pixels");
  const auto bytes = quantize(img);
  if (lower_extension(path) == ".png") {
    png_image image = gray_png_header(img);
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
      throw IoError(path.string() + ": cannot write PNG (" + image.message + ")");
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  const auto bytes = quantize(img);
  png_image image = gray_png_header(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, bytes.data(), 0, nullptr))
    throw IoError(std::string("PNG encoding failed: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, bytes.data(), 0, nullptr))
    throw IoError(std::string("PNG encoding failed: ") + image.message);
  out.resize(size);
  return out;
}

GrayImage render_overlay(const GrayImage& img, const PeakReport& report, const OverlayStyle& style) {
  GrayImage out = img;
  std::vector<Peak> peaks = report.peaks;
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  const int radius = std::max(1, style.marker_radius);
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    draw_ring(out, peaks[i].row, peaks[i].col, radius, style.intensity);
    const auto [top, left] = label_anchor(peaks[i].row, peaks[i].col, radius);
    draw_number(out, top, left, static_cast<int>(i) + 1, style.intensity);
  }
  return out;
}

}  // namespace ntd
