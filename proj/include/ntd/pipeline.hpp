#pragma once

#include "ntd/fourier.hpp"
#include "ntd/image.hpp"
#include "ntd/neural.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace ntd {

/// Everything is sized from the largest expected pit radius.
struct PipelineConfig {
  double max_track_radius = 9.0;
  double sigma_factor = 0.5;  // Gaussian sigma / max_track_radius
  double disk_factor = 1.0;   // disk radius / max_track_radius
  int mask_size = 37;         // odd
  double lambda = 1e-3;
  double min_peak_area = 0.0;
  int connectivity = 8;  // 4 or 8

  /// Defaults derived from the radius: mask 4R+1, minimum area 4% of the disk.
  static PipelineConfig for_radius(double max_track_radius);

  double sigma() const { return sigma_factor * max_track_radius; }
  double disk_radius() const { return disk_factor * max_track_radius; }

  /// Throws ValidationError when an invariant does not hold.
  void validate() const;
};

double default_min_peak_area(double disk_radius);

nlohmann::json config_to_json(const PipelineConfig& cfg);
/// Missing fields take the for_radius() defaults of the given radius.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a of the canonical JSON form, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);

GrayImage gaussian_mask(const PipelineConfig& cfg);
GrayImage disk_mask(const PipelineConfig& cfg);

/// Non-negative response map, same size as the frame.
using ResponseMap = GrayImage;

/// Deconvolve-then-convolve on an already inverted image, without clamping.
/// The input is extended by symmetric reflection (mask_size pixels per side)
/// so the frame border does not register as an edge.
GrayImage enhance_linear(const GrayImage& inverted, const PipelineConfig& cfg);

/// Inverts polarity (dark pits become positive), runs enhance_linear and clamps
/// negatives to zero.
ResponseMap enhance(const GrayImage& img, const PipelineConfig& cfg);

/// Conventional matched filter without the deconvolution step (reference).
ResponseMap convolve_only(const GrayImage& img, const PipelineConfig& cfg);

double average_intensity(const ResponseMap& resp);

/// Feature vector fed to the threshold model; [0] is the average intensity.
std::vector<double> response_features(const ResponseMap& resp);

/// Strict: pixel set iff resp > t.
BinaryMap apply_threshold(const ResponseMap& resp, double t);

struct ComponentLabels {
  Image<int> labels;  // 0 = background, 1..count in raster order of first pixel
  int count = 0;
};

ComponentLabels label_components(const BinaryMap& bin, int connectivity);

/// Components under cfg.connectivity with area >= cfg.min_peak_area, each with
/// its response-weighted centroid; sorted by (row, col).
PeakReport count_peaks(const BinaryMap& bin, const PipelineConfig& cfg, const ResponseMap& resp);

struct FrameAnalysis {
  PeakReport report;
  ResponseMap response;
  double threshold = 0.0;
};

FrameAnalysis analyze_response(const ResponseMap& resp, const PipelineConfig& cfg, double threshold);
FrameAnalysis analyze_frame(const GrayImage& img, const PipelineConfig& cfg, const MlpModel& model);

}  // namespace ntd
