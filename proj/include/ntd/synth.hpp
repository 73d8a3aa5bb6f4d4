#pragma once

#include "ntd/datastore.hpp"
#include "ntd/image.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ntd {

enum class Category { Accel0, Accel30, Field };

std::string to_string(Category c);
Category parse_category(const std::string& name);

/// Parameters of a synthetic NTD-like frame. Tracks are dark ellipses on a
/// bright background; all lengths in pixels.
struct SceneSpec {
  int frame_size = 512;
  Category category = Category::Accel0;
  double track_count_mean = 10.0;  // Poisson mean
  double r_min = 7.0;
  double r_max = 9.0;
  double eccentricity = 0.0;  // field frames mix circles and ellipses
  double pit_contrast = 0.5;  // fractional darkening inside a pit
  double noise_sigma = 0.02;
  double scratch_count_mean = 2.0;
  double gradient_amplitude = 0.03;
  double border_partial_fraction = 0.1;
  double blob_count_mean = 0.0;  // diffuse surface-defect smudges
  double background_min = 0.65;  // per-frame background level range
  double background_max = 0.9;
  double min_separation = 6.0;  // gap between pit edges

  /// Per-category defaults (0 deg: circles; 30 deg: e=0.5 ellipses; field:
  /// mixed shapes with more scratches, blobs and noise).
  static SceneSpec defaults(Category category);

  /// Field frames dominated by artifacts: few pits, many scratches and blobs,
  /// and a wide background range.
  static SceneSpec defect_heavy();

  void validate() const;
};

nlohmann::json scene_to_json(const SceneSpec& spec);
SceneSpec scene_from_json(const nlohmann::json& j);

struct Track {
  double row = 0.0, col = 0.0;  // ellipse centre
  double a = 0.0, b = 0.0;      // semi-axes, a >= b
  double rotation = 0.0;        // radians
  double visible_fraction = 1.0;
};

struct GroundTruth {
  std::vector<Track> tracks;
};

nlohmann::json truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const nlohmann::json& j);
void save_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth load_truth(const std::filesystem::path& path);

struct SyntheticFrame {
  GrayImage image;
  GroundTruth truth;
};

/// Bit-identical for identical (spec, seed).
SyntheticFrame generate_frame(const SceneSpec& spec, std::uint64_t seed);

/// Renders the given tracks on a background drawn from (spec, seed), including
/// the scene's scratches, blobs and noise.
GrayImage render_frame(const SceneSpec& spec, const GroundTruth& truth, std::uint64_t seed);

/// Fraction of the ellipse's area inside the frame, by 8x8 supersampling.
double visible_fraction(const Track& t, int frame_size);

/// Writes frames/<id>.pgm, truth/<id>.json and manifest.json under out_dir.
/// Frame i uses seed base_seed + i; ids are <category>_<iiii>.
DatasetManifest generate_corpus(const SceneSpec& spec, int count, std::uint64_t base_seed,
                                const std::filesystem::path& out_dir, unsigned threads = 1);

}  // namespace ntd
