#include "ntd/synth.hpp"

#include "ntd/error.hpp"
#include "ntd/parallel.hpp"
#include "ntd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace ntd {
namespace {

constexpr double kPi = std::numbers::pi;

struct Segment {
  double r0, c0, r1, c1;
  double width;
  double contrast;
};

double segment_distance(const Segment& s, double r, double c) {
  const double dr = s.r1 - s.r0, dc = s.c1 - s.c0;
  const double len2 = dr * dr + dc * dc;
  double t = len2 > 0.0 ? ((r - s.r0) * dr + (c - s.c0) * dc) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(r - s.r0 - t * dr, c - s.c0 - t * dc);
}

bool inside_ellipse(const Track& t, double r, double c) {
  const double dr = r - t.row, dc = c - t.col;
  const double u = dc * std::cos(t.rotation) + dr * std::sin(t.rotation);
  const double v = -dc * std::sin(t.rotation) + dr * std::cos(t.rotation);
  return (u / t.a) * (u / t.a) + (v / t.b) * (v / t.b) <= 1.0;
}

// Soft-edged darkening of one pit: coverage falls from 1 to 0 across one pixel
// at the boundary.
void draw_pit(GrayImage& img, const Track& t, double contrast) {
  const int n = static_cast<int>(img.rows());
  const double extent = t.a + 2.0;
  const int r0 = std::max(0, static_cast<int>(std::floor(t.row - extent)));
  const int r1 = std::min(n - 1, static_cast<int>(std::ceil(t.row + extent)));
  const int c0 = std::max(0, static_cast<int>(std::floor(t.col - extent)));
  const int c1 = std::min(static_cast<int>(img.cols()) - 1, static_cast<int>(std::ceil(t.col + extent)));
  const double cr = std::cos(t.rotation), sr = std::sin(t.rotation);
  const double edge_scale = std::sqrt(t.a * t.b);
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const double dr = r - t.row, dc = c - t.col;
      const double u = dc * cr + dr * sr;
      const double v = -dc * sr + dr * cr;
      const double rho = std::sqrt((u / t.a) * (u / t.a) + (v / t.b) * (v / t.b));
      const double coverage = std::clamp(0.5 - (rho - 1.0) * edge_scale, 0.0, 1.0);
      if (coverage > 0.0) img(r, c) *= 1.0 - contrast * coverage;
    }
  }
}

void draw_scratch(GrayImage& img, const Segment& s) {
  const double pad = s.width + 1.0;
  const int r0 = std::max(0, static_cast<int>(std::floor(std::min(s.r0, s.r1) - pad)));
  const int r1 = std::min(static_cast<int>(img.rows()) - 1, static_cast<int>(std::ceil(std::max(s.r0, s.r1) + pad)));
  const int c0 = std::max(0, static_cast<int>(std::floor(std::min(s.c0, s.c1) - pad)));
  const int c1 = std::min(static_cast<int>(img.cols()) - 1, static_cast<int>(std::ceil(std::max(s.c0, s.c1) + pad)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      const double coverage = std::clamp(s.width / 2.0 + 0.5 - segment_distance(s, r, c), 0.0, 1.0);
      if (coverage > 0.0) img(r, c) *= 1.0 - s.contrast * coverage;
    }
}

void draw_blob(GrayImage& img, double row, double col, double sigma, double contrast) {
  const double extent = 4.0 * sigma;
  const int r0 = std::max(0, static_cast<int>(std::floor(row - extent)));
  const int r1 = std::min(static_cast<int>(img.rows()) - 1, static_cast<int>(std::ceil(row + extent)));
  const int c0 = std::max(0, static_cast<int>(std::floor(col - extent)));
  const int c1 = std::min(static_cast<int>(img.cols()) - 1, static_cast<int>(std::ceil(col + extent)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      const double d2 = (r - row) * (r - row) + (c - col) * (c - col);
      img(r, c) *= 1.0 - contrast * std::exp(-d2 / (2.0 * sigma * sigma));
    }
}

GroundTruth sample_tracks(const SceneSpec& spec, Rng& rng) {
  GroundTruth truth;
  const double n = spec.frame_size;
  const int drawn = rng.poisson(spec.track_count_mean);
  for (int k = 0; k < drawn; ++k) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Track t;
      t.a = rng.uniform(spec.r_min, spec.r_max);
      double ecc = spec.eccentricity;
      if (spec.category == Category::Field && rng.uniform() < 0.5) ecc = 0.0;
      t.b = t.a * std::sqrt(1.0 - ecc * ecc);
      t.rotation = ecc > 0.0 ? rng.uniform(0.0, kPi) : 0.0;
      if (rng.uniform() < spec.border_partial_fraction) {
        const auto side = rng.below(4);
        const double depth = rng.uniform(0.0, 0.5 * t.b);
        const double along = rng.uniform(t.a, n - 1.0 - t.a);
        switch (side) {
          case 0: t.row = depth, t.col = along; break;
          case 1: t.row = n - 1.0 - depth, t.col = along; break;
          case 2: t.row = along, t.col = depth; break;
          default: t.row = along, t.col = n - 1.0 - depth; break;
        }
        t.visible_fraction = visible_fraction(t, spec.frame_size);
      } else {
        t.row = rng.uniform(t.a + 1.0, n - 2.0 - t.a);
        t.col = rng.uniform(t.a + 1.0, n - 2.0 - t.a);
        t.visible_fraction = 1.0;
      }
      const bool clear = std::all_of(truth.tracks.begin(), truth.tracks.end(), [&](const Track& o) {
        return std::hypot(t.row - o.row, t.col - o.col) >= t.a + o.a + spec.min_separation;
      });
      if (clear) {
        truth.tracks.push_back(t);
        break;
      }
    }
  }
  return truth;
}

GrayImage render(const SceneSpec& spec, const GroundTruth& truth, Rng& rng) {
  const int n = spec.frame_size;
  const double level = rng.uniform(spec.background_min, spec.background_max);
  const double angle = rng.uniform(0.0, 2.0 * kPi);
  GrayImage img(n, n);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double proj = ((c - n / 2.0) * ca + (r - n / 2.0) * sa) / n;
      img(r, c) = level * (1.0 + 2.0 * spec.gradient_amplitude * proj);
    }

  for (const auto& t : truth.tracks) draw_pit(img, t, spec.pit_contrast);

  const int scratches = rng.poisson(spec.scratch_count_mean);
  for (int k = 0; k < scratches; ++k) {
    Segment s;
    const double length = rng.uniform(0.2, 0.6) * n;
    const double dir = rng.uniform(0.0, kPi);
    s.r0 = rng.uniform(0.0, n);
    s.c0 = rng.uniform(0.0, n);
    s.r1 = s.r0 + length * std::sin(dir);
    s.c1 = s.c0 + length * std::cos(dir);
    s.width = rng.uniform(1.0, 2.0);
    s.contrast = rng.uniform(0.3, 0.6) * spec.pit_contrast;
    draw_scratch(img, s);
  }

  const int blobs = rng.poisson(spec.blob_count_mean);
  for (int k = 0; k < blobs; ++k) {
    const double row = rng.uniform(0.0, n), col = rng.uniform(0.0, n);
    const double sigma = rng.uniform(0.5, 1.0) * spec.r_max;
    const double contrast = rng.uniform(0.3, 0.5) * spec.pit_contrast;
    draw_blob(img, row, col, sigma, contrast);
  }

  if (spec.noise_sigma > 0.0)
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] += spec.noise_sigma * rng.normal();
  return img.max(0.0).min(1.0);
}

std::string frame_id(Category c, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return to_string(c) + "_" + buf;
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace

std::string to_string(Category c) {
  switch (c) {
    case Category::Accel0: return "accel0";
    case Category::Accel30: return "accel30";
    case Category::Field: return "field";
  }
  return "unknown";
}

Category parse_category(const std::string& name) {
  if (name == "accel0") return Category::Accel0;
  if (name == "accel30") return Category::Accel30;
  if (name == "field") return Category::Field;
  throw ValidationError("unknown category '" + name + "' (expected accel0, accel30 or field)");
}

SceneSpec SceneSpec::defaults(Category category) {
  SceneSpec s;
  s.category = category;
  switch (category) {
    case Category::Accel0: break;
    case Category::Accel30: s.eccentricity = 0.5; break;
    case Category::Field:
      s.eccentricity = 0.5;
      s.track_count_mean = 8.0;
      s.noise_sigma = 0.03;
      s.scratch_count_mean = 4.0;
      s.blob_count_mean = 2.0;
      break;
  }
  return s;
}

SceneSpec SceneSpec::defect_heavy() {
  SceneSpec s = defaults(Category::Field);
  s.track_count_mean = 4.0;
  s.scratch_count_mean = 8.0;
  s.blob_count_mean = 6.0;
  s.background_min = 0.5;
  s.background_max = 0.95;
  return s;
}

void SceneSpec::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("scene spec: " + what); };
  if (r_min < 2.0) fail("r_min must be >= 2");
  if (r_max < r_min) fail("r_max must be >= r_min");
  if (!(frame_size > 4.0 * r_max)) fail("frame_size must exceed 4 * r_max");
  if (!(eccentricity >= 0.0 && eccentricity < 1.0)) fail("eccentricity must be in [0, 1)");
  if (!(pit_contrast > 0.0 && pit_contrast <= 1.0)) fail("pit_contrast must be in (0, 1]");
  if (!(track_count_mean >= 0.0)) fail("track_count_mean must be >= 0");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(scratch_count_mean >= 0.0) || !(blob_count_mean >= 0.0)) fail("artifact means must be >= 0");
  if (!(gradient_amplitude >= 0.0)) fail("gradient_amplitude must be >= 0");
  if (!(border_partial_fraction >= 0.0 && border_partial_fraction <= 1.0))
    fail("border_partial_fraction must be in [0, 1]");
  if (!(background_min > 0.0 && background_max >= background_min && background_max <= 1.0))
    fail("background range must satisfy 0 < min <= max <= 1");
  if (!(min_separation >= 0.0)) fail("min_separation must be >= 0");
}

nlohmann::json scene_to_json(const SceneSpec& s) {
  return {{"frame_size", s.frame_size},
          {"category", to_string(s.category)},
          {"track_count_mean", s.track_count_mean},
          {"radius_range", {s.r_min, s.r_max}},
          {"eccentricity", s.eccentricity},
          {"pit_contrast", s.pit_contrast},
          {"noise_sigma", s.noise_sigma},
          {"scratch_count_mean", s.scratch_count_mean},
          {"gradient_amplitude", s.gradient_amplitude},
          {"border_partial_fraction", s.border_partial_fraction},
          {"blob_count_mean", s.blob_count_mean},
          {"background_range", {s.background_min, s.background_max}},
          {"min_separation", s.min_separation}};
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  try {
    SceneSpec s = SceneSpec::defaults(parse_category(j.at("category").get<std::string>()));
    s.frame_size = j.value("frame_size", s.frame_size);
    s.track_count_mean = j.value("track_count_mean", s.track_count_mean);
    if (j.contains("radius_range")) {
      s.r_min = j.at("radius_range").at(0).get<double>();
      s.r_max = j.at("radius_range").at(1).get<double>();
    }
    s.eccentricity = j.value("eccentricity", s.eccentricity);
    s.pit_contrast = j.value("pit_contrast", s.pit_contrast);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.scratch_count_mean = j.value("scratch_count_mean", s.scratch_count_mean);
    s.gradient_amplitude = j.value("gradient_amplitude", s.gradient_amplitude);
    s.border_partial_fraction = j.value("border_partial_fraction", s.border_partial_fraction);
    s.blob_count_mean = j.value("blob_count_mean", s.blob_count_mean);
    if (j.contains("background_range")) {
      s.background_min = j.at("background_range").at(0).get<double>();
      s.background_max = j.at("background_range").at(1).get<double>();
    }
    s.min_separation = j.value("min_separation", s.min_separation);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scene spec: ") + e.what());
  }
}

nlohmann::json truth_to_json(const GroundTruth& truth) {
  nlohmann::json tracks = nlohmann::json::array();
  for (const auto& t : truth.tracks)
    tracks.push_back({{"centroid", {t.row, t.col}},
                      {"semi_axes", {t.a, t.b}},
                      {"rotation", t.rotation},
                      {"visible_fraction", t.visible_fraction}});
  return {{"tracks", tracks}};
}

GroundTruth truth_from_json(const nlohmann::json& j) {
  try {
    GroundTruth truth;
    for (const auto& e : j.at("tracks")) {
      Track t;
      t.row = e.at("centroid").at(0).get<double>();
      t.col = e.at("centroid").at(1).get<double>();
      t.a = e.at("semi_axes").at(0).get<double>();
      t.b = e.at("semi_axes").at(1).get<double>();
      t.rotation = e.at("rotation").get<double>();
      t.visible_fraction = e.at("visible_fraction").get<double>();
      truth.tracks.push_back(t);
    }
    return truth;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("truth file: ") + e.what());
  }
}

void save_truth(const GroundTruth& truth, const std::filesystem::path& path) { write_json(truth_to_json(truth), path); }

GroundTruth load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open truth file");
  try {
    return truth_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed truth file (" + e.what() + ")");
  }
}

double visible_fraction(const Track& t, int frame_size) {
  constexpr int kSub = 8;
  const double extent = t.a + 1.0;
  const int r0 = static_cast<int>(std::floor(t.row - extent)), r1 = static_cast<int>(std::ceil(t.row + extent));
  const int c0 = static_cast<int>(std::floor(t.col - extent)), c1 = static_cast<int>(std::ceil(t.col + extent));
  long inside = 0, visible = 0;
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c)
      for (int i = 0; i < kSub; ++i)
        for (int k = 0; k < kSub; ++k) {
          const double sr = r - 0.5 + (i + 0.5) / kSub, sc = c - 0.5 + (k + 0.5) / kSub;
          if (!inside_ellipse(t, sr, sc)) continue;
          ++inside;
          if (r >= 0 && c >= 0 && r < frame_size && c < frame_size) ++visible;
        }
  return inside > 0 ? static_cast<double>(visible) / inside : 0.0;
}

SyntheticFrame generate_frame(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  SyntheticFrame frame;
  frame.truth = sample_tracks(spec, rng);
  frame.image = render(spec, frame.truth, rng);
  return frame;
}

GrayImage render_frame(const SceneSpec& spec, const GroundTruth& truth, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  return render(spec, truth, rng);
}

DatasetManifest generate_corpus(const SceneSpec& spec, int count, std::uint64_t base_seed,
                                const std::filesystem::path& out_dir, unsigned threads) {
  spec.validate();
  if (count <= 0) throw ValidationError("generate_corpus: count must be > 0");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "frames", ec);
  std::filesystem::create_directories(out_dir / "truth", ec);
  if (ec || !std::filesystem::is_directory(out_dir / "frames"))
    throw IoError(out_dir.string() + ": cannot create output directory");

  DatasetManifest manifest;
  manifest.category = to_string(spec.category);
  manifest.corpus_id = manifest.category + "-" + std::to_string(base_seed);
  manifest.spec_echo = scene_to_json(spec);
  manifest.base_dir = out_dir;
  manifest.frames.resize(count);

  parallel_for(static_cast<std::size_t>(count), threads, [&](std::size_t i) {
    const auto frame = generate_frame(spec, base_seed + i);
    FrameEntry& e = manifest.frames[i];
    e.frame_id = frame_id(spec.category, static_cast<int>(i));
    e.image_path = std::filesystem::path("frames") / (e.frame_id + ".pgm");
    e.truth_path = std::filesystem::path("truth") / (e.frame_id + ".json");
    save_image(frame.image, out_dir / e.image_path);
    save_truth(frame.truth, out_dir / e.truth_path);
  });
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace ntd
