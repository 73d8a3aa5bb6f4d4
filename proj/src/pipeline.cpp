#include "ntd/pipeline.hpp"

#include "ntd/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

namespace ntd {
namespace {

Eigen::Index reflect(Eigen::Index i, Eigen::Index n) {
  const Eigen::Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

GrayImage pad_symmetric(const GrayImage& img, Eigen::Index pad) {
  GrayImage out(img.rows() + 2 * pad, img.cols() + 2 * pad);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const Eigen::Index sr = reflect(r - pad, img.rows());
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = img(sr, reflect(c - pad, img.cols()));
  }
  return out;
}

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

void unite(std::vector<int>& parent, int a, int b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (a < b)
    parent[b] = a;
  else
    parent[a] = b;
}

}  // namespace

double default_min_peak_area(double disk_radius) { return 0.04 * std::numbers::pi * disk_radius * disk_radius; }

PipelineConfig PipelineConfig::for_radius(double max_track_radius) {
  PipelineConfig cfg;
  cfg.max_track_radius = max_track_radius;
  cfg.mask_size = 2 * static_cast<int>(std::ceil(2.0 * max_track_radius)) + 1;
  cfg.min_peak_area = default_min_peak_area(cfg.disk_radius());
  return cfg;
}

void PipelineConfig::validate() const {
  if (!(max_track_radius > 0.0) || !(sigma_factor > 0.0) || !(disk_factor > 0.0))
    throw ValidationError("pipeline config: radius and factors must be > 0");
  if (mask_size < 1 || mask_size % 2 == 0) throw ValidationError("pipeline config: mask_size must be odd");
  if (mask_size < 2.0 * disk_radius() + 1.0)
    throw ValidationError("pipeline config: mask_size must be >= 2 * disk radius + 1");
  if (!(lambda >= 0.0)) throw ValidationError("pipeline config: lambda must be >= 0");
  if (!(min_peak_area >= 0.0)) throw ValidationError("pipeline config: min_peak_area must be >= 0");
  if (connectivity != 4 && connectivity != 8) throw ValidationError("pipeline config: connectivity must be 4 or 8");
}

nlohmann::json config_to_json(const PipelineConfig& cfg) {
  return {{"max_track_radius", cfg.max_track_radius},
          {"sigma_factor", cfg.sigma_factor},
          {"disk_factor", cfg.disk_factor},
          {"mask_size", cfg.mask_size},
          {"lambda", cfg.lambda},
          {"min_peak_area", cfg.min_peak_area},
          {"connectivity", cfg.connectivity}};
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  try {
    PipelineConfig cfg = PipelineConfig::for_radius(j.value("max_track_radius", 9.0));
    cfg.sigma_factor = j.value("sigma_factor", cfg.sigma_factor);
    cfg.disk_factor = j.value("disk_factor", cfg.disk_factor);
    if (!j.contains("mask_size"))
      cfg.mask_size = std::max(cfg.mask_size, 2 * static_cast<int>(std::ceil(cfg.disk_radius())) + 1);
    cfg.mask_size = j.value("mask_size", cfg.mask_size);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.min_peak_area = j.value("min_peak_area", default_min_peak_area(cfg.disk_radius()));
    cfg.connectivity = j.value("connectivity", cfg.connectivity);
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("pipeline config: ") + e.what());
  }
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open config");
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed config (" + e.what() + ")");
  }
}

std::string config_hash(const PipelineConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

GrayImage gaussian_mask(const PipelineConfig& cfg) {
  return make_mask({MaskKind::Gaussian, cfg.mask_size, cfg.sigma(), 0.0});
}

GrayImage disk_mask(const PipelineConfig& cfg) {
  return make_mask({MaskKind::Disk, cfg.mask_size, 0.0, cfg.disk_radius()});
}

GrayImage enhance_linear(const GrayImage& inverted, const PipelineConfig& cfg) {
  cfg.validate();
  const Eigen::Index pad = cfg.mask_size;
  const GrayImage padded = pad_symmetric(inverted, pad);
  const GrayImage response = convolve(deconvolve(padded, gaussian_mask(cfg), cfg.lambda), disk_mask(cfg));
  return response.block(pad, pad, inverted.rows(), inverted.cols());
}

ResponseMap enhance(const GrayImage& img, const PipelineConfig& cfg) {
  if (img.size() == 0) throw ValidationError("enhance: empty image");
  return enhance_linear(1.0 - img, cfg).max(0.0);
}

ResponseMap convolve_only(const GrayImage& img, const PipelineConfig& cfg) {
  cfg.validate();
  const Eigen::Index pad = cfg.mask_size;
  const GrayImage padded = pad_symmetric(1.0 - img, pad);
  return convolve(padded, disk_mask(cfg)).block(pad, pad, img.rows(), img.cols()).max(0.0);
}

double average_intensity(const ResponseMap& resp) {
  if (resp.size() == 0) throw ValidationError("average_intensity: empty map");
  return resp.mean();
}

std::vector<double> response_features(const ResponseMap& resp) { return {average_intensity(resp)}; }

BinaryMap apply_threshold(const ResponseMap& resp, double t) { return resp > t; }

ComponentLabels label_components(const BinaryMap& bin, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw ValidationError("label_components: connectivity must be 4 or 8");
  const Eigen::Index rows = bin.rows(), cols = bin.cols();
  ComponentLabels out;
  out.labels = Image<int>::Zero(rows, cols);
  std::vector<int> parent{0};

  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!bin(r, c)) continue;
      int label = 0;
      auto visit = [&](Eigen::Index nr, Eigen::Index nc) {
        if (nr < 0 || nc < 0 || nc >= cols) return;
        const int other = out.labels(nr, nc);
        if (other == 0) return;
        if (label == 0)
          label = other;
        else
          unite(parent, label, other);
      };
      visit(r, c - 1);
      visit(r - 1, c);
      if (connectivity == 8) {
        visit(r - 1, c - 1);
        visit(r - 1, c + 1);
      }
      if (label == 0) {
        label = static_cast<int>(parent.size());
        parent.push_back(label);
      }
      out.labels(r, c) = label;
    }
  }

  // Roots are the smallest provisional label of each component, i.e. the one
  // given to its first pixel in raster order.
  std::vector<int> final_label(parent.size(), 0);
  for (std::size_t l = 1; l < parent.size(); ++l)
    if (find_root(parent, static_cast<int>(l)) == static_cast<int>(l)) final_label[l] = ++out.count;
  for (Eigen::Index i = 0; i < out.labels.size(); ++i) {
    int& l = out.labels.data()[i];
    if (l != 0) l = final_label[find_root(parent, l)];
  }
  return out;
}

PeakReport count_peaks(const BinaryMap& bin, const PipelineConfig& cfg, const ResponseMap& resp) {
  if (bin.rows() != resp.rows() || bin.cols() != resp.cols())
    throw ValidationError("count_peaks: binary map and response map differ in size");
  const ComponentLabels cc = label_components(bin, cfg.connectivity);

  struct Accumulator {
    int area = 0;
    double weight = 0.0, wr = 0.0, wc = 0.0, sr = 0.0, sc = 0.0;
    int top = 0, left = 0, bottom = 0, right = 0;
    double max_response = -std::numeric_limits<double>::infinity();
  };
  std::vector<Accumulator> acc(cc.count + 1);
  for (Eigen::Index r = 0; r < bin.rows(); ++r) {
    for (Eigen::Index c = 0; c < bin.cols(); ++c) {
      const int l = cc.labels(r, c);
      if (l == 0) continue;
      auto& a = acc[l];
      const int ri = static_cast<int>(r), ci = static_cast<int>(c);
      if (a.area == 0) {
        a.top = a.bottom = ri;
        a.left = a.right = ci;
      }
      ++a.area;
      const double w = resp(r, c);
      a.weight += w;
      a.wr += w * r;
      a.wc += w * c;
      a.sr += r;
      a.sc += c;
      a.top = std::min(a.top, ri);
      a.bottom = std::max(a.bottom, ri);
      a.left = std::min(a.left, ci);
      a.right = std::max(a.right, ci);
      a.max_response = std::max(a.max_response, w);
    }
  }

  PeakReport report;
  for (int l = 1; l <= cc.count; ++l) {
    const auto& a = acc[l];
    if (a.area < cfg.min_peak_area) continue;
    Peak p;
    if (a.weight > 0.0) {
      p.row = a.wr / a.weight;
      p.col = a.wc / a.weight;
    } else {
      p.row = a.sr / a.area;
      p.col = a.sc / a.area;
    }
    p.area = a.area;
    p.top = a.top;
    p.left = a.left;
    p.bottom = a.bottom;
    p.right = a.right;
    p.max_response = a.max_response;
    report.peaks.push_back(p);
  }
  std::sort(report.peaks.begin(), report.peaks.end(),
            [](const Peak& a, const Peak& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  report.count = static_cast<int>(report.peaks.size());
  return report;
}

FrameAnalysis analyze_response(const ResponseMap& resp, const PipelineConfig& cfg, double threshold) {
  FrameAnalysis out;
  out.threshold = threshold;
  out.report = count_peaks(apply_threshold(resp, threshold), cfg, resp);
  out.response = resp;
  return out;
}

FrameAnalysis analyze_frame(const GrayImage& img, const PipelineConfig& cfg, const MlpModel& model) {
  if (model.w1.size() == 0) throw ValidationError("analyze_frame: model is untrained");
  ResponseMap resp = enhance(img, cfg);
  const double threshold = mlp_predict(model, response_features(resp));
  FrameAnalysis out;
  out.threshold = threshold;
  out.report = count_peaks(apply_threshold(resp, threshold), cfg, resp);
  out.response = std::move(resp);
  return out;
}

}  // namespace ntd
