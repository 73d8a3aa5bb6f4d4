#include "ntd/eval.hpp"

#include "ntd/error.hpp"
#include "ntd/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <tuple>

namespace ntd {
namespace {

std::vector<Point> peak_points(const PeakReport& r) {
  std::vector<Point> p;
  for (const auto& k : r.peaks) p.push_back({k.row, k.col});
  return p;
}

std::vector<Point> truth_points(const GroundTruth& t) {
  std::vector<Point> p;
  for (const auto& k : t.tracks) p.push_back({k.row, k.col});
  return p;
}

struct TrainedCategory {
  MlpModel model;
  std::vector<TrainingRecord> records;
  double rmse = 0.0;
};

TrainedCategory train_or_load(const DatasetManifest& manifest, const AnnotationStore& store, const PipelineConfig& cfg,
                              const EvalOptions& opts) {
  TrainedCategory out;
  out.records = training_records(store, manifest, cfg);
  if (opts.reuse_models && opts.registry) {
    if (auto m = opts.registry->find(manifest.category)) {
      out.model = *m;
      return out;
    }
  }
  auto result = mlp_train_detailed(out.records, opts.train);
  result.model.category = manifest.category;
  out.model = std::move(result.model);
  out.rmse = result.rmse;
  if (opts.registry) opts.registry->put(out.model);
  return out;
}

std::vector<const FrameEntry*> test_frames(const DatasetManifest& manifest) {
  std::vector<const FrameEntry*> frames;
  for (const auto& f : manifest.frames)
    if (f.split == Split::Test) frames.push_back(&f);
  std::sort(frames.begin(), frames.end(), [](auto* a, auto* b) { return a->frame_id < b->frame_id; });
  if (frames.empty()) throw ValidationError("evaluate: manifest " + manifest.corpus_id + " has no test frames");
  return frames;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

MatchResult match_points(const std::vector<Point>& pred, const std::vector<Point>& truth, double tol) {
  if (!(tol > 0.0)) throw ValidationError("match_peaks: tol must be > 0");
  std::vector<std::tuple<double, int, int>> candidates;
  for (int i = 0; i < static_cast<int>(pred.size()); ++i)
    for (int j = 0; j < static_cast<int>(truth.size()); ++j) {
      const double d = std::hypot(pred[i].row - truth[j].row, pred[i].col - truth[j].col);
      if (d <= tol) candidates.emplace_back(d, i, j);
    }
  std::sort(candidates.begin(), candidates.end());
  std::vector<bool> used_pred(pred.size(), false), used_truth(truth.size(), false);
  MatchResult out;
  for (const auto& [d, i, j] : candidates) {
    if (used_pred[i] || used_truth[j]) continue;
    used_pred[i] = used_truth[j] = true;
    out.pairs.emplace_back(i, j);
  }
  out.matched = static_cast<int>(out.pairs.size());
  out.missed = static_cast<int>(truth.size()) - out.matched;
  out.spurious = static_cast<int>(pred.size()) - out.matched;
  return out;
}

MatchResult match_peaks(const PeakReport& pred, const GroundTruth& truth, double tol) {
  return match_points(peak_points(pred), truth_points(truth), tol);
}

double oracle_threshold(const ResponseMap& resp, const GroundTruth& truth, const PipelineConfig& cfg) {
  const double peak_radius = std::max(2.0, cfg.max_track_radius / 2.0);
  double weakest = std::numeric_limits<double>::infinity();
  for (const auto& t : truth.tracks) {
    double best = -std::numeric_limits<double>::infinity();
    const int r0 = std::max(0, static_cast<int>(std::floor(t.row - peak_radius)));
    const int r1 = std::min(static_cast<int>(resp.rows()) - 1, static_cast<int>(std::ceil(t.row + peak_radius)));
    const int c0 = std::max(0, static_cast<int>(std::floor(t.col - peak_radius)));
    const int c1 = std::min(static_cast<int>(resp.cols()) - 1, static_cast<int>(std::ceil(t.col + peak_radius)));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c)
        if (std::hypot(r - t.row, c - t.col) <= peak_radius) best = std::max(best, resp(r, c));
    weakest = std::min(weakest, best);
  }

  double background = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < resp.rows(); ++r)
    for (Eigen::Index c = 0; c < resp.cols(); ++c) {
      const bool near_pit = std::any_of(truth.tracks.begin(), truth.tracks.end(), [&](const Track& t) {
        return std::hypot(r - t.row, c - t.col) <= t.a + cfg.disk_radius();
      });
      if (!near_pit) background = std::max(background, resp(r, c));
    }

  if (truth.tracks.empty() || !std::isfinite(weakest)) return resp.maxCoeff();
  if (!std::isfinite(background)) return weakest / 2.0;
  return 0.5 * (weakest + background);
}

std::vector<TrainingRecord> training_records(const AnnotationStore& store, const DatasetManifest& manifest,
                                             const PipelineConfig& cfg) {
  const std::string hash = config_hash(cfg);
  std::map<std::string, const AnnotationRecord*> by_frame;
  const auto annotations = store.load(manifest.category);
  for (const auto& a : annotations) {
    if (a.split != Split::Train) continue;
    if (a.record.config_hash != hash)
      throw ValidationError("annotation for " + a.record.frame_id + " was made with config " + a.record.config_hash +
                            ", current config is " + hash);
    by_frame[a.record.frame_id] = &a.record;
  }
  std::vector<TrainingRecord> records;
  for (const auto& f : manifest.frames) {
    if (f.split != Split::Train) continue;
    auto it = by_frame.find(f.frame_id);
    if (it == by_frame.end()) throw ValidationError("missing annotation for training frame " + f.frame_id);
    records.push_back({f.frame_id, {it->second->average_intensity}, it->second->manual_threshold});
  }
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.frame_id < b.frame_id; });
  return records;
}

std::vector<TrainingRecord> annotated_records(const AnnotationStore& store, const std::string& category,
                                              const PipelineConfig& cfg) {
  const std::string hash = config_hash(cfg);
  std::vector<TrainingRecord> records;
  for (const auto& a : store.load(category))
    if (a.split == Split::Train && a.record.config_hash == hash)
      records.push_back({a.record.frame_id, {a.record.average_intensity}, a.record.manual_threshold});
  return records;
}

CategoryReport evaluate_category(const DatasetManifest& manifest, const AnnotationStore& store,
                                 const PipelineConfig& cfg, const EvalOptions& opts) {
  const auto trained = train_or_load(manifest, store, cfg, opts);
  const auto frames = test_frames(manifest);
  const double tol = opts.tol > 0.0 ? opts.tol : cfg.max_track_radius;

  CategoryReport rep;
  rep.category = manifest.category;
  rep.train_rmse = trained.rmse;
  rep.n_train_records = static_cast<int>(trained.records.size());
  rep.frames.resize(frames.size());
  parallel_for(frames.size(), opts.threads, [&](std::size_t i) {
    const FrameEntry& f = *frames[i];
    const GroundTruth truth = load_truth(manifest.truth_file(f));
    const auto analysis = analyze_frame(load_image(manifest.image_file(f)), cfg, trained.model);
    const auto m = match_peaks(analysis.report, truth, tol);
    rep.frames[i] = {f.frame_id, static_cast<int>(truth.tracks.size()), analysis.report.count, m.matched, m.missed,
                     m.spurious, analysis.threshold};
  });

  int exact = 0;
  for (const auto& row : rep.frames) {
    rep.total_true_tracks += row.true_count;
    rep.matched += row.matched;
    rep.missed += row.missed;
    rep.spurious += row.spurious;
    exact += row.predicted == row.true_count;
  }
  rep.n_test_frames = static_cast<int>(rep.frames.size());
  rep.track_accuracy = rep.total_true_tracks > 0 ? static_cast<double>(rep.matched) / rep.total_true_tracks : 1.0;
  rep.frame_exact_rate = static_cast<double>(exact) / rep.n_test_frames;
  return rep;
}

EvalReport evaluate(const std::vector<DatasetManifest>& manifests, const AnnotationStore& store,
                    const PipelineConfig& cfg, const EvalOptions& opts) {
  EvalReport report;
  for (const auto& m : manifests) report.categories.push_back(evaluate_category(m, store, cfg, opts));
  return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : report.categories) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& f : c.frames)
      rows.push_back({{"frame_id", f.frame_id},
                      {"true", f.true_count},
                      {"predicted", f.predicted},
                      {"matched", f.matched},
                      {"missed", f.missed},
                      {"spurious", f.spurious},
                      {"threshold", f.threshold}});
    cats.push_back({{"category", c.category},
                    {"n_train_records", c.n_train_records},
                    {"train_rmse", c.train_rmse},
                    {"n_test_frames", c.n_test_frames},
                    {"total_true_tracks", c.total_true_tracks},
                    {"matched", c.matched},
                    {"missed", c.missed},
                    {"spurious", c.spurious},
                    {"track_accuracy", c.track_accuracy},
                    {"frame_exact_rate", c.frame_exact_rate},
                    {"frames", rows}});
  }
  return {{"categories", cats}};
}

std::string report_table(const EvalReport& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %6s %6s %8s %7s %9s %10s %12s\n", "category", "train", "test", "tracks",
                "matched", "spurious", "track_acc", "frame_exact");
  out << line;
  for (const auto& c : report.categories) {
    std::snprintf(line, sizeof(line), "%-10s %6d %6d %8d %7d %9d %10s %12s\n", c.category.c_str(), c.n_train_records,
                  c.n_test_frames, c.total_true_tracks, c.matched, c.spurious, fixed(c.track_accuracy, 4).c_str(),
                  fixed(c.frame_exact_rate, 4).c_str());
    out << line;
  }
  return out.str();
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "frame_id,true,predicted,matched,missed,spurious,threshold\n";
  for (const auto& c : report.categories)
    for (const auto& f : c.frames) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", f.threshold);
      out << f.frame_id << "," << f.true_count << "," << f.predicted << "," << f.matched << "," << f.missed << ","
          << f.spurious << "," << buf << "\n";
    }
  return out.str();
}

std::vector<CompareReport> compare_baseline(const std::vector<DatasetManifest>& manifests, const AnnotationStore& store,
                                            const PipelineConfig& cfg, const EvalOptions& opts) {
  std::vector<CompareReport> reports;
  for (const auto& manifest : manifests) {
    const auto trained = train_or_load(manifest, store, cfg, opts);
    CompareReport rep;
    rep.category = manifest.category;
    rep.k = linear_baseline_fit(trained.records);
    const auto frames = test_frames(manifest);
    rep.frames.resize(frames.size());
    parallel_for(frames.size(), opts.threads, [&](std::size_t i) {
      const FrameEntry& f = *frames[i];
      const GroundTruth truth = load_truth(manifest.truth_file(f));
      const ResponseMap resp = enhance(load_image(manifest.image_file(f)), cfg);
      const auto features = response_features(resp);
      CompareRow row;
      row.frame_id = f.frame_id;
      row.true_count = static_cast<int>(truth.tracks.size());
      row.nn_threshold = mlp_predict(trained.model, features);
      row.linear_threshold = linear_baseline_predict(rep.k, features);
      row.nn_count = count_peaks(apply_threshold(resp, row.nn_threshold), cfg, resp).count;
      row.linear_count = count_peaks(apply_threshold(resp, row.linear_threshold), cfg, resp).count;
      rep.frames[i] = row;
    });
    for (const auto& row : rep.frames) {
      const int nn_err = std::abs(row.nn_count - row.true_count);
      const int lin_err = std::abs(row.linear_count - row.true_count);
      if (nn_err < lin_err)
        ++rep.nn_better;
      else if (nn_err == lin_err)
        ++rep.equal;
      else
        ++rep.nn_worse;
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

nlohmann::json compare_to_json(const std::vector<CompareReport>& reports) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& f : r.frames)
      rows.push_back({{"frame_id", f.frame_id},
                      {"true_count", f.true_count},
                      {"nn_count", f.nn_count},
                      {"linear_count", f.linear_count},
                      {"nn_threshold", f.nn_threshold},
                      {"linear_threshold", f.linear_threshold}});
    out.push_back({{"category", r.category},
                   {"k", r.k},
                   {"summary", {{"nn_better", r.nn_better}, {"equal", r.equal}, {"nn_worse", r.nn_worse}}},
                   {"frames", rows}});
  }
  return {{"comparisons", out}};
}

std::string compare_table(const std::vector<CompareReport>& reports) {
  std::ostringstream out;
  char line[256];
  for (const auto& r : reports) {
    out << r.category << " (k = " << fixed(r.k, 6) << ")\n";
    std::snprintf(line, sizeof(line), "  %-16s %5s %5s %7s %10s %10s\n", "frame_id", "true", "nn", "linear", "t_nn",
                  "t_linear");
    out << line;
    for (const auto& f : r.frames) {
      std::snprintf(line, sizeof(line), "  %-16s %5d %5d %7d %10.3f %10.3f\n", f.frame_id.c_str(), f.true_count,
                    f.nn_count, f.linear_count, f.nn_threshold, f.linear_threshold);
      out << line;
    }
    out << "  nn better: " << r.nn_better << ", equal: " << r.equal << ", nn worse: " << r.nn_worse << "\n";
  }
  return out.str();
}

int oracle_annotate(const DatasetManifest& manifest, AnnotationStore& store, const PipelineConfig& cfg,
                    unsigned threads, const std::string& timestamp) {
  std::vector<const FrameEntry*> frames;
  for (const auto& f : manifest.frames)
    if (f.split == Split::Train) frames.push_back(&f);
  std::vector<AnnotationRecord> records(frames.size());
  const std::string hash = config_hash(cfg);
  const std::string stamp = timestamp.empty() ? iso8601_now() : timestamp;
  parallel_for(frames.size(), threads, [&](std::size_t i) {
    const FrameEntry& f = *frames[i];
    const ResponseMap resp = enhance(load_image(manifest.image_file(f)), cfg);
    const GroundTruth truth = load_truth(manifest.truth_file(f));
    records[i] = {f.frame_id, average_intensity(resp), oracle_threshold(resp, truth, cfg), stamp, hash};
  });
  for (const auto& r : records) store.record(r);
  return static_cast<int>(records.size());
}

}  // namespace ntd
