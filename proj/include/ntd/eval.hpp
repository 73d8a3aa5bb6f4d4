#pragma once

#include "ntd/datastore.hpp"
#include "ntd/neural.hpp"
#include "ntd/pipeline.hpp"
#include "ntd/synth.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ntd {

struct Point {
  double row = 0.0, col = 0.0;
};

struct MatchResult {
  int matched = 0, missed = 0, spurious = 0;
  std::vector<std::pair<int, int>> pairs;  // (prediction index, truth index)
};

/// Greedy: repeatedly pair the globally closest (prediction, truth) pair within
/// tol, ties broken by lower prediction index, then lower truth index.
MatchResult match_points(const std::vector<Point>& pred, const std::vector<Point>& truth, double tol);
MatchResult match_peaks(const PeakReport& pred, const GroundTruth& truth, double tol);

/// Scripted stand-in for the human annotator: midpoint between the weakest
/// true-pit peak (max response within max(2, R/2) of each centroid) and the
/// strongest response farther than (a + disk radius) from every pit.
double oracle_threshold(const ResponseMap& resp, const GroundTruth& truth, const PipelineConfig& cfg);

struct FrameRow {
  std::string frame_id;
  int true_count = 0;
  int predicted = 0;
  int matched = 0, missed = 0, spurious = 0;
  double threshold = 0.0;
};

struct CategoryReport {
  std::string category;
  int n_test_frames = 0;
  int total_true_tracks = 0;
  int matched = 0, missed = 0, spurious = 0;
  double track_accuracy = 0.0;    // matched / total_true_tracks
  double frame_exact_rate = 0.0;  // frames with predicted == true count
  double train_rmse = 0.0;
  int n_train_records = 0;
  std::vector<FrameRow> frames;
};

struct EvalReport {
  std::vector<CategoryReport> categories;
};

struct EvalOptions {
  TrainConfig train;
  double tol = 0.0;  // <= 0: cfg.max_track_radius
  unsigned threads = 1;
  ModelRegistry* registry = nullptr;  // when set, trained models are stored there
  bool reuse_models = false;          // load from registry instead of training
};

/// Training records of one category's train split. Every train frame must be
/// annotated under cfg's config hash.
std::vector<TrainingRecord> training_records(const AnnotationStore& store, const DatasetManifest& manifest,
                                             const PipelineConfig& cfg);

/// Annotated train-split records of a category under cfg's config hash,
/// skipping frames not yet annotated.
std::vector<TrainingRecord> annotated_records(const AnnotationStore& store, const std::string& category,
                                              const PipelineConfig& cfg);

CategoryReport evaluate_category(const DatasetManifest& manifest, const AnnotationStore& store,
                                 const PipelineConfig& cfg, const EvalOptions& opts);
EvalReport evaluate(const std::vector<DatasetManifest>& manifests, const AnnotationStore& store,
                    const PipelineConfig& cfg, const EvalOptions& opts);

nlohmann::json report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report);
std::string report_csv(const EvalReport& report);

struct CompareRow {
  std::string frame_id;
  int true_count = 0;
  int nn_count = 0;
  int linear_count = 0;
  double nn_threshold = 0.0;
  double linear_threshold = 0.0;
};

struct CompareReport {
  std::string category;
  double k = 0.0;  // ratio-baseline slope
  std::vector<CompareRow> frames;
  int nn_better = 0, equal = 0, nn_worse = 0;  // by |count - true|
};

std::vector<CompareReport> compare_baseline(const std::vector<DatasetManifest>& manifests, const AnnotationStore& store,
                                            const PipelineConfig& cfg, const EvalOptions& opts);

nlohmann::json compare_to_json(const std::vector<CompareReport>& reports);
std::string compare_table(const std::vector<CompareReport>& reports);

/// Annotates every train frame of the manifest with oracle_threshold, using
/// the corpus truth files. Returns the number of records written.
int oracle_annotate(const DatasetManifest& manifest, AnnotationStore& store, const PipelineConfig& cfg,
                    unsigned threads = 1, const std::string& timestamp = {});

}  // namespace ntd
