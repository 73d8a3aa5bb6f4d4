#pragma once

#include "ntd/datastore.hpp"
#include "ntd/neural.hpp"
#include "ntd/pipeline.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace ntd {

struct ServiceOptions {
  std::vector<DatasetManifest> manifests;
  std::filesystem::path annotations;
  std::filesystem::path models_dir;
  PipelineConfig config;
  TrainConfig train;
  std::filesystem::path ui_dir;  // empty: no static assets
};

/// Annotation HTTP service.
///
///   GET  /api/frames                        [{frame_id, category, split, annotated}]
///   GET  /api/frames/{id}/preview?t=        PNG overlay, header X-Peak-Count
///   POST /api/frames/{id}/annotation        {threshold} -> 204
///   POST /api/train                         {category} -> {final_rmse, n_records}
///   GET  /api/frames/{id}/prediction        {threshold, count, centroids}
///   GET  /api/frames/{id}/stats             {average_intensity, max_response, min_response}
///   GET  /api/debug/frames/{id}/inclusion?lo=&hi=
///
/// Errors are {"error": "..."} with a 4xx/5xx status.
class AnnotationService {
 public:
  explicit AnnotationService(ServiceOptions opts);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Binds host:port; port 0 picks a free one. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void serve();
  /// bind + serve on a background thread; returns once accepting.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ntd
