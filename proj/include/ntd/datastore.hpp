#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ntd {

enum class Split { Train, Test, Unassigned };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct FrameEntry {
  std::string frame_id;
  std::filesystem::path image_path;  // relative to the manifest directory unless absolute
  std::filesystem::path truth_path;
  Split split = Split::Unassigned;
};

struct DatasetManifest {
  std::string corpus_id;
  std::string category;
  std::vector<FrameEntry> frames;
  nlohmann::json spec_echo;        // SceneSpec of synthetic corpora
  std::filesystem::path base_dir;  // not serialized; set by load_manifest

  std::filesystem::path image_file(const FrameEntry& f) const { return base_dir / f.image_path; }
  std::filesystem::path truth_file(const FrameEntry& f) const { return base_dir / f.truth_path; }
  const FrameEntry* find(const std::string& frame_id) const;
  int count(Split s) const;
};

nlohmann::json manifest_to_json(const DatasetManifest& m);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
/// Checks frame-id uniqueness and that every referenced file exists.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Seeded shuffle; the first floor(n * train_fraction) frames become train,
/// the rest test.
DatasetManifest split_dataset(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed);

struct AnnotationRecord {
  std::string frame_id;
  double average_intensity = 0.0;
  double manual_threshold = 0.0;
  std::string annotated_at;  // ISO-8601 UTC
  std::string config_hash;
};

/// Annotation joined with the owning manifest.
struct LabeledAnnotation {
  AnnotationRecord record;
  std::string category;
  Split split = Split::Unassigned;
};

std::string iso8601_now();

/// annotations.jsonl, one record per (frame_id, config_hash). Writes rewrite
/// the file through a temporary and rename; all access is serialized.
class AnnotationStore {
 public:
  AnnotationStore(std::filesystem::path path, std::vector<DatasetManifest> manifests);

  /// Upsert. Throws ValidationError for frames not in any manifest.
  void record(const AnnotationRecord& rec);

  /// Records of one category ordered by frame_id (then config_hash).
  std::vector<LabeledAnnotation> load(const std::string& category) const;

  bool is_annotated(const std::string& frame_id) const;
  const std::vector<DatasetManifest>& manifests() const { return manifests_; }
  const std::filesystem::path& path() const { return path_; }

  /// Manifest and entry owning frame_id, if any.
  std::optional<std::pair<const DatasetManifest*, const FrameEntry*>> locate(const std::string& frame_id) const;

 private:
  void read_file();
  void write_file() const;

  std::filesystem::path path_;
  std::vector<DatasetManifest> manifests_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, AnnotationRecord> records_;
};

}  // namespace ntd
