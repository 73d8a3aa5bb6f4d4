#include "ntd/datastore.hpp"

#include "ntd/error.hpp"
#include "ntd/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numeric>
#include <set>

namespace ntd {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "unassigned";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "unassigned") return Split::Unassigned;
  throw ValidationError("unknown split '" + s + "'");
}

const FrameEntry* DatasetManifest::find(const std::string& frame_id) const {
  for (const auto& f : frames)
    if (f.frame_id == frame_id) return &f;
  return nullptr;
}

int DatasetManifest::count(Split s) const {
  return static_cast<int>(std::count_if(frames.begin(), frames.end(), [s](const FrameEntry& f) { return f.split == s; }));
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : m.frames)
    frames.push_back({{"frame_id", f.frame_id},
                      {"image_path", f.image_path.generic_string()},
                      {"truth_path", f.truth_path.generic_string()},
                      {"split", to_string(f.split)}});
  return {{"schema_version", 1},
          {"corpus_id", m.corpus_id},
          {"category", m.category},
          {"frames", frames},
          {"spec_echo", m.spec_echo}};
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << manifest_to_json(m).dump(2) << "\n";
  if (!out) throw IoError(path.string() + ": write failed");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open manifest");
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.corpus_id = j.at("corpus_id").get<std::string>();
    m.category = j.at("category").get<std::string>();
    m.spec_echo = j.value("spec_echo", nlohmann::json());
    for (const auto& f : j.at("frames")) {
      FrameEntry e;
      e.frame_id = f.at("frame_id").get<std::string>();
      e.image_path = f.at("image_path").get<std::string>();
      e.truth_path = f.value("truth_path", std::string());
      e.split = parse_split(f.value("split", std::string("unassigned")));
      m.frames.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed manifest (" + e.what() + ")");
  }
  m.base_dir = path.parent_path();
  std::set<std::string> seen;
  for (const auto& f : m.frames) {
    if (!seen.insert(f.frame_id).second) throw ValidationError(path.string() + ": duplicate frame_id " + f.frame_id);
    if (!std::filesystem::exists(m.image_file(f)))
      throw IoError(path.string() + ": missing image " + m.image_file(f).string());
    if (!f.truth_path.empty() && !std::filesystem::exists(m.truth_file(f)))
      throw IoError(path.string() + ": missing truth " + m.truth_file(f).string());
  }
  return m;
}

DatasetManifest split_dataset(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
  if (manifest.frames.empty()) throw ValidationError("split_dataset: empty manifest");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("split_dataset: fraction must be in (0, 1)");
  const std::size_t n = manifest.frames.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));
  DatasetManifest out = manifest;
  for (std::size_t k = 0; k < n; ++k) out.frames[order[k]].split = k < n_train ? Split::Train : Split::Test;
  return out;
}

std::string iso8601_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

AnnotationStore::AnnotationStore(std::filesystem::path path, std::vector<DatasetManifest> manifests)
    : path_(std::move(path)), manifests_(std::move(manifests)) {
  read_file();
}

void AnnotationStore::read_file() {
  if (!std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  if (!in) throw IoError(path_.string() + ": cannot open annotations");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      AnnotationRecord r;
      r.frame_id = j.at("frame_id").get<std::string>();
      r.average_intensity = j.at("average_intensity").get<double>();
      r.manual_threshold = j.at("manual_threshold").get<double>();
      r.annotated_at = j.value("annotated_at", std::string());
      r.config_hash = j.at("config_hash").get<std::string>();
      records_[{r.frame_id, r.config_hash}] = r;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path_.string() + ":" + std::to_string(line_no) + ": malformed annotation (" + e.what() + ")");
    }
  }
}

void AnnotationStore::write_file() const {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  const auto tmp = std::filesystem::path(path_.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw IoError(tmp.string() + ": cannot open for writing");
    for (const auto& [key, r] : records_) {
      const nlohmann::json j = {{"frame_id", r.frame_id},
                                {"average_intensity", r.average_intensity},
                                {"manual_threshold", r.manual_threshold},
                                {"annotated_at", r.annotated_at},
                                {"config_hash", r.config_hash}};
      out << j.dump() << "\n";
    }
    if (!out) throw IoError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path_);
}

std::optional<std::pair<const DatasetManifest*, const FrameEntry*>> AnnotationStore::locate(
    const std::string& frame_id) const {
  for (const auto& m : manifests_)
    if (const auto* f = m.find(frame_id)) return std::make_pair(&m, f);
  return std::nullopt;
}

void AnnotationStore::record(const AnnotationRecord& rec) {
  if (!locate(rec.frame_id)) throw ValidationError("unknown frame '" + rec.frame_id + "'");
  if (!(rec.average_intensity >= 0.0)) throw ValidationError("annotation: average_intensity must be >= 0");
  std::lock_guard lock(mutex_);
  records_[{rec.frame_id, rec.config_hash}] = rec;
  write_file();
}

std::vector<LabeledAnnotation> AnnotationStore::load(const std::string& category) const {
  std::lock_guard lock(mutex_);
  std::vector<LabeledAnnotation> out;
  for (const auto& [key, r] : records_) {
    const auto where = locate(r.frame_id);
    if (!where || where->first->category != category) continue;
    out.push_back({r, category, where->second->split});
  }
  return out;
}

bool AnnotationStore::is_annotated(const std::string& frame_id) const {
  std::lock_guard lock(mutex_);
  auto it = records_.lower_bound({frame_id, std::string()});
  return it != records_.end() && it->first.first == frame_id;
}

}  // namespace ntd
