#include "ntd/service.hpp"
#include "ntd/synth.hpp"

#include "oracles.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

using nlohmann::json;

namespace {

struct Fixture {
  std::filesystem::path dir;
  ntd::DatasetManifest manifest;
  std::unique_ptr<ntd::AnnotationService> service;
  std::unique_ptr<httplib::Client> client;

  explicit Fixture(const std::string& name, int frames = 6) {
    dir = oracle::scratch_dir(name);
    auto spec = ntd::SceneSpec::defaults(ntd::Category::Accel0);
    spec.frame_size = 96;
    spec.track_count_mean = 2;
    manifest = ntd::split_dataset(ntd::generate_corpus(spec, frames, 10, dir / "corpus"), 0.5, 3);
    ntd::save_manifest(manifest, dir / "corpus" / "manifest.json");
    manifest = ntd::load_manifest(dir / "corpus" / "manifest.json");
    ntd::ServiceOptions opts{{manifest}, dir / "annotations.jsonl", dir / "models",
                             ntd::PipelineConfig::for_radius(9.0), {}, {}};
    opts.train.epochs = 500;
    service = std::make_unique<ntd::AnnotationService>(std::move(opts));
    const int port = service->start("127.0.0.1", 0);
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }

  std::string first(ntd::Split s) const {
    for (const auto& f : manifest.frames)
      if (f.split == s) return f.frame_id;
    return {};
  }

  json get_json(const std::string& path, int expect = 200) {
    auto res = client->Get(path);
    REQUIRE(res);
    CHECK(res->status == expect);
    return json::parse(res->body);
  }

  int post(const std::string& path, const json& body) {
    auto res = client->Post(path, body.dump(), "application/json");
    REQUIRE(res);
    return res->status;
  }
};

}  // namespace

TEST_CASE("frame listing is complete and ordered") {
  Fixture fx("svc_list");
  const json list = fx.get_json("/api/frames");
  REQUIRE(list.size() == 6);
  for (std::size_t i = 1; i < list.size(); ++i) CHECK(list[i - 1]["frame_id"] < list[i]["frame_id"]);
  CHECK(list[0]["annotated"] == false);
  CHECK(list[0]["category"] == "accel0");
  CHECK(fx.get_json("/api/frames") == list);
}

TEST_CASE("preview thresholds and caching") {
  Fixture fx("svc_preview");
  const std::string id = fx.first(ntd::Split::Train);
  const json stats = fx.get_json("/api/frames/" + id + "/stats");
  const double hi = stats["max_response"], mean = stats["average_intensity"];

  auto at = [&](double t) {
    auto res = fx.client->Get("/api/frames/" + id + "/preview?t=" + std::to_string(t));
    REQUIRE(res);
    REQUIRE(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "image/png");
    return std::make_pair(std::stoi(res->get_header_value("X-Peak-Count")), res->body);
  };
  const auto top = at(hi);
  CHECK(top.first == 0);
  const auto mid = at(0.5 * (hi + mean));
  CHECK(at(0.5 * (hi + mean)).second == mid.second);

  const json inc = fx.get_json("/api/debug/frames/" + id + "/inclusion?lo=" + std::to_string(mean) +
                               "&hi=" + std::to_string(0.5 * (hi + mean)));
  CHECK(inc["subset"] == true);
  CHECK(inc["foreground_lo"] >= inc["foreground_hi"]);
}

TEST_CASE("preview errors") {
  Fixture fx("svc_preview_err");
  const std::string id = fx.first(ntd::Split::Train);
  auto res = fx.client->Get("/api/frames/" + id + "/preview?t=abc");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body).contains("error"));
  res = fx.client->Get("/api/frames/" + id + "/preview");
  CHECK(res->status == 400);
  res = fx.client->Get("/api/frames/nope/preview?t=1");
  CHECK(res->status == 404);
  CHECK(json::parse(res->body).contains("error"));
  res = fx.client->Get("/api/unknown");
  CHECK(res->status == 404);
  CHECK(json::parse(res->body).contains("error"));
}

TEST_CASE("annotation contract") {
  Fixture fx("svc_annotate");
  const std::string train = fx.first(ntd::Split::Train), test = fx.first(ntd::Split::Test);
  CHECK(fx.post("/api/frames/" + test + "/annotation", {{"threshold", 10.0}}) == 409);
  CHECK(fx.post("/api/frames/nope/annotation", {{"threshold", 10.0}}) == 404);
  CHECK(fx.post("/api/frames/" + train + "/annotation", {{"t", 10.0}}) == 400);
  CHECK(fx.post("/api/frames/" + train + "/annotation", {{"threshold", 10.0}}) == 204);
  CHECK(fx.post("/api/frames/" + train + "/annotation", {{"threshold", 12.0}}) == 204);
  const json list = fx.get_json("/api/frames");
  for (const auto& e : list) CHECK(e["annotated"] == (e["frame_id"] == train));
  ntd::AnnotationStore store(fx.dir / "annotations.jsonl", {fx.manifest});
  const auto recs = store.load("accel0");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].record.manual_threshold == 12.0);
}

TEST_CASE("train and predict") {
  Fixture fx("svc_train");
  const std::string test = fx.first(ntd::Split::Test);
  fx.get_json("/api/frames/" + test + "/prediction", 409);
  CHECK(fx.post("/api/train", {{"category", "accel0"}}) == 400);
  CHECK(fx.post("/api/train", {{"category", "nope"}}) == 404);

  int k = 0;
  for (const auto& f : fx.manifest.frames) {
    if (f.split != ntd::Split::Train) continue;
    const json stats = fx.get_json("/api/frames/" + f.frame_id + "/stats");
    const double t = 0.5 * (double(stats["max_response"]) + double(stats["average_intensity"])) + k++;
    CHECK(fx.post("/api/frames/" + f.frame_id + "/annotation", {{"threshold", t}}) == 204);
  }
  auto res = fx.client->Post("/api/train", json{{"category", "accel0"}}.dump(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  const json trained = json::parse(res->body);
  CHECK(trained["n_records"] == 3);
  CHECK(trained["final_rmse"].get<double>() >= 0.0);
  CHECK(std::filesystem::exists(fx.dir / "models" / "accel0.json"));

  const json p1 = fx.get_json("/api/frames/" + test + "/prediction");
  const json p2 = fx.get_json("/api/frames/" + test + "/prediction");
  CHECK(p1 == p2);
  CHECK(p1["count"].get<int>() == static_cast<int>(p1["centroids"].size()));
}
