#include "ntd/neural.hpp"

#include "oracles.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
};

Run ntd_run(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const std::string cmd = std::string(NTD_BINARY) + " " + args + " > " + out.string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, oracle::read_bytes(out)};
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file();
  if (files.size() != count_b) return false;
  for (const auto& f : files)
    if (oracle::read_bytes(a / f) != oracle::read_bytes(b / f)) return false;
  return !files.empty();
}

}  // namespace

TEST_CASE("gen is byte-identical for identical flags") {
  const auto dir = oracle::scratch_dir("cli_gen");
  for (const char* out : {"a", "b"})
    REQUIRE(ntd_run("gen --category accel30 --count 5 --seed 1 --split 0.75 --out " + (dir / out).string(), dir).code ==
            0);
  CHECK(same_tree(dir / "a", dir / "b"));
  REQUIRE(ntd_run("--threads 1 gen --category accel30 --count 5 --seed 1 --split 0.75 --out " + (dir / "c").string(),
                  dir)
              .code == 0);
  CHECK(same_tree(dir / "a", dir / "c"));
}

TEST_CASE("exit codes") {
  const auto dir = oracle::scratch_dir("cli_codes");
  CHECK(ntd_run("", dir).code == 1);
  CHECK(ntd_run("frobnicate", dir).code == 1);
  CHECK(ntd_run("gen --count 3", dir).code == 1);
  CHECK(ntd_run("split --manifest " + (dir / "missing.json").string() + " --seed 1", dir).code == 2);
  CHECK(ntd_run("gen --category accel45 --count 1 --seed 1 --out " + (dir / "x").string(), dir).code == 3);
  CHECK(ntd_run("--help", dir).code == 0);
}

TEST_CASE("masks and enhance write their outputs") {
  const auto dir = oracle::scratch_dir("cli_masks");
  auto r = ntd_run("masks --out " + (dir / "m").string(), dir);
  REQUIRE(r.code == 0);
  const json masks = json::parse(r.out);
  CHECK(masks["size"] == 37);
  CHECK(ntd::load_image(masks["disk"].get<std::string>()).rows() == 37);

  REQUIRE(ntd_run("gen --category accel0 --count 1 --seed 4 --out " + (dir / "c").string(), dir).code == 0);
  r = ntd_run("enhance --frame " + (dir / "c" / "frames" / "accel0_0000.pgm").string() + " --out " +
                  (dir / "e").string(),
              dir);
  REQUIRE(r.code == 0);
  const json e = json::parse(r.out);
  CHECK(e["average_intensity"].get<double>() > 0.0);
  CHECK(fs::exists(dir / "e" / "response.png"));
}

TEST_CASE("count on a blank frame reports zero tracks") {
  const auto dir = oracle::scratch_dir("cli_blank");
  ntd::save_image(ntd::GrayImage::Constant(128, 128, 0.8), dir / "blank.pgm");
  auto m = ntd::MlpModel::zeros("accel0");
  m.norm.x_min = Eigen::VectorXd::Constant(1, 0.0);
  m.norm.x_max = Eigen::VectorXd::Constant(1, 100.0);
  m.norm.t_min = 100.0;  // well above a flat response of ~51
  m.norm.t_max = 200.0;
  ntd::save_model(m, dir / "model.json");
  const auto r = ntd_run("count --frame " + (dir / "blank.pgm").string() + " --model " +
                             (dir / "model.json").string() + " --overlay " + (dir / "ov.png").string(),
                         dir);
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["count"] == 0);
  CHECK(j["centroids"].empty());
  CHECK(fs::exists(dir / "ov.png"));
}

TEST_CASE("oracle annotate, train, evaluate and compare run end to end") {
  const auto dir = oracle::scratch_dir("cli_flow");
  const std::string corpus = (dir / "c").string(), manifest = corpus + "/manifest.json";
  const std::string ann = (dir / "ann.jsonl").string(), models = (dir / "models").string();
  REQUIRE(ntd_run("gen --category accel0 --count 8 --seed 9 --out " + corpus, dir).code == 0);
  REQUIRE(ntd_run("split --manifest " + manifest + " --fraction 0.75 --seed 2", dir).code == 0);
  auto r = ntd_run("annotate --oracle --timestamp 2026-01-01T00:00:00Z --manifest " + manifest + " --annotations " + ann,
                   dir);
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["n_records"] == 6);

  r = ntd_run("train --category accel0 --manifest " + manifest + " --annotations " + ann + " --models " + models, dir);
  REQUIRE(r.code == 0);
  const std::string model1 = oracle::read_bytes(dir / "models" / "accel0.json");
  r = ntd_run("train --category accel0 --manifest " + manifest + " --annotations " + ann + " --models " + models, dir);
  REQUIRE(r.code == 0);
  CHECK(oracle::read_bytes(dir / "models" / "accel0.json") == model1);

  const std::string base = " --manifest " + manifest + " --annotations " + ann;
  r = ntd_run("evaluate" + base, dir);
  REQUIRE(r.code == 0);
  const json report = json::parse(r.out);
  REQUIRE(report["categories"].size() == 1);
  CHECK(report["categories"][0]["n_test_frames"] == 2);
  CHECK(ntd_run("evaluate" + base, dir).out == r.out);
  CHECK(ntd_run("evaluate --format csv" + base, dir).code == 0);

  r = ntd_run("compare" + base, dir);
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["comparisons"][0].contains("k"));
}
