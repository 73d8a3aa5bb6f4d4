#include "ntd/error.hpp"
#include "ntd/neural.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

namespace {

std::vector<ntd::TrainingRecord> line_records(int n, double slope, double offset) {
  std::vector<ntd::TrainingRecord> recs;
  for (int i = 0; i < n; ++i) {
    const double x = 20.0 + 10.0 * i;
    recs.push_back({"f" + std::to_string(i), {x}, slope * x + offset});
  }
  return recs;
}

ntd::MlpModel random_model(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  auto m = ntd::MlpModel::zeros("x", 1, 8);
  for (Eigen::Index i = 0; i < m.w1.size(); ++i) m.w1.data()[i] = u(gen);
  for (Eigen::Index i = 0; i < m.b1.size(); ++i) m.b1(i) = u(gen);
  for (Eigen::Index i = 0; i < m.w2.size(); ++i) m.w2(i) = u(gen);
  m.b2 = u(gen);
  m.norm.x_min = Eigen::VectorXd::Constant(1, 10.0);
  m.norm.x_max = Eigen::VectorXd::Constant(1, 90.0);
  m.norm.t_min = 50.0;
  m.norm.t_max = 200.0;
  return m;
}

}  // namespace

TEST_CASE("zero model predicts the bottom of the target range") {
  auto m = ntd::MlpModel::zeros("c");
  m.norm.t_min = 3.0;
  m.norm.t_max = 7.0;
  CHECK(ntd::mlp_predict(m, {0.5}) == doctest::Approx(3.0));
}

TEST_CASE("mlp_predict rejects wrong feature counts") {
  auto m = ntd::MlpModel::zeros("c");
  CHECK_THROWS_AS(ntd::mlp_predict(m, {}), ntd::ValidationError);
  CHECK_THROWS_AS(ntd::mlp_predict(m, {1.0, 2.0}), ntd::ValidationError);
}

TEST_CASE("gradient check on random models") {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> x(10.0, 90.0), t(50.0, 200.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_model(gen);
    const auto g = ntd::gradient_check(m, {"r", {x(gen)}, t(gen)}, 1e-5);
    CHECK(g.max_relative_error <= 1e-6);
  }
}

TEST_CASE("gradient check works for tanh too") {
  std::mt19937_64 gen(22);
  auto m = random_model(gen);
  m.activation = ntd::Activation::Tanh;
  CHECK(ntd::gradient_check(m, {"r", {40.0}, 120.0}, 1e-5).max_relative_error <= 1e-6);
}

TEST_CASE("gradient check validates eps") {
  std::mt19937_64 gen(23);
  const auto m = random_model(gen);
  CHECK_THROWS_AS(ntd::gradient_check(m, {"r", {40.0}, 120.0}, 0.0), ntd::ValidationError);
  CHECK_THROWS_AS(ntd::gradient_check(m, {"r", {40.0}, 120.0}, 0.1), ntd::ValidationError);
}

TEST_CASE("training fits a line and is reproducible") {
  const auto recs = line_records(9, 1.5, 30.0);
  const auto a = ntd::mlp_train_detailed(recs, {});
  const auto b = ntd::mlp_train_detailed(recs, {});
  CHECK(a.final_loss < a.initial_loss);
  CHECK(a.rmse <= 0.02 * (1.5 * 100.0));
  CHECK((a.model.w1.array() == b.model.w1.array()).all());
  CHECK((a.model.w2.array() == b.model.w2.array()).all());
  CHECK(a.model.b2 == b.model.b2);
  CHECK(ntd::mlp_predict(a.model, {55.0}) == doctest::Approx(1.5 * 55.0 + 30.0).epsilon(0.03));
}

TEST_CASE("different seeds give different weights") {
  const auto recs = line_records(5, 1.0, 0.0);
  ntd::TrainConfig c1, c2;
  c2.seed = 2;
  c1.epochs = c2.epochs = 10;
  CHECK_FALSE((ntd::mlp_train(recs, c1).w1.array() == ntd::mlp_train(recs, c2).w1.array()).all());
}

TEST_CASE("training needs at least two records") {
  CHECK_THROWS_AS(ntd::mlp_train(line_records(1, 1.0, 0.0), {}), ntd::ValidationError);
}

TEST_CASE("degenerate training sets are rejected") {
  std::vector<ntd::TrainingRecord> flat_t{{"a", {1.0}, 5.0}, {"b", {2.0}, 5.0}};
  CHECK_THROWS_AS(ntd::mlp_train(flat_t, {}), ntd::ValidationError);
  std::vector<ntd::TrainingRecord> flat_x{{"a", {1.0}, 5.0}, {"b", {1.0}, 6.0}};
  CHECK_THROWS_AS(ntd::mlp_train(flat_x, {}), ntd::ValidationError);
}

TEST_CASE("linear baseline averages ratios") {
  std::vector<ntd::TrainingRecord> recs{{"a", {10.0}, 20.0}, {"b", {10.0}, 40.0}};
  const double k = ntd::linear_baseline_fit(recs);
  CHECK(k == doctest::Approx(3.0));
  CHECK(ntd::linear_baseline_predict(k, {7.0}) == doctest::Approx(21.0));
  std::vector<ntd::TrainingRecord> bad{{"a", {0.0}, 1.0}};
  CHECK_THROWS_AS(ntd::linear_baseline_fit(bad), ntd::ValidationError);
}

TEST_CASE("model json round trip is exact") {
  const auto m = ntd::mlp_train(line_records(6, 2.0, 1.0), {});
  const auto back = ntd::model_from_json(ntd::model_to_json(m));
  CHECK(ntd::model_to_json(back).dump() == ntd::model_to_json(m).dump());
  CHECK(ntd::mlp_predict(back, {33.0}) == ntd::mlp_predict(m, {33.0}));
}

TEST_CASE("model json errors are descriptive") {
  auto j = ntd::model_to_json(ntd::MlpModel::zeros("c"));
  j["schema_version"] = 99;
  CHECK_THROWS_WITH_AS(ntd::model_from_json(j), doctest::Contains("schema_version"), ntd::ValidationError);
  j = ntd::model_to_json(ntd::MlpModel::zeros("c"));
  j.erase("w2");
  CHECK_THROWS_WITH_AS(ntd::model_from_json(j), doctest::Contains("w2"), ntd::ValidationError);
}

TEST_CASE("registry persists per category") {
  const auto dir = oracle::scratch_dir("registry");
  auto m = ntd::mlp_train(line_records(4, 1.0, 0.0), {});
  m.category = "accel0";
  {
    ntd::ModelRegistry reg(dir);
    CHECK_FALSE(reg.find("accel0").has_value());
    reg.put(m);
  }
  ntd::ModelRegistry reg(dir);
  const auto found = reg.find("accel0");
  REQUIRE(found.has_value());
  CHECK(ntd::model_to_json(*found).dump() == ntd::model_to_json(m).dump());
  CHECK(std::filesystem::exists(dir / "accel0.json"));
}
