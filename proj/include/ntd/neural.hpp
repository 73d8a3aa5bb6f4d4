#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ntd {

enum class Activation { Sigmoid, Tanh };

/// Min-max ranges learned from the training set. Features and targets are
/// mapped to [0,1] on those ranges; values outside extrapolate linearly.
struct Normalization {
  Eigen::VectorXd x_min, x_max;
  double t_min = 0.0, t_max = 1.0;
};

/// One hidden layer, linear output:  y = w2 . f(w1 x + b1) + b2  (normalized units).
struct MlpModel {
  std::string category;
  Eigen::MatrixXd w1;     // hidden x input
  Eigen::VectorXd b1;     // hidden
  Eigen::RowVectorXd w2;  // 1 x hidden
  double b2 = 0.0;
  Activation activation = Activation::Sigmoid;
  Normalization norm;

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }

  /// Zero-initialized network with identity-like normalization.
  static MlpModel zeros(std::string category, Eigen::Index input_dim = 1, Eigen::Index hidden_dim = 8);
};

struct TrainingRecord {
  std::string frame_id;
  std::vector<double> features;  // features[0] = average intensity of the response map
  double manual_threshold = 0.0;
};

struct TrainConfig {
  int epochs = 5000;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;
  double init_scale = 0.5;
  Eigen::Index hidden_dim = 8;
  Activation activation = Activation::Sigmoid;
};

struct TrainResult {
  MlpModel model;
  double initial_loss = 0.0;  // normalized-space MSE
  double final_loss = 0.0;
  double rmse = 0.0;          // threshold units, on the training records
};

double mlp_predict(const MlpModel& model, const std::vector<double>& features);

TrainResult mlp_train_detailed(const std::vector<TrainingRecord>& records, const TrainConfig& cfg);
MlpModel mlp_train(const std::vector<TrainingRecord>& records, const TrainConfig& cfg);

/// Squared error of one record in normalized target space.
double record_loss(const MlpModel& model, const TrainingRecord& record);

struct GradientCheck {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
};

/// Analytic gradient of record_loss vs central differences, over every
/// weight and bias. Relative error uses max(|analytic|, |numeric|, 1e-6) as
/// the denominator so exactly-zero gradients compare absolutely.
GradientCheck gradient_check(const MlpModel& model, const TrainingRecord& record, double eps);

/// Ratio estimator threshold = k * feature[0], k = mean(threshold / feature[0]).
double linear_baseline_fit(const std::vector<TrainingRecord>& records);
double linear_baseline_predict(double k, const std::vector<double>& features);

inline constexpr int kModelSchemaVersion = 1;

nlohmann::json model_to_json(const MlpModel& model);
MlpModel model_from_json(const nlohmann::json& j);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

/// One model per image category, persisted as <dir>/<category>.json.
class ModelRegistry {
 public:
  explicit ModelRegistry(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void put(const MlpModel& model);
  /// Copy of the category's model, loading from disk on first use.
  std::optional<MlpModel> find(const std::string& category);
  std::filesystem::path path_for(const std::string& category) const;

 private:
  std::filesystem::path dir_;
  std::mutex mutex_;
  std::map<std::string, MlpModel> models_;
};

}  // namespace ntd
