#include "ntd/neural.hpp"

#include "ntd/error.hpp"
#include "ntd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace ntd {
namespace {

double activate(Activation a, double z) {
  return a == Activation::Sigmoid ? 1.0 / (1.0 + std::exp(-z)) : std::tanh(z);
}

// Derivative expressed through the activation value h = f(z).
double activate_slope(Activation a, double h) { return a == Activation::Sigmoid ? h * (1.0 - h) : 1.0 - h * h; }

void check_model(const MlpModel& m) {
  if (m.w1.rows() < 1 || m.w1.cols() < 1) throw ValidationError("model: empty network");
  if (m.b1.size() != m.w1.rows() || m.w2.size() != m.w1.rows()) throw ValidationError("model: inconsistent layer sizes");
  if (m.norm.x_min.size() != m.w1.cols() || m.norm.x_max.size() != m.w1.cols())
    throw ValidationError("model: normalization does not match input size");
}

Eigen::VectorXd normalize_features(const MlpModel& m, const std::vector<double>& features) {
  if (static_cast<Eigen::Index>(features.size()) != m.input_dim())
    throw ValidationError("mlp_predict: expected " + std::to_string(m.input_dim()) + " features, got " +
                          std::to_string(features.size()));
  Eigen::VectorXd x(m.input_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x(i) = (features[i] - m.norm.x_min(i)) / (m.norm.x_max(i) - m.norm.x_min(i));
  return x;
}

double normalize_target(const MlpModel& m, double t) { return (t - m.norm.t_min) / (m.norm.t_max - m.norm.t_min); }

struct Gradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::RowVectorXd w2;
  double b2 = 0.0;
};

// Mean squared error over the batch (columns of x) and, optionally, its gradient.
double batch_loss(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::RowVectorXd& t, Gradients* grad) {
  const double n = static_cast<double>(x.cols());
  Eigen::MatrixXd h = (m.w1 * x).colwise() + m.b1;
  h = h.unaryExpr([&](double z) { return activate(m.activation, z); });
  const Eigen::RowVectorXd y = (m.w2 * h).array() + m.b2;
  const Eigen::RowVectorXd residual = y - t;
  const double loss = residual.squaredNorm() / n;
  if (grad) {
    const Eigen::RowVectorXd delta = 2.0 * residual / n;
    grad->w2 = delta * h.transpose();
    grad->b2 = delta.sum();
    Eigen::MatrixXd dz = m.w2.transpose() * delta;
    dz.array() *= h.unaryExpr([&](double v) { return activate_slope(m.activation, v); }).array();
    grad->w1 = dz * x.transpose();
    grad->b1 = dz.rowwise().sum();
  }
  return loss;
}

void step(MlpModel& m, const Gradients& g, double lr) {
  m.w1 -= lr * g.w1;
  m.b1 -= lr * g.b1;
  m.w2 -= lr * g.w2;
  m.b2 -= lr * g.b2;
}

// Flat views used by the finite-difference check.
std::vector<double*> parameters(MlpModel& m) {
  std::vector<double*> p;
  for (Eigen::Index i = 0; i < m.w1.size(); ++i) p.push_back(m.w1.data() + i);
  for (Eigen::Index i = 0; i < m.b1.size(); ++i) p.push_back(m.b1.data() + i);
  for (Eigen::Index i = 0; i < m.w2.size(); ++i) p.push_back(m.w2.data() + i);
  p.push_back(&m.b2);
  return p;
}

std::vector<double> flatten(const Gradients& g) {
  std::vector<double> v(g.w1.data(), g.w1.data() + g.w1.size());
  v.insert(v.end(), g.b1.data(), g.b1.data() + g.b1.size());
  v.insert(v.end(), g.w2.data(), g.w2.data() + g.w2.size());
  v.push_back(g.b2);
  return v;
}

std::vector<double> json_vector(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  std::vector<double> v;
  v.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  return v;
}

const nlohmann::json& field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name)) throw ValidationError(std::string("model file: missing field '") + name + "'");
  return j.at(name);
}

Eigen::VectorXd read_vector(const nlohmann::json& j, const char* name, Eigen::Index expected) {
  const auto& arr = field(j, name);
  if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != expected)
    throw ValidationError(std::string("model file: field '") + name + "' has wrong length");
  Eigen::VectorXd v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v(i) = arr[i].get<double>();
  return v;
}

}  // namespace

MlpModel MlpModel::zeros(std::string category, Eigen::Index input_dim, Eigen::Index hidden_dim) {
  MlpModel m;
  m.category = std::move(category);
  m.w1 = Eigen::MatrixXd::Zero(hidden_dim, input_dim);
  m.b1 = Eigen::VectorXd::Zero(hidden_dim);
  m.w2 = Eigen::RowVectorXd::Zero(hidden_dim);
  m.norm.x_min = Eigen::VectorXd::Zero(input_dim);
  m.norm.x_max = Eigen::VectorXd::Ones(input_dim);
  return m;
}

double mlp_predict(const MlpModel& model, const std::vector<double>& features) {
  check_model(model);
  const Eigen::VectorXd x = normalize_features(model, features);
  const Eigen::VectorXd h =
      (model.w1 * x + model.b1).unaryExpr([&](double z) { return activate(model.activation, z); });
  const double y = model.w2.dot(h) + model.b2;
  return model.norm.t_min + y * (model.norm.t_max - model.norm.t_min);
}

double record_loss(const MlpModel& model, const TrainingRecord& record) {
  const Eigen::MatrixXd x = normalize_features(model, record.features);
  Eigen::RowVectorXd t(1);
  t(0) = normalize_target(model, record.manual_threshold);
  return batch_loss(model, x, t, nullptr);
}

TrainResult mlp_train_detailed(const std::vector<TrainingRecord>& records, const TrainConfig& cfg) {
  if (records.size() < 2) throw ValidationError("mlp_train: too few records (need at least 2)");
  if (cfg.epochs <= 0 || !(cfg.learning_rate > 0.0)) throw ValidationError("mlp_train: epochs and learning_rate must be > 0");
  const auto dim = static_cast<Eigen::Index>(records.front().features.size());
  if (dim < 1) throw ValidationError("mlp_train: records have no features");

  MlpModel m = MlpModel::zeros("", dim, cfg.hidden_dim);
  m.activation = cfg.activation;
  m.norm.x_min = Eigen::VectorXd::Constant(dim, std::numeric_limits<double>::infinity());
  m.norm.x_max = Eigen::VectorXd::Constant(dim, -std::numeric_limits<double>::infinity());
  m.norm.t_min = std::numeric_limits<double>::infinity();
  m.norm.t_max = -std::numeric_limits<double>::infinity();
  for (const auto& r : records) {
    if (static_cast<Eigen::Index>(r.features.size()) != dim)
      throw ValidationError("mlp_train: records disagree on feature count");
    for (Eigen::Index i = 0; i < dim; ++i) {
      m.norm.x_min(i) = std::min(m.norm.x_min(i), r.features[i]);
      m.norm.x_max(i) = std::max(m.norm.x_max(i), r.features[i]);
    }
    m.norm.t_min = std::min(m.norm.t_min, r.manual_threshold);
    m.norm.t_max = std::max(m.norm.t_max, r.manual_threshold);
  }
  if (!(m.norm.t_max > m.norm.t_min)) throw ValidationError("mlp_train: degenerate targets (all thresholds equal)");
  if (!((m.norm.x_max - m.norm.x_min).array() > 0.0).all())
    throw ValidationError("mlp_train: degenerate features (a feature is constant over the records)");

  Rng rng(cfg.seed);
  auto init = [&](double& w) { w = rng.uniform(-cfg.init_scale, cfg.init_scale); };
  for (Eigen::Index i = 0; i < m.w1.size(); ++i) init(m.w1.data()[i]);
  for (Eigen::Index i = 0; i < m.b1.size(); ++i) init(m.b1.data()[i]);
  for (Eigen::Index i = 0; i < m.w2.size(); ++i) init(m.w2.data()[i]);
  init(m.b2);

  const auto n = static_cast<Eigen::Index>(records.size());
  Eigen::MatrixXd x(dim, n);
  Eigen::RowVectorXd t(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    x.col(k) = normalize_features(m, records[k].features);
    t(k) = normalize_target(m, records[k].manual_threshold);
  }

  TrainResult result;
  Gradients grad;
  double loss = batch_loss(m, x, t, &grad);
  result.initial_loss = loss;
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    MlpModel candidate = m;
    step(candidate, grad, lr);
    Gradients candidate_grad;
    const double candidate_loss = batch_loss(candidate, x, t, &candidate_grad);
    if (candidate_loss <= loss) {
      m = std::move(candidate);
      grad = std::move(candidate_grad);
      loss = candidate_loss;
    } else {
      lr *= 0.5;
    }
  }
  result.final_loss = loss;
  result.rmse = std::sqrt(loss) * (m.norm.t_max - m.norm.t_min);
  result.model = std::move(m);
  return result;
}

MlpModel mlp_train(const std::vector<TrainingRecord>& records, const TrainConfig& cfg) {
  return mlp_train_detailed(records, cfg).model;
}

GradientCheck gradient_check(const MlpModel& model, const TrainingRecord& record, double eps) {
  if (!(eps > 0.0) || eps > 1e-3) throw ValidationError("gradient_check: eps must be in (0, 1e-3]");
  check_model(model);
  const Eigen::MatrixXd x = normalize_features(model, record.features);
  Eigen::RowVectorXd t(1);
  t(0) = normalize_target(model, record.manual_threshold);

  Gradients grad;
  batch_loss(model, x, t, &grad);
  const std::vector<double> analytic = flatten(grad);

  MlpModel probe = model;
  const auto params = parameters(probe);
  GradientCheck out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + eps;
    const double up = batch_loss(probe, x, t, nullptr);
    *params[i] = saved - eps;
    const double down = batch_loss(probe, x, t, nullptr);
    *params[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double abs_err = std::abs(analytic[i] - numeric);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    out.max_absolute_error = std::max(out.max_absolute_error, abs_err);
    out.max_relative_error = std::max(out.max_relative_error, abs_err / scale);
  }
  return out;
}

double linear_baseline_fit(const std::vector<TrainingRecord>& records) {
  if (records.empty()) throw ValidationError("linear_baseline_fit: no records");
  double sum = 0.0;
  for (const auto& r : records) {
    if (r.features.empty() || !(r.features[0] > 0.0))
      throw ValidationError("linear_baseline_fit: average intensity must be > 0 (frame " + r.frame_id + ")");
    sum += r.manual_threshold / r.features[0];
  }
  return sum / static_cast<double>(records.size());
}

double linear_baseline_predict(double k, const std::vector<double>& features) {
  if (features.empty()) throw ValidationError("linear_baseline_predict: no features");
  return k * features[0];
}

nlohmann::json model_to_json(const MlpModel& m) {
  check_model(m);
  return {
      {"schema_version", kModelSchemaVersion},
      {"category", m.category},
      {"input_dim", m.input_dim()},
      {"hidden_dim", m.hidden_dim()},
      {"activation", m.activation == Activation::Sigmoid ? "sigmoid" : "tanh"},
      {"w1", json_vector(m.w1)},
      {"b1", json_vector(m.b1)},
      {"w2", json_vector(m.w2)},
      {"b2", m.b2},
      {"norm",
       {{"x_min", json_vector(m.norm.x_min)},
        {"x_max", json_vector(m.norm.x_max)},
        {"t_min", m.norm.t_min},
        {"t_max", m.norm.t_max}}},
  };
}

MlpModel model_from_json(const nlohmann::json& j) {
  try {
    const int version = field(j, "schema_version").get<int>();
    if (version != kModelSchemaVersion)
      throw ValidationError("model file: unsupported schema_version " + std::to_string(version));
    const auto input = field(j, "input_dim").get<Eigen::Index>();
    const auto hidden = field(j, "hidden_dim").get<Eigen::Index>();
    if (input < 1 || hidden < 1) throw ValidationError("model file: dimensions must be positive");
    MlpModel m = MlpModel::zeros(field(j, "category").get<std::string>(), input, hidden);
    const auto act = field(j, "activation").get<std::string>();
    if (act == "sigmoid")
      m.activation = Activation::Sigmoid;
    else if (act == "tanh")
      m.activation = Activation::Tanh;
    else
      throw ValidationError("model file: unknown activation '" + act + "'");
    const Eigen::VectorXd w1 = read_vector(j, "w1", hidden * input);
    for (Eigen::Index r = 0; r < hidden; ++r)
      for (Eigen::Index c = 0; c < input; ++c) m.w1(r, c) = w1(r * input + c);
    m.b1 = read_vector(j, "b1", hidden);
    m.w2 = read_vector(j, "w2", hidden).transpose();
    m.b2 = field(j, "b2").get<double>();
    const auto& norm = field(j, "norm");
    m.norm.x_min = read_vector(norm, "x_min", input);
    m.norm.x_max = read_vector(norm, "x_max", input);
    m.norm.t_min = field(norm, "t_min").get<double>();
    m.norm.t_max = field(norm, "t_max").get<double>();
    if (!((m.norm.x_max - m.norm.x_min).array() > 0.0).all() || !(m.norm.t_max > m.norm.t_min))
      throw ValidationError("model file: degenerate normalization ranges");
    if (!m.w1.allFinite() || !m.b1.allFinite() || !m.w2.allFinite() || !std::isfinite(m.b2))
      throw ValidationError("model file: non-finite weights");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << model_to_json(model).dump(2) << "\n";
  if (!out) throw IoError(path.string() + ": write failed");
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open model file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed model file (" + e.what() + ")");
  }
  try {
    return model_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::filesystem::path ModelRegistry::path_for(const std::string& category) const { return dir_ / (category + ".json"); }

void ModelRegistry::put(const MlpModel& model) {
  std::lock_guard lock(mutex_);
  std::filesystem::create_directories(dir_);
  save_model(model, path_for(model.category));
  models_[model.category] = model;
}

std::optional<MlpModel> ModelRegistry::find(const std::string& category) {
  std::lock_guard lock(mutex_);
  if (auto it = models_.find(category); it != models_.end()) return it->second;
  const auto path = path_for(category);
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto model = load_model(path);
  models_[category] = model;
  return model;
}

}  // namespace ntd
