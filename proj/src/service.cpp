#include "ntd/service.hpp"

#include "ntd/error.hpp"
#include "ntd/eval.hpp"
#include "ntd/image.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

namespace ntd {
namespace {

using nlohmann::json;

struct HttpError : std::runtime_error {
  HttpError(int s, const std::string& msg) : std::runtime_error(msg), status(s) {}
  int status;
};

struct CachedResponse {
  ResponseMap response;
  double average_intensity = 0.0;
  GrayImage frame;
};

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

double parse_real(const std::string& text, const std::string& name) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw HttpError(400, "parameter '" + name + "' must be a finite real, got '" + text + "'");
}

double query_real(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name)) throw HttpError(400, "missing query parameter '" + name + "'");
  return parse_real(req.get_param_value(name), name);
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw HttpError(400, std::string("malformed JSON body: ") + e.what());
  }
}

json centroids_json(const PeakReport& report) {
  json out = json::array();
  for (const auto& p : report.peaks) out.push_back({{"row", p.row}, {"col", p.col}, {"area", p.area}});
  return out;
}

}  // namespace

struct AnnotationService::Impl {
  explicit Impl(ServiceOptions o)
      : opts(std::move(o)),
        hash(config_hash(opts.config)),
        store(opts.annotations, opts.manifests),
        registry(opts.models_dir) {
    opts.config.validate();
    routes();
  }

  ServiceOptions opts;
  std::string hash;
  AnnotationStore store;
  ModelRegistry registry;
  httplib::Server server;
  std::thread worker;

  std::mutex cache_mutex;
  std::map<std::pair<std::string, std::string>, std::shared_ptr<const CachedResponse>> cache;
  std::mutex writer;  // annotation writes and training

  std::pair<const DatasetManifest*, const FrameEntry*> frame(const std::string& id) const {
    auto hit = store.locate(id);
    if (!hit) throw HttpError(404, "unknown frame '" + id + "'");
    return *hit;
  }

  std::shared_ptr<const CachedResponse> response_for(const std::string& id) {
    const auto key = std::make_pair(id, hash);
    {
      std::lock_guard<std::mutex> lock(cache_mutex);
      auto it = cache.find(key);
      if (it != cache.end()) return it->second;
    }
    auto [manifest, entry] = frame(id);
    auto entry_data = std::make_shared<CachedResponse>();
    entry_data->frame = load_image(manifest->image_file(*entry));
    entry_data->response = enhance(entry_data->frame, opts.config);
    entry_data->average_intensity = average_intensity(entry_data->response);
    std::lock_guard<std::mutex> lock(cache_mutex);
    return cache.emplace(key, std::move(entry_data)).first->second;
  }

  void routes() {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const HttpError& e) {
        send_json(res, {{"error", e.what()}}, e.status);
      } catch (const ValidationError& e) {
        send_json(res, {{"error", e.what()}}, 400);
      } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}}, 500);
      } catch (...) {
        send_json(res, {{"error", "unknown error"}}, 500);
      }
    });
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      const std::string msg = res.status == 404 ? "not found: " + req.path : "request failed";
      send_json(res, {{"error", msg}}, res.status);
      return httplib::Server::HandlerResponse::Handled;
    });

    server.Get("/api/frames", [this](const httplib::Request&, httplib::Response& res) {
      std::vector<std::pair<std::string, json>> rows;
      for (const auto& m : store.manifests())
        for (const auto& f : m.frames)
          rows.emplace_back(f.frame_id, json{{"frame_id", f.frame_id},
                                             {"category", m.category},
                                             {"split", to_string(f.split)},
                                             {"annotated", store.is_annotated(f.frame_id)}});
      std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      json out = json::array();
      for (auto& r : rows) out.push_back(std::move(r.second));
      send_json(res, out);
    });

    server.Get(R"(/api/frames/([^/]+)/preview)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      frame(id);
      const double t = query_real(req, "t");
      const auto cached = response_for(id);
      const auto analysis = analyze_response(cached->response, opts.config, t);
      const auto png = encode_png(render_overlay(cached->frame, analysis.report));
      res.set_header("X-Peak-Count", std::to_string(analysis.report.count));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });

    server.Get(R"(/api/frames/([^/]+)/stats)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto cached = response_for(req.matches[1]);
      send_json(res, {{"frame_id", std::string(req.matches[1])},
                      {"average_intensity", cached->average_intensity},
                      {"max_response", cached->response.maxCoeff()},
                      {"min_response", cached->response.minCoeff()},
                      {"config_hash", hash}});
    });

    server.Get(R"(/api/debug/frames/([^/]+)/inclusion)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto cached = response_for(req.matches[1]);
      const double lo = query_real(req, "lo"), hi = query_real(req, "hi");
      if (lo > hi) throw HttpError(400, "lo must not exceed hi");
      const BinaryMap fg_lo = apply_threshold(cached->response, lo);
      const BinaryMap fg_hi = apply_threshold(cached->response, hi);
      const bool subset = !(fg_hi && !fg_lo).any();
      send_json(res, {{"subset", subset},
                      {"foreground_lo", fg_lo.count()},
                      {"foreground_hi", fg_hi.count()}});
    });

    server.Post(R"(/api/frames/([^/]+)/annotation)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      auto [manifest, entry] = frame(id);
      if (entry->split != Split::Train)
        throw HttpError(409, "frame '" + id + "' is in the " + to_string(entry->split) + " split");
      const json body = parse_body(req);
      if (!body.is_object() || !body.contains("threshold") || !body["threshold"].is_number())
        throw HttpError(400, "body must be {\"threshold\": number}");
      const double t = body["threshold"].get<double>();
      if (!std::isfinite(t)) throw HttpError(400, "threshold must be finite");
      const auto cached = response_for(id);
      std::lock_guard<std::mutex> lock(writer);
      store.record({id, cached->average_intensity, t, iso8601_now(), hash});
      res.status = 204;
    });

    server.Post("/api/train", [this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      if (!body.is_object() || !body.contains("category") || !body["category"].is_string())
        throw HttpError(400, "body must be {\"category\": string}");
      const std::string category = body["category"];
      const bool known = std::any_of(store.manifests().begin(), store.manifests().end(),
                                     [&](const DatasetManifest& m) { return m.category == category; });
      if (!known) throw HttpError(404, "no frames of category '" + category + "'");

      std::lock_guard<std::mutex> lock(writer);
      const auto records = annotated_records(store, category, opts.config);
      if (records.size() < 2)
        throw HttpError(400, "need at least 2 annotated training frames, have " + std::to_string(records.size()));
      auto result = mlp_train_detailed(records, opts.train);
      result.model.category = category;
      registry.put(result.model);
      send_json(res, {{"final_rmse", result.rmse}, {"n_records", records.size()}});
    });

    server.Get(R"(/api/frames/([^/]+)/prediction)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      auto [manifest, entry] = frame(id);
      const auto model = registry.find(manifest->category);
      if (!model) throw HttpError(409, "no trained model for category '" + manifest->category + "'");
      const auto cached = response_for(id);
      const double t = mlp_predict(*model, response_features(cached->response));
      const auto analysis = analyze_response(cached->response, opts.config, t);
      send_json(res, {{"frame_id", id},
                      {"threshold", t},
                      {"count", analysis.report.count},
                      {"centroids", centroids_json(analysis.report)}});
    });

    if (!opts.ui_dir.empty() && !server.set_mount_point("/", opts.ui_dir.string()))
      throw IoError("UI directory not found: " + opts.ui_dir.string());
  }
};

AnnotationService::AnnotationService(ServiceOptions opts) : impl_(std::make_unique<Impl>(std::move(opts))) {}

AnnotationService::~AnnotationService() { stop(); }

int AnnotationService::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void AnnotationService::serve() { impl_->server.listen_after_bind(); }

int AnnotationService::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  impl_->worker = std::thread([this] { serve(); });
  impl_->server.wait_until_ready();
  return bound;
}

void AnnotationService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace ntd
