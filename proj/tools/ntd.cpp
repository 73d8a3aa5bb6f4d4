// ntd: synthetic corpora, enhancement, annotation, training and evaluation.
//
// JSON goes to stdout, diagnostics to stderr. Exit codes: 0 ok, 1 usage,
// 2 I/O, 3 validation.

#include "ntd/datastore.hpp"
#include "ntd/error.hpp"
#include "ntd/eval.hpp"
#include "ntd/image.hpp"
#include "ntd/neural.hpp"
#include "ntd/parallel.hpp"
#include "ntd/pipeline.hpp"
#include "ntd/service.hpp"
#include "ntd/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  unsigned threads = ntd::default_threads();
  std::string config;
};

ntd::PipelineConfig config_of(const Common& c) {
  auto cfg = c.config.empty() ? ntd::PipelineConfig::for_radius(9.0) : ntd::load_config(c.config);
  cfg.validate();
  return cfg;
}

std::vector<ntd::DatasetManifest> manifests_of(const std::vector<std::string>& paths) {
  std::vector<ntd::DatasetManifest> out;
  for (const auto& p : paths) out.push_back(ntd::load_manifest(p));
  return out;
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ntd::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw ntd::IoError("write failed: " + path.string());
}

// Scales to [0, 1] by the maximum so masks and response maps are viewable.
ntd::GrayImage for_display(const ntd::GrayImage& img) {
  const double hi = img.maxCoeff();
  return hi > 0.0 ? ntd::GrayImage(img.max(0.0) / hi) : ntd::GrayImage(ntd::GrayImage::Zero(img.rows(), img.cols()));
}

ntd::AnnotationService* active_service = nullptr;
void on_signal(int) {
  if (active_service) active_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NTD track counting: synthetic corpora, enhancement, annotation, training, evaluation"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--threads", common.threads, "Worker threads (default: available parallelism)")
      ->check(CLI::PositiveNumber);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus.\n"
                                        "Writes frames/*.pgm, truth/*.json, manifest.json; prints "
                                        "{corpus_id, category, count, manifest}");
  std::string gen_category, gen_out, gen_spec;
  int gen_count = 0;
  std::uint64_t gen_seed = 0;
  double gen_fraction = 0.0;
  bool gen_defects = false;
  gen->add_option("--category", gen_category, "accel0 | accel30 | field")->required();
  gen->add_option("--count", gen_count, "Number of frames")->required()->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", gen_seed, "Base seed; frame i uses seed + i")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--spec", gen_spec, "SceneSpec JSON overriding the category defaults");
  gen->add_flag("--defect-heavy", gen_defects, "Artifact-dominated field preset (few pits, many defects)");
  gen->add_option("--split", gen_fraction, "Also split with this train fraction (seeded by --seed)");

  // masks
  auto* masks = app.add_subcommand("masks", "Write gaussian.png and disk.png (scaled to max 1); prints "
                                            "{gaussian, disk, size, sigma, radius}");
  std::string masks_out;
  masks->add_option("--config", common.config, "PipelineConfig JSON");
  masks->add_option("--out", masks_out, "Output directory")->required();

  // enhance
  auto* enh = app.add_subcommand("enhance", "Deconvolve/convolve one frame; writes response.png (scaled) "
                                            "and response.json (raw values); prints {average_intensity, "
                                            "max_response, min_response, response}");
  std::string enh_frame, enh_out;
  enh->add_option("--frame", enh_frame, "Frame image (.png or .pgm)")->required();
  enh->add_option("--config", common.config, "PipelineConfig JSON");
  enh->add_option("--out", enh_out, "Output directory")->required();

  // split
  auto* split = app.add_subcommand("split", "Seeded train/test split, rewritten in place (or to --out); "
                                            "prints {train, test}");
  std::string split_manifest, split_out;
  double split_fraction = 0.75;
  std::uint64_t split_seed = 0;
  split->add_option("--manifest", split_manifest, "manifest.json")->required();
  split->add_option("--fraction", split_fraction, "Train fraction")->check(CLI::Range(0.0, 1.0));
  split->add_option("--seed", split_seed, "Shuffle seed")->required();
  split->add_option("--out", split_out, "Write the split manifest here instead");

  // shared by annotate / train / evaluate / compare
  std::vector<std::string> manifests;
  std::string annotations = "annotations.jsonl", models_dir = "models";
  ntd::TrainConfig train_cfg;
  auto add_store = [&](CLI::App* sub) {
    sub->add_option("--manifest", manifests, "manifest.json (repeatable)")->required();
    sub->add_option("--annotations", annotations, "annotations.jsonl")->capture_default_str();
    sub->add_option("--models", models_dir, "Model directory")->capture_default_str();
    sub->add_option("--config", common.config, "PipelineConfig JSON");
  };
  auto add_train = [&](CLI::App* sub) {
    sub->add_option("--epochs", train_cfg.epochs, "Gradient-descent epochs")->check(CLI::PositiveNumber);
    sub->add_option("--lr", train_cfg.learning_rate, "Initial learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--train-seed", train_cfg.seed, "Weight initialization seed");
  };

  // annotate
  auto* ann = app.add_subcommand("annotate", "Serve the annotation API (and --ui-dir assets), or with "
                                             "--oracle annotate train frames from truth and print "
                                             "{n_records}");
  add_store(ann);
  int port = 8080;
  std::string host = "127.0.0.1", ui_dir, stamp;
  bool oracle = false;
  ann->add_option("--port", port, "Port (0 picks a free one)");
  ann->add_option("--host", host, "Bind address");
  ann->add_option("--ui-dir", ui_dir, "Static UI directory");
  ann->add_flag("--oracle", oracle, "Scripted annotation: threshold between weakest pit and strongest background");
  ann->add_option("--timestamp", stamp, "annotated_at for --oracle records (default: now)");
  add_train(ann);

  // train
  auto* train = app.add_subcommand("train", "Train the threshold MLP for a category from stored annotations; "
                                            "prints {category, n_records, initial_loss, final_loss, "
                                            "final_rmse, model}");
  std::string train_category;
  train->add_option("--category", train_category, "Category")->required();
  add_store(train);
  add_train(train);

  // count
  auto* count = app.add_subcommand("count", "Count tracks on one frame; prints {threshold, count, centroids}");
  std::string count_frame, count_model, count_overlay;
  count->add_option("--frame", count_frame, "Frame image")->required();
  count->add_option("--model", count_model, "Model JSON")->required();
  count->add_option("--config", common.config, "PipelineConfig JSON");
  count->add_option("--overlay", count_overlay, "Write an overlay image here");

  // evaluate / compare
  std::string format = "json", report_out;
  bool reuse = false;
  auto* eval = app.add_subcommand("evaluate", "Train per category on the train split and score the test "
                                              "split; json: {categories: [{category, n_train_records, "
                                              "train_rmse, n_test_frames, total_true_tracks, matched, missed, "
                                              "spurious, track_accuracy, frame_exact_rate, frames}]}");
  add_store(eval);
  add_train(eval);
  eval->add_option("--format", format, "json | table | csv")->check(CLI::IsMember({"json", "table", "csv"}));
  eval->add_option("--out", report_out, "Write the report here instead of stdout");
  eval->add_flag("--reuse-models", reuse, "Use models from --models instead of training");

  auto* cmp = app.add_subcommand("compare", "Neural vs ratio-baseline threshold on the test split; json: "
                                            "{comparisons: [{category, k, summary, frames}]}");
  add_store(cmp);
  add_train(cmp);
  cmp->add_option("--format", format, "json | table")->check(CLI::IsMember({"json", "table"}));
  cmp->add_option("--out", report_out, "Write the report here instead of stdout");
  cmp->add_flag("--reuse-models", reuse, "Use models from --models instead of training");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const auto cat = ntd::parse_category(gen_category);
      ntd::SceneSpec spec = ntd::SceneSpec::defaults(cat);
      if (gen_defects) {
        spec = ntd::SceneSpec::defect_heavy();
        spec.category = cat;
      }
      if (!gen_spec.empty()) {
        std::ifstream in(gen_spec);
        if (!in) throw ntd::IoError("cannot read " + gen_spec);
        spec = ntd::scene_from_json(json::parse(in));
        spec.category = cat;
      }
      auto manifest = ntd::generate_corpus(spec, gen_count, gen_seed, gen_out, common.threads);
      const fs::path mpath = fs::path(gen_out) / "manifest.json";
      if (gen_fraction > 0.0) {
        manifest = ntd::split_dataset(manifest, gen_fraction, gen_seed);
        ntd::save_manifest(manifest, mpath);
      }
      emit({{"corpus_id", manifest.corpus_id},
            {"category", manifest.category},
            {"count", manifest.frames.size()},
            {"train", manifest.count(ntd::Split::Train)},
            {"test", manifest.count(ntd::Split::Test)},
            {"manifest", mpath.string()}});
    } else if (*masks) {
      const auto cfg = config_of(common);
      fs::create_directories(masks_out);
      const fs::path g = fs::path(masks_out) / "gaussian.png", d = fs::path(masks_out) / "disk.png";
      ntd::save_image(for_display(ntd::gaussian_mask(cfg)), g);
      ntd::save_image(for_display(ntd::disk_mask(cfg)), d);
      emit({{"gaussian", g.string()},
            {"disk", d.string()},
            {"size", cfg.mask_size},
            {"sigma", cfg.sigma()},
            {"radius", cfg.disk_radius()}});
    } else if (*enh) {
      const auto cfg = config_of(common);
      const auto resp = ntd::enhance(ntd::load_image(enh_frame), cfg);
      fs::create_directories(enh_out);
      const fs::path img = fs::path(enh_out) / "response.png", raw = fs::path(enh_out) / "response.json";
      ntd::save_image(for_display(resp), img);
      json rows = json::array();
      for (Eigen::Index r = 0; r < resp.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < resp.cols(); ++c) row.push_back(resp(r, c));
        rows.push_back(std::move(row));
      }
      write_text(raw, json{{"rows", resp.rows()}, {"cols", resp.cols()}, {"values", rows}}.dump());
      emit({{"average_intensity", ntd::average_intensity(resp)},
            {"max_response", resp.maxCoeff()},
            {"min_response", resp.minCoeff()},
            {"response", img.string()},
            {"raw", raw.string()}});
    } else if (*split) {
      const auto m = ntd::split_dataset(ntd::load_manifest(split_manifest), split_fraction, split_seed);
      ntd::save_manifest(m, split_out.empty() ? fs::path(split_manifest) : fs::path(split_out));
      emit({{"train", m.count(ntd::Split::Train)}, {"test", m.count(ntd::Split::Test)}});
    } else if (*ann) {
      const auto cfg = config_of(common);
      auto ms = manifests_of(manifests);
      if (oracle) {
        ntd::AnnotationStore store(annotations, ms);
        int n = 0;
        for (const auto& m : ms) n += ntd::oracle_annotate(m, store, cfg, common.threads, stamp);
        emit({{"n_records", n}, {"annotations", annotations}, {"config_hash", ntd::config_hash(cfg)}});
      } else {
        ntd::ServiceOptions opts{std::move(ms), annotations, models_dir, cfg, train_cfg, ui_dir};
        ntd::AnnotationService service(std::move(opts));
        const int bound = service.bind(host, port);
        active_service = &service;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cerr << "listening on http://" << host << ":" << bound << std::endl;
        service.serve();
        active_service = nullptr;
      }
    } else if (*train) {
      const auto cfg = config_of(common);
      ntd::AnnotationStore store(annotations, manifests_of(manifests));
      const auto records = ntd::annotated_records(store, train_category, cfg);
      if (records.size() < 2)
        throw ntd::ValidationError("need at least 2 annotated training frames for " + train_category + ", have " +
                                   std::to_string(records.size()));
      auto result = ntd::mlp_train_detailed(records, train_cfg);
      result.model.category = train_category;
      ntd::ModelRegistry registry(models_dir);
      registry.put(result.model);
      emit({{"category", train_category},
            {"n_records", records.size()},
            {"initial_loss", result.initial_loss},
            {"final_loss", result.final_loss},
            {"final_rmse", result.rmse},
            {"model", registry.path_for(train_category).string()}});
    } else if (*count) {
      const auto cfg = config_of(common);
      const auto img = ntd::load_image(count_frame);
      const auto analysis = ntd::analyze_frame(img, cfg, ntd::load_model(count_model));
      if (!count_overlay.empty()) ntd::save_image(ntd::render_overlay(img, analysis.report), count_overlay);
      json centroids = json::array();
      for (const auto& p : analysis.report.peaks)
        centroids.push_back({{"row", p.row}, {"col", p.col}, {"area", p.area}});
      emit({{"threshold", analysis.threshold}, {"count", analysis.report.count}, {"centroids", centroids}});
    } else if (*eval || *cmp) {
      const auto cfg = config_of(common);
      const auto ms = manifests_of(manifests);
      ntd::AnnotationStore store(annotations, ms);
      std::optional<ntd::ModelRegistry> registry;
      if (eval->count("--models") || cmp->count("--models") || reuse) registry.emplace(models_dir);
      ntd::EvalOptions opts;
      opts.train = train_cfg;
      opts.threads = common.threads;
      opts.registry = registry ? &*registry : nullptr;
      opts.reuse_models = reuse;
      std::string text;
      if (*eval) {
        const auto report = ntd::evaluate(ms, store, cfg, opts);
        text = format == "table" ? ntd::report_table(report)
               : format == "csv" ? ntd::report_csv(report)
                                 : ntd::report_to_json(report).dump(2) + "\n";
      } else {
        const auto reports = ntd::compare_baseline(ms, store, cfg, opts);
        text = format == "table" ? ntd::compare_table(reports) : ntd::compare_to_json(reports).dump(2) + "\n";
      }
      if (report_out.empty())
        std::cout << text;
      else
        write_text(report_out, text);
    }
  } catch (const ntd::Error& e) {
    std::cerr << "ntd: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "ntd: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "ntd: invalid JSON: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "ntd: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
