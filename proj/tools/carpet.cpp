// carpet: command-line front end for the carpet-map studio.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "carpet/image_io.hpp"
#include "carpet/pipeline.hpp"
#include "carpet/service/http_server.hpp"
#include "httplib.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

struct ModelFlags {
  std::string model_dir = env_or("MODEL_DIR", "");
  std::string architecture = "vgg16";
  int decoder_iterations = carpet::InversionSettings{}.iterations;
  int width_divisor = 1;

  void add(CLI::App* app) {
    app->add_option("--model-dir", model_dir, "Directory with encoder.json/decoder.json (env MODEL_DIR)");
    app->add_option("--architecture", architecture, "Encoder layout when no archive is present")
        ->check(CLI::IsMember({"vgg16", "vgg19"}));
    app->add_option("--decoder-iterations", decoder_iterations, "Iterations of the inversion decoder")
        ->check(CLI::PositiveNumber);
    app->add_option("--width-divisor", width_divisor, "Shrink synthetic encoder channels (testing)")
        ->check(CLI::PositiveNumber);
  }

  carpet::ModelBundle load() const {
    carpet::ModelOptions o;
    o.model_dir = model_dir;
    o.architecture = carpet::parse_architecture(architecture);
    o.width_divisor = width_divisor;
    o.inversion.iterations = decoder_iterations;
    return carpet::load_models(o);
  }
};

struct JobFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> patch_size;
  std::optional<int> stride;
  std::string out = "out";

  void add(CLI::App* app) {
    app->add_option("--config", config_path, "Job JSON file")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Override the config seed");
    app->add_option("--patch-size", patch_size, "Override styleSwap.patchSize");
    app->add_option("--stride", stride, "Override styleSwap.stride");
    app->add_option("--out", out, "Output directory");
  }

  carpet::PipelineConfig load() const {
    std::ifstream in(config_path);
    json doc = json::parse(in);
    if (seed) doc["seed"] = *seed;
    if (patch_size) doc["styleSwap"]["patchSize"] = *patch_size;
    if (stride) doc["styleSwap"]["stride"] = *stride;
    return carpet::parse_pipeline_config(doc);
  }

  carpet::ImageResolver resolver() const { return carpet::file_resolver(fs::path(config_path).parent_path()); }
};

carpet::PipelineHooks console_hooks(bool quiet) {
  carpet::PipelineHooks hooks;
  if (quiet) return hooks;
  auto last = std::make_shared<int>(-1);
  hooks.progress = [last](const carpet::PipelineProgress& p) {
    const int pct = static_cast<int>(p.fraction * 100);
    if (pct == *last) return;
    *last = pct;
    std::cerr << "\r[" << pct << "%] " << p.stage << " " << p.iteration << "/" << p.total << "   " << std::flush;
  };
  return hooks;
}

void write_json(const fs::path& path, const json& doc) {
  const auto s = doc.dump(2);
  carpet::write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void report_validation(const carpet::ValidationError& e) {
  std::cerr << "invalid config:\n";
  for (const auto& f : e.fields()) std::cerr << "  " << f.field << ": " << f.message << "\n";
}

carpet::service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Carpet-map design studio"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "No progress output");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP job service");
  ModelFlags serve_models;
  serve_models.add(serve);
  int port = std::atoi(env_or("PORT", "8080").c_str());
  std::string host = "0.0.0.0";
  std::string data_dir = env_or("DATA_DIR", "data");
  int workers = 0;
  double stale_seconds = carpet::service::ServiceOptions{}.stale_seconds;
  serve->add_option("--port", port, "Listen port (env PORT; 0 picks a free port)");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--data-dir", data_dir, "Database and blob directory (env DATA_DIR)");
  serve->add_option("--workers", workers, "Worker threads (default: cores / 2)");
  serve->add_option("--stale-seconds", stale_seconds, "Fail running jobs without progress for this long");

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Run the full chain on local files");
  ModelFlags pipeline_models;
  pipeline_models.add(pipeline);
  JobFlags pipeline_job;
  pipeline_job.add(pipeline);
  bool dump_masks = false;
  pipeline->add_flag("--dump-masks", dump_masks, "Also write the colorization palette and masks");

  // generate
  auto* generate = app.add_subcommand("generate", "Run stage 1 and the second method (I_o1, I_o2)");
  ModelFlags generate_models;
  generate_models.add(generate);
  JobFlags generate_job;
  generate_job.add(generate);

  // colorize
  auto* colorize = app.add_subcommand("colorize", "Colorize a grayscale design");
  ModelFlags colorize_models;
  colorize_models.add(colorize);
  JobFlags colorize_job;
  colorize_job.add(colorize);
  std::string colorize_input;
  colorize->add_option("--input", colorize_input, "Design to colorize (converted to grayscale)")
      ->required()
      ->check(CLI::ExistingFile);

  // defaults
  auto* defaults = app.add_subcommand("defaults", "Print the default job settings");

  // assets
  auto* assets = app.add_subcommand("assets", "Upload or fetch assets on a running service");
  assets->require_subcommand(1);
  std::string server_url = "http://127.0.0.1:" + env_or("PORT", "8080");
  assets->add_option("--server", server_url, "Service base URL");
  auto* upload = assets->add_subcommand("upload", "Upload an image; prints the asset record");
  std::string upload_file;
  std::string upload_kind = "content";
  upload->add_option("file", upload_file)->required()->check(CLI::ExistingFile);
  upload->add_option("--kind", upload_kind)->check(CLI::IsMember({"content", "style"}));
  auto* fetch = assets->add_subcommand("fetch", "Download an asset");
  std::string fetch_id;
  std::string fetch_out;
  fetch->add_option("id", fetch_id)->required();
  fetch->add_option("-o,--out", fetch_out, "Output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (serve->parsed()) {
      carpet::service::ServiceOptions opts;
      opts.data_dir = data_dir;
      opts.workers = workers;
      opts.stale_seconds = stale_seconds;
      carpet::service::JobService service(opts, serve_models.load());
      carpet::service::HttpServer server(service);
      const int bound = server.bind(host, port);
      if (bound < 0) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return 1;
      }
      std::cout << "listening on " << host << ":" << bound << " (workers " << service.worker_count()
                << ", recovered " << service.recovered_at_startup() << ")" << std::endl;
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.serve_bound();
      g_server = nullptr;
      service.shutdown();
      return 0;
    }

    if (pipeline->parsed()) {
      const auto cfg = pipeline_job.load();
      const auto models = pipeline_models.load();
      const auto result = carpet::run_pipeline(cfg, models, pipeline_job.resolver(), console_hooks(quiet));
      carpet::write_artifacts(result, pipeline_job.out, dump_masks);
      if (!quiet) std::cerr << "\n";
      std::cout << "wrote " << (fs::path(pipeline_job.out) / "I_final.png").string() << "\n";
      return 0;
    }

    if (generate->parsed()) {
      const auto cfg = generate_job.load();
      const auto models = generate_models.load();
      const auto [o1, o2] = carpet::generate(cfg, models, generate_job.resolver(), console_hooks(quiet));
      const fs::path out = generate_job.out;
      carpet::save_png(o1, out / "I_o1.png");
      carpet::save_png(o2, out / "I_o2.png");
      write_json(out / "config.json", carpet::to_json(cfg));
      if (!quiet) std::cerr << "\n";
      std::cout << "wrote " << (out / "I_o2.png").string() << "\n";
      return 0;
    }

    if (colorize->parsed()) {
      const auto cfg = colorize_job.load();
      const auto models = colorize_models.load();
      auto input = carpet::to_grayscale(carpet::load_image(colorize_input));
      if (cfg.resolution) input = carpet::resize(input, cfg.resolution->first, cfg.resolution->second);
      const auto out_img = carpet::colorize(carpet::to_grayscale(input), cfg, models, colorize_job.resolver(),
                                            console_hooks(quiet));
      const fs::path out = colorize_job.out;
      carpet::save_png(out_img, out / "I_final.png");
      if (!quiet) std::cerr << "\n";
      std::cout << "wrote " << (out / "I_final.png").string() << "\n";
      return 0;
    }

    if (defaults->parsed()) {
      std::cout << carpet::pipeline_defaults().dump(2) << "\n";
      return 0;
    }

    if (assets->parsed()) {
      httplib::Client client(server_url);
      client.set_read_timeout(60, 0);
      if (upload->parsed()) {
        const auto bytes = carpet::read_file(upload_file);
        httplib::MultipartFormDataItems items = {
            {"file", std::string(bytes.begin(), bytes.end()), fs::path(upload_file).filename().string(),
             "application/octet-stream"},
            {"kind", upload_kind, "", ""}};
        auto res = client.Post("/api/assets", items);
        if (!res) throw carpet::Error(carpet::ErrorCode::Io, "cannot reach " + server_url);
        std::cout << res->body << "\n";
        return res->status == 201 ? 0 : 1;
      }
      auto res = client.Get("/api/assets/" + fetch_id);
      if (!res) throw carpet::Error(carpet::ErrorCode::Io, "cannot reach " + server_url);
      if (res->status != 200) {
        std::cerr << res->body << "\n";
        return 1;
      }
      carpet::write_file_atomic(fetch_out, std::span(reinterpret_cast<const std::uint8_t*>(res->body.data()),
                                                     res->body.size()));
      return 0;
    }
  } catch (const carpet::ValidationError& e) {
    report_validation(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "\nerror: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
