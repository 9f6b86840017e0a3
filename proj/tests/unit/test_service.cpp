#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "carpet/image_io.hpp"
#include "carpet/service/http_server.hpp"
#include "carpet/service/job_service.hpp"
#include "httplib.h"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using carpet::ErrorCode;
using carpet::service::JobRecord;
using carpet::service::JobService;
using carpet::service::JobStatus;
using carpet::service::ServiceOptions;
using carpet::service::Store;
using nlohmann::json;

namespace {

std::span<const std::uint8_t> bytes_of(const std::vector<std::uint8_t>& v) { return {v.data(), v.size()}; }

std::vector<std::uint8_t> png_of(int variant) { return carpet::encode_png(fixture::carpet_image(48, 48, variant)); }

std::string png_string(int variant) {
  const auto png = png_of(variant);
  return {png.begin(), png.end()};
}

ErrorCode error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const carpet::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

ServiceOptions options_for(const fs::path& dir) {
  ServiceOptions o;
  o.data_dir = dir;
  o.workers = 1;
  o.watchdog_interval = 0.2;
  return o;
}

json job_config(const std::string& content, const std::string& style, const std::string& second = "Swap-Gatys") {
  json cfg = {{"content", content},
              {"style1", style},
              {"colorSource", style},
              {"secondMethod", second},
              {"coloringMethod", "Cams"},
              {"resolution", 48},
              {"gatys", {{"iterations", 2}}},
              {"cams", {{"iterations", 2}}},
              {"clipStyler", {{"iterations", 2}, {"cropCount", 4}}},
              {"previewEvery", 1}};
  cfg["style2"] = second == "Swap-Clip" ? json{{"text", "woven lattice"}} : json(style);
  return cfg;
}

JobRecord wait_terminal(const JobService& svc, const std::string& id, double seconds = 120) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
  while (std::chrono::steady_clock::now() < deadline) {
    const auto job = svc.get(id);
    if (job.terminal()) return job;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ADD_FAILURE() << "job " << id << " did not finish";
  return svc.get(id);
}

}  // namespace

TEST(Store, StatusTransitionsAreOneWay) {
  fixture::TempDir dir;
  Store store(dir.path());
  const auto job = store.create_job({{"content", "x"}});
  EXPECT_EQ(job.status, JobStatus::Queued);
  EXPECT_EQ(store.queued_ids(), std::vector<std::string>{job.id});
  EXPECT_TRUE(store.mark_running(job.id));
  EXPECT_FALSE(store.mark_running(job.id));

  store.update_progress(job.id, "stage1", 0.5);
  store.update_progress(job.id, "stage1", 0.3);
  EXPECT_DOUBLE_EQ(store.job(job.id)->progress, 0.5);

  EXPECT_TRUE(store.finish(job.id, true, std::nullopt, json{{"k", 1}}));
  EXPECT_FALSE(store.finish(job.id, false, std::string("late")));
  EXPECT_FALSE(store.cancel(job.id));
  store.update_progress(job.id, "stage2", 0.9);
  const auto done = *store.job(job.id);
  EXPECT_EQ(done.status, JobStatus::Succeeded);
  EXPECT_DOUBLE_EQ(done.progress, 1.0);
  EXPECT_FALSE(done.error.has_value());
  EXPECT_EQ(done.report["k"], 1);
}

TEST(Store, CancelRecoverAndStale) {
  fixture::TempDir dir;
  std::string queued, running;
  {
    Store store(dir.path());
    queued = store.create_job(json::object()).id;
    running = store.create_job(json::object()).id;
    store.mark_running(running);
    EXPECT_TRUE(store.cancel(queued));
    EXPECT_FALSE(store.cancel(queued));
    EXPECT_EQ(*store.job(queued)->error, "cancelled");
  }
  Store reopened(dir.path());
  EXPECT_EQ(reopened.jobs(JobStatus::Running).size(), 1u);
  EXPECT_EQ(reopened.recover_running("restart"), 1);
  EXPECT_EQ(reopened.job(running)->status, JobStatus::Failed);
  EXPECT_TRUE(reopened.jobs(JobStatus::Running).empty());

  const auto stale = reopened.create_job(json::object()).id;
  reopened.mark_running(stale);
  EXPECT_TRUE(reopened.fail_stale(60, "stale").empty());
  std::this_thread::sleep_for(std::chrono::milliseconds(30));
  EXPECT_EQ(reopened.fail_stale(0.01, "stale"), std::vector<std::string>{stale});
}

TEST(Store, AssetsAreContentAddressed) {
  fixture::TempDir dir;
  Store store(dir.path());
  const auto png = png_of(0);
  const auto a = store.put_asset(bytes_of(png), "content", "image/png");
  const auto b = store.put_asset(bytes_of(png), "style", "image/png");
  EXPECT_NE(a.id, b.id);
  EXPECT_EQ(a.checksum, b.checksum);
  EXPECT_EQ(a.checksum, carpet::service::sha256_hex(bytes_of(png)));
  EXPECT_EQ(store.asset_bytes(a), png);
  EXPECT_FALSE(store.asset("nope").has_value());
  // sha256("abc")
  const std::string abc = "abc";
  EXPECT_EQ(carpet::service::sha256_hex({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(JobService, UploadsAndErrors) {
  fixture::TempDir dir;
  auto o = options_for(dir.path());
  o.upload_limit = 4096;
  JobService svc(o, fixture::small_models(16, 5));
  const auto png = carpet::encode_png(fixture::carpet_image(8, 8));
  const auto rec = svc.upload_asset(bytes_of(png), "style");
  EXPECT_EQ(rec.kind, "style");
  EXPECT_EQ(rec.media_type, "image/png");
  EXPECT_EQ(rec.size, static_cast<std::int64_t>(png.size()));
  EXPECT_EQ(svc.asset_bytes(rec.id), png);
  EXPECT_EQ(error_of([&] { svc.upload_asset({}, "content"); }), ErrorCode::UnsupportedFormat);
  const std::vector<std::uint8_t> gif = {'G', 'I', 'F', '8', '9', 'a', 0, 0};
  EXPECT_EQ(error_of([&] { svc.upload_asset(bytes_of(gif), "content"); }), ErrorCode::UnsupportedFormat);
  std::vector<std::uint8_t> big = png;
  big.resize(5000);
  EXPECT_EQ(error_of([&] { svc.upload_asset(bytes_of(big), "content"); }), ErrorCode::TooLarge);
  EXPECT_EQ(error_of([&] { svc.upload_asset(bytes_of(png), "artifact"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(error_of([&] { svc.asset("00000000-0000-4000-8000-000000000000"); }), ErrorCode::NotFound);
  EXPECT_EQ(error_of([&] { svc.get("00000000-0000-4000-8000-000000000000"); }), ErrorCode::NotFound);
}

TEST(JobService, SubmitValidatesConfigAndAssets) {
  fixture::TempDir dir;
  JobService svc(options_for(dir.path()), fixture::small_models(16, 5));
  const auto c = svc.upload_asset(bytes_of(png_of(0)), "content").id;
  try {
    svc.submit(job_config(c, "00000000-0000-4000-8000-000000000000"));
    FAIL();
  } catch (const carpet::service::AssetNotFound& e) {
    EXPECT_EQ(e.field(), "style1");
  }
  auto bad = job_config(c, c);
  bad["cams"]["paletteSize"] = 0;
  EXPECT_THROW(svc.submit(bad), carpet::ValidationError);
  EXPECT_TRUE(svc.list(std::nullopt).empty());
}

TEST(JobService, RunsJobsToCompletionWithOrderedFrames) {
  fixture::TempDir dir;
  JobService svc(options_for(dir.path()), fixture::small_models(16, 5));
  const auto c = svc.upload_asset(bytes_of(png_of(0)), "content").id;
  const auto s = svc.upload_asset(bytes_of(png_of(2)), "style").id;
  const auto a = svc.submit(job_config(c, s));
  const auto b = svc.submit(job_config(c, s, "Swap-Clip"));
  EXPECT_NE(a.id, b.id);
  EXPECT_EQ(a.status, JobStatus::Queued);
  for (const auto& id : {a.id, b.id}) {
    const auto job = wait_terminal(svc, id);
    ASSERT_EQ(job.status, JobStatus::Succeeded) << job.error.value_or("");
    EXPECT_DOUBLE_EQ(job.progress, 1.0);
    for (const char* name : {"I_o1", "I_o2", "I_final"}) {
      ASSERT_TRUE(job.artifacts.count(name)) << name;
      EXPECT_EQ(svc.asset(job.artifacts.at(name)).kind, "artifact");
    }
    EXPECT_TRUE(carpet::is_grayscale(carpet::decode_image(svc.asset_bytes(job.artifacts.at("I_o2")))));
    ASSERT_FALSE(job.frames.empty());
    for (std::size_t i = 0; i < job.frames.size(); ++i) {
      EXPECT_EQ(job.frames[i].index, static_cast<int>(i));
      EXPECT_EQ(carpet::sniff_media_type(svc.frame(id, static_cast<int>(i))), carpet::MediaType::Png);
    }
    EXPECT_EQ(error_of([&] { svc.frame(id, static_cast<int>(job.frames.size())); }), ErrorCode::NotFound);
  }
  EXPECT_EQ(svc.list(JobStatus::Succeeded).size(), 2u);
  EXPECT_TRUE(svc.list(JobStatus::Running).empty());
}

// An idle worker must wake for every submission, not only the first.
TEST(JobService, IdleWorkerPicksUpEachLaterSubmission) {
  fixture::TempDir dir;
  JobService svc(options_for(dir.path()), fixture::small_models(16, 5));
  const auto c = svc.upload_asset(bytes_of(png_of(0)), "content").id;
  const auto s = svc.upload_asset(bytes_of(png_of(1)), "style").id;
  auto cfg = job_config(c, s, "Swap-Swap");
  cfg["previewEvery"] = 0;
  for (int i = 0; i < 6; ++i) {
    const auto id = svc.submit(cfg).id;
    EXPECT_EQ(wait_terminal(svc, id, 30).status, JobStatus::Succeeded) << "submission " << i;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

TEST(JobService, CancelIsIdempotent) {
  fixture::TempDir dir;
  JobService svc(options_for(dir.path()), fixture::small_models(16, 5));
  const auto c = svc.upload_asset(bytes_of(png_of(0)), "content").id;
  const auto s = svc.upload_asset(bytes_of(png_of(1)), "style").id;
  auto slow = job_config(c, s);
  slow["cams"]["iterations"] = 400;
  const auto first = svc.submit(slow);
  const auto second = svc.submit(job_config(c, s));
  const auto cancelled = svc.cancel(second.id);
  EXPECT_EQ(cancelled.status, JobStatus::Failed);
  EXPECT_EQ(cancelled.error.value_or(""), "cancelled");
  EXPECT_EQ(svc.cancel(second.id).status, JobStatus::Failed);

  svc.cancel(first.id);
  const auto done = wait_terminal(svc, first.id);
  EXPECT_EQ(done.status, JobStatus::Failed);
  EXPECT_EQ(done.error.value_or(""), "cancelled");
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  EXPECT_EQ(svc.get(second.id).status, JobStatus::Failed);
  EXPECT_TRUE(svc.get(second.id).artifacts.empty());
}

TEST(JobService, StartupRecoveryFailsInterruptedJobs) {
  fixture::TempDir dir;
  std::string id;
  {
    Store store(dir.path());
    id = store.create_job(json::object()).id;
    store.mark_running(id);
  }
  JobService svc(options_for(dir.path()), fixture::small_models(16, 5));
  EXPECT_EQ(svc.recovered_at_startup(), 1);
  const auto job = svc.get(id);
  EXPECT_EQ(job.status, JobStatus::Failed);
  EXPECT_NE(job.error.value_or("").find("interrupted"), std::string::npos);
}

class HttpApi : public ::testing::Test {
 protected:
  void SetUp() override {
    svc_ = std::make_unique<JobService>(options_for(dir_.path()), fixture::small_models(16, 5));
    server_ = std::make_unique<carpet::service::HttpServer>(*svc_);
    port_ = server_->bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->serve_bound(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int i = 0; i < 100 && !client_->Get("/api/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  void TearDown() override {
    server_->stop();
    thread_.join();
    svc_->shutdown();
  }

  std::string upload(const std::string& content, const std::string& kind, int expect = 201) {
    httplib::MultipartFormDataItems items = {{"file", content, "upload.png", "image/png"}, {"kind", kind, "", ""}};
    auto res = client_->Post("/api/assets", items);
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << res->body;
    return expect == 201 ? json::parse(res->body)["id"].get<std::string>() : std::string();
  }

  json get_json(const std::string& path, int expect = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    if (!res) return nullptr;
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    return json::parse(res->body);
  }

  fixture::TempDir dir_;
  std::unique_ptr<JobService> svc_;
  std::unique_ptr<carpet::service::HttpServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpApi, HealthAndDefaults) {
  EXPECT_EQ(get_json("/api/health")["status"], "ok");
  const auto d = get_json("/api/defaults");
  EXPECT_EQ(d["styleSwap"]["patchSize"], 5);
  EXPECT_EQ(d["gatys"]["iterations"], 10);
}

TEST_F(HttpApi, AssetRoundTripIsByteIdentical) {
  const auto png = png_of(3);
  const std::string body(png.begin(), png.end());
  const auto id = upload(body, "style");
  auto res = client_->Get("/api/assets/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, body);
  EXPECT_EQ(res->get_header_value("X-Checksum-Sha256"), carpet::service::sha256_hex(bytes_of(png)));
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  const auto info = get_json("/api/assets/" + id + "/info");
  EXPECT_EQ(info["kind"], "style");
  EXPECT_EQ(info["size"], png.size());

  upload("GIF89a....", "content", 415);
  upload(std::string(), "content", 415);
  get_json("/api/assets/00000000-0000-4000-8000-000000000000", 404);
}

TEST_F(HttpApi, JobLifecycleOverHttp) {
  const auto c = upload(png_string(0), "content");
  const auto s = upload(png_string(1), "style");

  auto res = client_->Post("/api/jobs", job_config(c, s, "Swap-Swap").dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201) << res->body;
  const auto id = json::parse(res->body)["id"].get<std::string>();

  json job;
  for (int i = 0; i < 6000; ++i) {
    job = get_json("/api/jobs/" + id);
    if (job["status"] == "succeeded" || job["status"] == "failed") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ASSERT_EQ(job["status"], "succeeded") << job.dump();
  for (const char* name : {"I_o1", "I_o2", "I_final"}) {
    auto art = client_->Get("/api/assets/" + job["artifacts"][name].get<std::string>());
    ASSERT_TRUE(art);
    EXPECT_EQ(art->status, 200);
    EXPECT_EQ(art->body.substr(1, 3), "PNG");
  }
  ASSERT_FALSE(job["frames"].empty());
  auto frame = client_->Get("/api/jobs/" + id + "/frames/0");
  ASSERT_TRUE(frame);
  EXPECT_EQ(frame->status, 200);
  EXPECT_EQ(frame->get_header_value("Content-Type"), "image/png");

  EXPECT_EQ(get_json("/api/jobs?status=succeeded").size(), 1u);
  EXPECT_TRUE(get_json("/api/jobs?status=running").empty());
  get_json("/api/jobs?status=paused", 400);
  get_json("/api/jobs/00000000-0000-4000-8000-000000000000", 404);

  auto cancel = client_->Post("/api/jobs/" + id + "/cancel");
  ASSERT_TRUE(cancel);
  EXPECT_EQ(json::parse(cancel->body)["status"], "succeeded");
}

TEST_F(HttpApi, ValidationErrorsNameFields) {
  const auto c = upload(png_string(0), "content");
  auto cfg = job_config(c, c);
  cfg["styleSwap"] = {{"patchSize", 2}, {"stride", 3}};
  auto res = client_->Post("/api/jobs", cfg.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  const auto body = json::parse(res->body);
  EXPECT_EQ(body["error"], "ValidationError");
  EXPECT_EQ(body["fields"][0]["field"], "styleSwap.stride");

  cfg = job_config(c, "00000000-0000-4000-8000-000000000000");
  res = client_->Post("/api/jobs", cfg.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(json::parse(res->body)["field"], "style1");

  res = client_->Post("/api/jobs", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(HttpApi, OversizedUploadIsRejected) {
  std::string big(svc_->options().upload_limit + 10, 'x');
  big.replace(0, 8, "\x89PNG\r\n\x1a\n");
  upload(big, "content", 413);
}
