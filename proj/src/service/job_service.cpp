#include "carpet/service/job_service.hpp"

#include <iostream>

#include "carpet/image_io.hpp"

namespace carpet::service {

int default_worker_count() {
  const unsigned cores = std::thread::hardware_concurrency();
  return std::max(1, static_cast<int>(cores / 2));
}

JobService::JobService(ServiceOptions options, ModelBundle models)
    : options_(std::move(options)), models_(std::move(models)), store_(options_.data_dir) {
  recovered_ = store_.recover_running("interrupted: service restarted while the job was running");
  for (const auto& id : store_.queued_ids()) queue_.push_back(id);
  const int n = options_.workers > 0 ? options_.workers : default_worker_count();
  for (int i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
  watchdog_ = std::thread([this] { watchdog_loop(); });
}

JobService::~JobService() { shutdown(); }

void JobService::shutdown() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    stopping_ = true;
  }
  cv_.notify_all();
  watchdog_cv_.notify_all();
  for (auto& t : workers_) t.join();
  if (watchdog_.joinable()) watchdog_.join();
}

AssetRecord JobService::upload_asset(std::span<const std::uint8_t> bytes, const std::string& kind) {
  if (kind != "content" && kind != "style") {
    throw Error(ErrorCode::InvalidConfig, "asset kind must be content or style");
  }
  if (bytes.size() > options_.upload_limit) {
    throw Error(ErrorCode::TooLarge, "upload of " + std::to_string(bytes.size()) + " bytes exceeds the limit of " +
                                         std::to_string(options_.upload_limit));
  }
  const auto type = sniff_media_type(bytes);
  if (!type) throw Error(ErrorCode::UnsupportedFormat, "only PNG and JPEG uploads are accepted");
  decode_image(bytes);  // reject corrupt images at the door
  return store_.put_asset(bytes, kind, std::string(mime_type(*type)));
}

AssetRecord JobService::asset(const std::string& id) const {
  auto rec = store_.asset(id);
  if (!rec) throw Error(ErrorCode::NotFound, "asset " + id);
  return *rec;
}

std::vector<std::uint8_t> JobService::asset_bytes(const std::string& id) const {
  return store_.asset_bytes(asset(id));
}

JobRecord JobService::submit(const nlohmann::json& config) {
  const auto cfg = parse_pipeline_config(config);
  const std::pair<const char*, std::string> refs[] = {
      {"content", cfg.content},
      {"style1", cfg.style1},
      {"style2", cfg.style2.is_text() ? "" : cfg.style2.asset},
      {"colorSource", cfg.color_source.is_text() ? "" : cfg.color_source.asset}};
  for (const auto& [field, id] : refs) {
    if (id.empty()) continue;
    const auto rec = store_.asset(id);
    if (!rec || (rec->kind != "content" && rec->kind != "style")) throw AssetNotFound(field, id);
  }
  auto job = store_.create_job(to_json(cfg));
  {
    std::lock_guard lock(mutex_);
    queue_.push_back(job.id);
  }
  cv_.notify_one();
  return job;
}

JobRecord JobService::get(const std::string& id) const {
  auto rec = store_.job(id);
  if (!rec) throw Error(ErrorCode::NotFound, "job " + id);
  return *rec;
}

std::vector<JobRecord> JobService::list(std::optional<JobStatus> status) const { return store_.jobs(status); }

JobRecord JobService::cancel(const std::string& id) {
  get(id);
  if (store_.cancel(id)) {
    std::lock_guard lock(mutex_);
    cancelled_.insert(id);
  }
  return get(id);
}

std::vector<std::uint8_t> JobService::frame(const std::string& id, int index) const {
  const auto job = get(id);
  for (const auto& f : job.frames) {
    if (f.index == index) return asset_bytes(f.asset_id);
  }
  throw Error(ErrorCode::NotFound, "frame " + std::to_string(index) + " of job " + id);
}

bool JobService::stopping() const {
  std::lock_guard lock(mutex_);
  return stopping_;
}

bool JobService::cancel_requested(const std::string& id) const {
  std::lock_guard lock(mutex_);
  return cancelled_.count(id) > 0;
}

void JobService::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
    }
    run_job(id);
  }
}

void JobService::watchdog_loop() {
  std::unique_lock lock(mutex_);
  while (!stopping_) {
    watchdog_cv_.wait_for(lock, std::chrono::duration<double>(options_.watchdog_interval));
    if (stopping_) break;
    lock.unlock();
    const auto stale = store_.fail_stale(options_.stale_seconds, "stale: no progress within the timeout");
    lock.lock();
    for (const auto& id : stale) cancelled_.insert(id);
  }
}

void JobService::run_job(const std::string& id) {
  if (!store_.mark_running(id)) return;  // cancelled while queued
  auto record = store_.job(id);
  if (!record) return;
  const ImageResolver resolve = [this](const std::string& asset_id) { return decode_image(asset_bytes(asset_id)); };
  PipelineHooks hooks;
  double last_write = 0;
  hooks.progress = [&](const PipelineProgress& p) {
    if (cancel_requested(id) || stopping()) throw Error(ErrorCode::Cancelled, "cancelled");
    const double t = now_seconds();
    if (p.preview_due && p.snapshot) {
      const auto png = encode_png(p.snapshot());
      const auto rec = store_.put_asset(png, "preview", "image/png");
      store_.add_frame(id, p.stage, p.iteration, rec.id);
    }
    if (p.preview_due || t - last_write > 0.25 || p.total == 0) {
      store_.update_progress(id, p.stage, p.fraction);
      last_write = t;
    }
  };
  hooks.artifact = [&](const std::string& name, const ImageTensor& img) {
    const auto rec = store_.put_asset(encode_png(img), "artifact", "image/png");
    store_.add_artifact(id, name, rec.id);
  };
  try {
    const auto cfg = parse_pipeline_config(record->config);
    const auto result = run_pipeline(cfg, models_, resolve, hooks);
    store_.finish(id, true, std::nullopt, result.report());
  } catch (const Error& e) {
    std::string message = e.what();
    if (e.code() == ErrorCode::Cancelled) message = stopping() ? "interrupted: service stopped" : "cancelled";
    store_.finish(id, false, message);
  } catch (const std::exception& e) {
    store_.finish(id, false, std::string("internal error: ") + e.what());
  }
  std::lock_guard lock(mutex_);
  cancelled_.erase(id);
}

}  // namespace carpet::service
