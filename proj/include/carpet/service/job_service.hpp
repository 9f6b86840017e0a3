#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include "carpet/models.hpp"
#include "carpet/pipeline.hpp"
#include "carpet/service/store.hpp"

namespace carpet::service {

struct ServiceOptions {
  std::filesystem::path data_dir = "data";
  int workers = 0;  // 0: max(1, cores / 2)
  std::size_t upload_limit = 32u << 20;
  /// A running job with no progress for this long is failed by the watchdog.
  double stale_seconds = 900;
  double watchdog_interval = 5;
};

/// An asset reference in a config that does not resolve.
class AssetNotFound : public Error {
 public:
  AssetNotFound(std::string field, const std::string& id)
      : Error(ErrorCode::NotFound, "asset " + id + " referenced by " + field + " does not exist"),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Persistent FIFO of pipeline jobs executed by a fixed worker pool.
class JobService {
 public:
  JobService(ServiceOptions options, ModelBundle models);
  ~JobService();
  JobService(const JobService&) = delete;
  JobService& operator=(const JobService&) = delete;

  AssetRecord upload_asset(std::span<const std::uint8_t> bytes, const std::string& kind);
  AssetRecord asset(const std::string& id) const;
  std::vector<std::uint8_t> asset_bytes(const std::string& id) const;

  /// Validates (including asset existence) and queues the job.
  JobRecord submit(const nlohmann::json& config);
  JobRecord get(const std::string& id) const;
  std::vector<JobRecord> list(std::optional<JobStatus> status) const;
  JobRecord cancel(const std::string& id);
  std::vector<std::uint8_t> frame(const std::string& id, int index) const;

  /// Number of jobs failed by the startup recovery scan.
  int recovered_at_startup() const { return recovered_; }
  int worker_count() const { return static_cast<int>(workers_.size()); }
  const ServiceOptions& options() const { return options_; }

  void shutdown();

 private:
  void worker_loop();
  void watchdog_loop();
  void run_job(const std::string& id);
  bool cancel_requested(const std::string& id) const;
  bool stopping() const;

  ServiceOptions options_;
  ModelBundle models_;
  Store store_;
  int recovered_ = 0;

  mutable std::mutex mutex_;
  std::condition_variable cv_;           // queue changes
  std::condition_variable watchdog_cv_;  // shutdown only
  std::deque<std::string> queue_;
  std::set<std::string> cancelled_;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
  std::thread watchdog_;
};

int default_worker_count();

}  // namespace carpet::service
