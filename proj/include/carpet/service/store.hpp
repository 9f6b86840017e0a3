#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

struct sqlite3;

namespace carpet::service {

enum class JobStatus { Queued, Running, Succeeded, Failed };

std::string_view to_string(JobStatus s);
std::optional<JobStatus> parse_status(std::string_view s);

struct AssetRecord {
  std::string id;
  std::string kind;  // content | style | artifact | preview
  std::string media_type;
  std::int64_t size = 0;
  std::string checksum;  // sha256 hex of the bytes
  double created = 0;

  nlohmann::json to_json() const;
};

struct FrameRecord {
  int index = 0;      // 0-based, ordered by (stage order, iteration)
  std::string stage;
  int iteration = 0;
  std::string asset_id;
};

struct JobRecord {
  std::string id;
  nlohmann::json config;
  JobStatus status = JobStatus::Queued;
  std::string stage;
  double progress = 0;
  double created = 0;
  double updated = 0;
  std::map<std::string, std::string> artifacts;  // name -> asset id
  std::optional<std::string> error;
  nlohmann::json report;
  std::vector<FrameRecord> frames;

  bool terminal() const { return status == JobStatus::Succeeded || status == JobStatus::Failed; }
  nlohmann::json to_json() const;
};

std::string new_uuid();
std::string sha256_hex(std::span<const std::uint8_t> bytes);
double now_seconds();

/// Job and asset records in SQLite plus a content-addressed blob directory.
/// All methods are thread-safe. Status changes are conditional updates, so a
/// terminal job is never modified again.
class Store {
 public:
  explicit Store(const std::filesystem::path& data_dir);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  AssetRecord put_asset(std::span<const std::uint8_t> bytes, const std::string& kind, const std::string& media_type);
  std::optional<AssetRecord> asset(const std::string& id) const;
  /// Reads the blob and checks it against the stored checksum.
  std::vector<std::uint8_t> asset_bytes(const AssetRecord& rec) const;

  JobRecord create_job(const nlohmann::json& config);
  std::optional<JobRecord> job(const std::string& id) const;
  std::vector<JobRecord> jobs(std::optional<JobStatus> status) const;
  /// Queued jobs in submission order.
  std::vector<std::string> queued_ids() const;

  bool mark_running(const std::string& id);
  /// Progress never decreases; ignored unless the job is running.
  void update_progress(const std::string& id, const std::string& stage, double progress);
  bool finish(const std::string& id, bool success, const std::optional<std::string>& error,
              const nlohmann::json& report = nullptr);
  /// queued|running -> failed("cancelled"); no-op on terminal jobs.
  bool cancel(const std::string& id);
  void add_artifact(const std::string& id, const std::string& name, const std::string& asset_id);
  int add_frame(const std::string& id, const std::string& stage, int iteration, const std::string& asset_id);

  /// Marks every running job failed; returns how many were changed.
  int recover_running(const std::string& reason);
  /// Fails running jobs whose last update is older than `max_age` seconds.
  std::vector<std::string> fail_stale(double max_age, const std::string& reason);

  const std::filesystem::path& data_dir() const { return data_dir_; }

 private:
  std::filesystem::path blob_path(const std::string& checksum) const;
  JobRecord load_job_locked(const std::string& id) const;

  std::filesystem::path data_dir_;
  sqlite3* db_ = nullptr;
  mutable std::mutex mutex_;
};

}  // namespace carpet::service
