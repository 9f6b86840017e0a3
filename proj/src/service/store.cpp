#include "carpet/service/store.hpp"

#include <openssl/rand.h>
#include <openssl/sha.h>
#include <sqlite3.h>

#include <chrono>
#include <cstdio>
#include <ctime>

#include "carpet/error.hpp"
#include "carpet/image_io.hpp"

namespace carpet::service {

using nlohmann::json;

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Succeeded: return "succeeded";
    case JobStatus::Failed: return "failed";
  }
  return "?";
}

std::optional<JobStatus> parse_status(std::string_view s) {
  if (s == "queued") return JobStatus::Queued;
  if (s == "running") return JobStatus::Running;
  if (s == "succeeded") return JobStatus::Succeeded;
  if (s == "failed") return JobStatus::Failed;
  return std::nullopt;
}

namespace {

std::string iso_time(double seconds) {
  const std::time_t t = static_cast<std::time_t>(seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) fail("prepare");
  }
  ~Statement() { sqlite3_finalize(stmt_); }

  Statement& bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Statement& bind(int i, double v) {
    sqlite3_bind_double(stmt_, i, v);
    return *this;
  }
  Statement& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }
  Statement& bind_null(int i) {
    sqlite3_bind_null(stmt_, i);
    return *this;
  }

  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    fail("step");
    return false;
  }

  void run() {
    while (step()) {
    }
  }

  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? reinterpret_cast<const char*>(p) : "";
  }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
  double real(int col) const { return sqlite3_column_double(stmt_, col); }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }

 private:
  [[noreturn]] void fail(const char* what) const {
    throw Error(ErrorCode::Io, std::string("sqlite ") + what + ": " + sqlite3_errmsg(db_));
  }

  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw Error(ErrorCode::Io, "sqlite: " + msg);
  }
}

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS assets (
  id TEXT PRIMARY KEY, kind TEXT NOT NULL, media_type TEXT NOT NULL,
  size INTEGER NOT NULL, checksum TEXT NOT NULL, created REAL NOT NULL);
CREATE TABLE IF NOT EXISTS jobs (
  seq INTEGER PRIMARY KEY AUTOINCREMENT, id TEXT UNIQUE NOT NULL, config TEXT NOT NULL,
  status TEXT NOT NULL, stage TEXT NOT NULL DEFAULT '', progress REAL NOT NULL DEFAULT 0,
  created REAL NOT NULL, updated REAL NOT NULL, error TEXT, report TEXT);
CREATE TABLE IF NOT EXISTS artifacts (
  job_id TEXT NOT NULL, name TEXT NOT NULL, asset_id TEXT NOT NULL, PRIMARY KEY (job_id, name));
CREATE TABLE IF NOT EXISTS frames (
  job_id TEXT NOT NULL, idx INTEGER NOT NULL, stage TEXT NOT NULL, iteration INTEGER NOT NULL,
  asset_id TEXT NOT NULL, PRIMARY KEY (job_id, idx));
)sql";

}  // namespace

json AssetRecord::to_json() const {
  return {{"id", id},           {"kind", kind},         {"mediaType", media_type},
          {"size", size},       {"checksum", checksum}, {"createdAt", iso_time(created)}};
}

json JobRecord::to_json() const {
  json frames_json = json::array();
  for (const auto& f : frames) {
    frames_json.push_back({{"index", f.index}, {"stage", f.stage}, {"iteration", f.iteration}, {"asset", f.asset_id}});
  }
  return {{"id", id},
          {"config", config},
          {"status", to_string(status)},
          {"stage", stage},
          {"progress", progress},
          {"createdAt", iso_time(created)},
          {"updatedAt", iso_time(updated)},
          {"artifacts", artifacts},
          {"error", error ? json(*error) : json(nullptr)},
          {"report", report},
          {"frames", frames_json}};
}

std::string new_uuid() {
  unsigned char b[16];
  if (RAND_bytes(b, sizeof b) != 1) throw Error(ErrorCode::Io, "random source failed");
  b[6] = static_cast<unsigned char>((b[6] & 0x0f) | 0x40);
  b[8] = static_cast<unsigned char>((b[8] & 0x3f) | 0x80);
  char out[37];
  std::snprintf(out, sizeof out, "%02x%02x%02x%02x-%02x%02x-%02x%02x-%02x%02x-%02x%02x%02x%02x%02x%02x", b[0], b[1],
                b[2], b[3], b[4], b[5], b[6], b[7], b[8], b[9], b[10], b[11], b[12], b[13], b[14], b[15]);
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(bytes.data(), bytes.size(), digest);
  std::string hex;
  hex.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char c : digest) {
    char buf[3];
    std::snprintf(buf, sizeof buf, "%02x", c);
    hex += buf;
  }
  return hex;
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

Store::Store(const std::filesystem::path& data_dir) : data_dir_(data_dir) {
  std::filesystem::create_directories(data_dir_ / "blobs");
  const auto db_path = (data_dir_ / "studio.db").string();
  if (sqlite3_open_v2(db_path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    const std::string msg = db_ ? sqlite3_errmsg(db_) : "open failed";
    sqlite3_close(db_);
    throw Error(ErrorCode::Io, "cannot open " + db_path + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec(db_, "PRAGMA journal_mode=WAL; PRAGMA synchronous=FULL;");
  exec(db_, kSchema);
}

Store::~Store() { sqlite3_close(db_); }

std::filesystem::path Store::blob_path(const std::string& checksum) const {
  return data_dir_ / "blobs" / checksum.substr(0, 2) / checksum;
}

AssetRecord Store::put_asset(std::span<const std::uint8_t> bytes, const std::string& kind,
                             const std::string& media_type) {
  AssetRecord rec{new_uuid(), kind, media_type, static_cast<std::int64_t>(bytes.size()), sha256_hex(bytes), now_seconds()};
  const auto path = blob_path(rec.checksum);
  if (!std::filesystem::exists(path)) write_file_atomic(path, bytes);
  std::lock_guard lock(mutex_);
  Statement(db_, "INSERT INTO assets (id, kind, media_type, size, checksum, created) VALUES (?,?,?,?,?,?)")
      .bind(1, rec.id)
      .bind(2, rec.kind)
      .bind(3, rec.media_type)
      .bind(4, rec.size)
      .bind(5, rec.checksum)
      .bind(6, rec.created)
      .run();
  return rec;
}

std::optional<AssetRecord> Store::asset(const std::string& id) const {
  std::lock_guard lock(mutex_);
  Statement q(db_, "SELECT id, kind, media_type, size, checksum, created FROM assets WHERE id = ?");
  q.bind(1, id);
  if (!q.step()) return std::nullopt;
  return AssetRecord{q.text(0), q.text(1), q.text(2), q.integer(3), q.text(4), q.real(5)};
}

std::vector<std::uint8_t> Store::asset_bytes(const AssetRecord& rec) const {
  auto bytes = read_file(blob_path(rec.checksum));
  if (sha256_hex(bytes) != rec.checksum) throw Error(ErrorCode::Io, "blob for asset " + rec.id + " is corrupt");
  return bytes;
}

JobRecord Store::create_job(const json& config) {
  const std::string id = new_uuid();
  const double t = now_seconds();
  std::lock_guard lock(mutex_);
  Statement(db_, "INSERT INTO jobs (id, config, status, created, updated) VALUES (?,?,'queued',?,?)")
      .bind(1, id)
      .bind(2, config.dump())
      .bind(3, t)
      .bind(4, t)
      .run();
  return load_job_locked(id);
}

JobRecord Store::load_job_locked(const std::string& id) const {
  Statement q(db_,
              "SELECT id, config, status, stage, progress, created, updated, error, report FROM jobs WHERE id = ?");
  q.bind(1, id);
  if (!q.step()) throw Error(ErrorCode::NotFound, "job " + id);
  JobRecord r;
  r.id = q.text(0);
  r.config = json::parse(q.text(1));
  r.status = parse_status(q.text(2)).value_or(JobStatus::Failed);
  r.stage = q.text(3);
  r.progress = q.real(4);
  r.created = q.real(5);
  r.updated = q.real(6);
  if (!q.is_null(7)) r.error = q.text(7);
  if (!q.is_null(8)) r.report = json::parse(q.text(8));
  Statement a(db_, "SELECT name, asset_id FROM artifacts WHERE job_id = ? ORDER BY name");
  a.bind(1, id);
  while (a.step()) r.artifacts[a.text(0)] = a.text(1);
  Statement f(db_, "SELECT idx, stage, iteration, asset_id FROM frames WHERE job_id = ? ORDER BY idx");
  f.bind(1, id);
  while (f.step()) r.frames.push_back({static_cast<int>(f.integer(0)), f.text(1), static_cast<int>(f.integer(2)), f.text(3)});
  return r;
}

std::optional<JobRecord> Store::job(const std::string& id) const {
  std::lock_guard lock(mutex_);
  Statement q(db_, "SELECT 1 FROM jobs WHERE id = ?");
  q.bind(1, id);
  if (!q.step()) return std::nullopt;
  return load_job_locked(id);
}

std::vector<JobRecord> Store::jobs(std::optional<JobStatus> status) const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  {
    Statement q(db_, status ? "SELECT id FROM jobs WHERE status = ? ORDER BY seq" : "SELECT id FROM jobs ORDER BY seq");
    if (status) q.bind(1, std::string(to_string(*status)));
    while (q.step()) ids.push_back(q.text(0));
  }
  std::vector<JobRecord> out;
  for (const auto& id : ids) out.push_back(load_job_locked(id));
  return out;
}

std::vector<std::string> Store::queued_ids() const {
  std::lock_guard lock(mutex_);
  Statement q(db_, "SELECT id FROM jobs WHERE status = 'queued' ORDER BY seq");
  std::vector<std::string> ids;
  while (q.step()) ids.push_back(q.text(0));
  return ids;
}

bool Store::mark_running(const std::string& id) {
  std::lock_guard lock(mutex_);
  Statement(db_, "UPDATE jobs SET status = 'running', updated = ? WHERE id = ? AND status = 'queued'")
      .bind(1, now_seconds())
      .bind(2, id)
      .run();
  return sqlite3_changes(db_) > 0;
}

void Store::update_progress(const std::string& id, const std::string& stage, double progress) {
  std::lock_guard lock(mutex_);
  Statement(db_,
            "UPDATE jobs SET stage = ?, progress = MAX(progress, ?), updated = ? WHERE id = ? AND status = 'running'")
      .bind(1, stage)
      .bind(2, progress)
      .bind(3, now_seconds())
      .bind(4, id)
      .run();
}

bool Store::finish(const std::string& id, bool success, const std::optional<std::string>& error, const json& report) {
  std::lock_guard lock(mutex_);
  Statement q(db_,
              "UPDATE jobs SET status = ?, progress = CASE WHEN ? THEN 1.0 ELSE progress END, error = ?, report = ?, "
              "updated = ? WHERE id = ? AND status = 'running'");
  q.bind(1, std::string(success ? "succeeded" : "failed")).bind(2, static_cast<std::int64_t>(success ? 1 : 0));
  if (error) {
    q.bind(3, *error);
  } else {
    q.bind_null(3);
  }
  if (report.is_null()) {
    q.bind_null(4);
  } else {
    q.bind(4, report.dump());
  }
  q.bind(5, now_seconds()).bind(6, id).run();
  return sqlite3_changes(db_) > 0;
}

bool Store::cancel(const std::string& id) {
  std::lock_guard lock(mutex_);
  Statement(db_,
            "UPDATE jobs SET status = 'failed', error = 'cancelled', updated = ? "
            "WHERE id = ? AND status IN ('queued', 'running')")
      .bind(1, now_seconds())
      .bind(2, id)
      .run();
  return sqlite3_changes(db_) > 0;
}

void Store::add_artifact(const std::string& id, const std::string& name, const std::string& asset_id) {
  std::lock_guard lock(mutex_);
  Statement(db_, "INSERT OR REPLACE INTO artifacts (job_id, name, asset_id) VALUES (?,?,?)")
      .bind(1, id)
      .bind(2, name)
      .bind(3, asset_id)
      .run();
}

int Store::add_frame(const std::string& id, const std::string& stage, int iteration, const std::string& asset_id) {
  std::lock_guard lock(mutex_);
  Statement q(db_, "SELECT COALESCE(MAX(idx) + 1, 0) FROM frames WHERE job_id = ?");
  q.bind(1, id);
  q.step();
  const auto idx = q.integer(0);
  Statement(db_, "INSERT INTO frames (job_id, idx, stage, iteration, asset_id) VALUES (?,?,?,?,?)")
      .bind(1, id)
      .bind(2, idx)
      .bind(3, stage)
      .bind(4, static_cast<std::int64_t>(iteration))
      .bind(5, asset_id)
      .run();
  return static_cast<int>(idx);
}

int Store::recover_running(const std::string& reason) {
  std::lock_guard lock(mutex_);
  Statement(db_, "UPDATE jobs SET status = 'failed', error = ?, updated = ? WHERE status = 'running'")
      .bind(1, reason)
      .bind(2, now_seconds())
      .run();
  return sqlite3_changes(db_);
}

std::vector<std::string> Store::fail_stale(double max_age, const std::string& reason) {
  std::lock_guard lock(mutex_);
  const double cutoff = now_seconds() - max_age;
  std::vector<std::string> ids;
  {
    Statement q(db_, "SELECT id FROM jobs WHERE status = 'running' AND updated < ?");
    q.bind(1, cutoff);
    while (q.step()) ids.push_back(q.text(0));
  }
  for (const auto& id : ids) {
    Statement(db_, "UPDATE jobs SET status = 'failed', error = ?, updated = ? WHERE id = ? AND status = 'running'")
        .bind(1, reason)
        .bind(2, now_seconds())
        .bind(3, id)
        .run();
  }
  return ids;
}

}  // namespace carpet::service
