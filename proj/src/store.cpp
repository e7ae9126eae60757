#include "rehabxai/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>

#include "rehabxai/common.hpp"

namespace rehabxai {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(RecordKind k) {
  switch (k) {
    case RecordKind::kDataset: return "datasets";
    case RecordKind::kModel: return "models";
    case RecordKind::kSpace: return "spaces";
    case RecordKind::kSession: return "sessions";
    case RecordKind::kJob: return "jobs";
  }
  return "records";
}

fs::path default_store_root() {
  if (const char* env = std::getenv("REHABXAI_STORE"); env != nullptr && *env != '\0') return env;
  return fs::current_path() / "rehabxai_store";
}

bool valid_record_id(std::string_view id) {
  if (id.empty() || id.size() > 128) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
           c == '_';
  });
}

class Store::RecordLock {
 public:
  RecordLock(std::mutex& m, const fs::path& lock_path) : guard_(m) {
    fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open lock file " + lock_path.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw IoError("cannot lock " + lock_path.string());
    }
  }
  ~RecordLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  RecordLock(const RecordLock&) = delete;
  RecordLock& operator=(const RecordLock&) = delete;

 private:
  std::lock_guard<std::mutex> guard_;
  int fd_ = -1;
};

Store::Store(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  for (RecordKind k : {RecordKind::kDataset, RecordKind::kModel, RecordKind::kSpace,
                       RecordKind::kSession, RecordKind::kJob}) {
    fs::create_directories(root_ / to_string(k), ec);
    if (ec) throw IoError("cannot create store directory " + (root_ / to_string(k)).string() + ": " + ec.message());
  }
}

fs::path Store::path(RecordKind kind, const std::string& id) const {
  if (!valid_record_id(id)) throw ValidationError("invalid record id '" + id + "'");
  return root_ / to_string(kind) / (id + ".json");
}

std::mutex& Store::record_mutex(RecordKind kind, const std::string& id) {
  std::lock_guard<std::mutex> g(table_mutex_);
  auto& slot = record_mutexes_[std::string(to_string(kind)) + "/" + id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void Store::put(RecordKind kind, const std::string& id, const json& record) {
  const fs::path p = path(kind, id);
  RecordLock lock(record_mutex(kind, id), p.string() + ".lock");
  write_file_atomic(p, record.dump());
}

bool Store::put_if_absent(RecordKind kind, const std::string& id, const json& record) {
  const fs::path p = path(kind, id);
  RecordLock lock(record_mutex(kind, id), p.string() + ".lock");
  if (fs::exists(p)) return false;
  write_file_atomic(p, record.dump());
  return true;
}

std::optional<json> Store::get(RecordKind kind, const std::string& id) const {
  if (!valid_record_id(id)) return std::nullopt;
  const fs::path p = path(kind, id);
  if (!fs::exists(p)) return std::nullopt;
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw IoError("corrupt record " + p.string() + ": " + e.what());
  }
}

json Store::require(RecordKind kind, const std::string& id) const {
  auto r = get(kind, id);
  if (!r) throw NotFoundError("unknown " + std::string(to_string(kind)) + " id '" + id + "'");
  return *r;
}

bool Store::exists(RecordKind kind, const std::string& id) const {
  return valid_record_id(id) && fs::exists(path(kind, id));
}

std::vector<std::string> Store::list(RecordKind kind) const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root_ / to_string(kind))) {
    if (entry.path().extension() == ".json") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

json Store::update(RecordKind kind, const std::string& id, const std::function<json(json)>& fn) {
  const fs::path p = path(kind, id);
  RecordLock lock(record_mutex(kind, id), p.string() + ".lock");
  if (!fs::exists(p)) {
    throw NotFoundError("unknown " + std::string(to_string(kind)) + " id '" + id + "'");
  }
  json current;
  try {
    current = json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw IoError("corrupt record " + p.string() + ": " + e.what());
  }
  json next = fn(std::move(current));
  write_file_atomic(p, next.dump());
  return next;
}

}  // namespace rehabxai
