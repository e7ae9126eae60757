#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace rehabxai {

enum class RecordKind { kDataset, kModel, kSpace, kSession, kJob };
std::string_view to_string(RecordKind k);

// Root from REHABXAI_STORE, else ./rehabxai_store.
std::filesystem::path default_store_root();

// One JSON file per record under <root>/<kind>/<id>.json. Writes go through
// write-temp-then-rename under a per-record lock (in-process mutex plus an
// flock on a sidecar file for other processes).
class Store {
 public:
  explicit Store(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path(RecordKind kind, const std::string& id) const;

  void put(RecordKind kind, const std::string& id, const nlohmann::json& record);
  // Writes only if absent; returns false when the record already existed.
  bool put_if_absent(RecordKind kind, const std::string& id, const nlohmann::json& record);
  std::optional<nlohmann::json> get(RecordKind kind, const std::string& id) const;
  // Throws NotFoundError.
  nlohmann::json require(RecordKind kind, const std::string& id) const;
  bool exists(RecordKind kind, const std::string& id) const;
  std::vector<std::string> list(RecordKind kind) const;

  // Read-modify-write under the record lock. Throws NotFoundError when absent.
  nlohmann::json update(RecordKind kind, const std::string& id,
                        const std::function<nlohmann::json(nlohmann::json)>& fn);

 private:
  class RecordLock;
  std::mutex& record_mutex(RecordKind kind, const std::string& id);

  std::filesystem::path root_;
  mutable std::mutex table_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> record_mutexes_;
};

// Validates a record id: [A-Za-z0-9_-], 1..128 chars.
bool valid_record_id(std::string_view id);

}  // namespace rehabxai
