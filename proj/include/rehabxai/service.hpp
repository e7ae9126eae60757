#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "rehabxai/common.hpp"

namespace rehabxai {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path store_root;  // empty means default_store_root()
  std::uint64_t seed = 0;
  int workers = 2;
  std::filesystem::path app_dir;  // static UI bundle mounted at /app when present
  Exec exec = Exec::kParallel;
};

// 26-character Crockford base32: 48-bit millisecond time then 80 bits of
// entropy. Ids from one process sort by creation order.
std::string make_ulid();

// HTTP API over a file-backed store.
//
//   POST /datasets                     dataset JSON or {"generate": {...}, "seed": S}
//   GET  /datasets, /datasets/{id}, /datasets/{id}/trials/{trial}
//   POST /models/train                 -> 202 job
//   POST /models/grid                  -> 202 job
//   GET  /models/{id}
//   POST /models/{id}/predict
//   POST /spaces/build                 -> 202 job
//   GET  /spaces/{id}
//   GET  /explain?case=&k=&metric=&space=&session=&rom_space=&comp_space=&attribution=
//   POST /sessions                     single participant or batch
//   GET  /sessions/{id}, /sessions/{id}/cases, /sessions/{id}/log, /sessions/{id}/report
//   POST /sessions/{id}/assessments
//   GET  /jobs/{id}
//
// Errors: 400 validation, 404 unknown id, 409 phase or duplicate conflicts,
// 500 with a diagnostic id.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread. Returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rehabxai
