#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>

#include <json.hpp>

#include "lungcrowd/task_store.hpp"

namespace lungcrowd {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string admin_token;  // empty disables the admin route
  std::filesystem::path static_dir;  // annotator bundle, mounted at /
  std::filesystem::path segments_dir;  // segments/<id>/{segment.json,f*.png}
  /// Builds the MetricsReport JSON for GET /admin/report.
  std::function<nlohmann::json()> report;
  int threads = 8;
};

/// HTTP/JSON front end of a TaskStore.
///
///   POST /workers                  -> 201 {worker_id}
///   GET  /tasks/next?worker=<id>   -> 200 task payload, 204 when nothing is left
///   GET  /segments/<id>/frames/<n> -> image/png
///   POST /submissions              -> 201 {submission_id, qc_status}
///   GET  /admin/report             -> MetricsReport (X-Admin-Token header)
class TaskService {
 public:
  TaskService(TaskStore& store, ServiceOptions options);
  ~TaskService();

  TaskService(const TaskService&) = delete;
  TaskService& operator=(const TaskService&) = delete;

  /// Binds the socket; returns the bound port.
  int bind();
  /// Serves until stop(). bind() must have succeeded.
  void listen();
  /// bind() then listen() on a background thread.
  int start();
  void stop();

  /// The payload GET /tasks/next returns for a task, without any marker data.
  nlohmann::json task_payload(const Task& task) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lungcrowd
