#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "lungcrowd/segment.hpp"
#include "lungcrowd/submission.hpp"

namespace lungcrowd {

/// What the store needs to know about a segment to validate and QC submissions.
struct TaskSegment {
  std::string segment_id;
  int width = 0;
  int height = 0;
  int frame_count = 0;
  QcMarker marker;

  friend bool operator==(const TaskSegment&, const TaskSegment&) = default;
};

TaskSegment task_segment_from(const VideoSegment& segment);

enum class TaskState { open, complete };
std::string_view to_string(TaskState state);

struct Task {
  std::string task_id;
  std::string segment_id;
  int assignments_target = 10;
  TaskState state = TaskState::open;
  int accepted = 0;
  int failed = 0;

  friend bool operator==(const Task&, const Task&) = default;
};

/// One task per segment, ids t0001, t0002, ... in input order.
/// Throws on duplicate segment ids or target < 1.
std::vector<Task> create_tasks(const std::vector<TaskSegment>& segments, int target, int first_number = 1);

struct StoreConfig {
  int workers_per_video = 10;
  /// Failed-QC submissions free their slot for another worker. When false the
  /// slot is consumed and the task completes once `target` submissions exist.
  bool reissue_on_qc_fail = true;
  double qc_hit_overlap = 0.5;
  /// Empty path keeps the store in memory only.
  std::filesystem::path log_path;
  bool fsync_each_event = false;
  /// Event timestamps in ms. Defaults to the system clock.
  std::function<std::int64_t()> clock;
};

/// Event-sourced task/submission state. Every mutation is appended to a
/// JSON-lines log ({ts, kind, payload}) before it is applied; opening a store
/// replays the log. Mutations are serialized; reads take a shared lock.
class TaskStore {
 public:
  explicit TaskStore(StoreConfig config);
  ~TaskStore();

  TaskStore(const TaskStore&) = delete;
  TaskStore& operator=(const TaskStore&) = delete;

  /// Replays at most `max_events` events of a log into an in-memory store.
  static std::unique_ptr<TaskStore> replay_prefix(const std::filesystem::path& log_path, std::size_t max_events,
                                                  StoreConfig config = {});

  std::vector<Task> add_tasks(const std::vector<TaskSegment>& segments);
  std::string register_worker();

  /// The worker's outstanding assignment if any, otherwise the least-assigned
  /// open task with spare capacity the worker has never been given (ties by
  /// task id). nullopt when nothing is left.
  std::optional<Task> assign_next(const std::string& worker_id);

  /// Validates, resolves qc_status and persists the submission.
  WorkerSubmission submit(WorkerSubmission submission);

  std::vector<Task> tasks() const;
  std::optional<Task> task(const std::string& task_id) const;
  std::optional<TaskSegment> segment_for_task(const std::string& task_id) const;
  std::vector<WorkerSubmission> submissions() const;
  std::vector<std::string> workers() const;
  bool has_worker(const std::string& worker_id) const;
  std::size_t event_count() const;
  const StoreConfig& config() const { return config_; }

  /// Canonical state document (no timestamps) and its SHA-256.
  nlohmann::json snapshot() const;
  std::string state_hash() const;

 private:
  struct TaskRecord {
    Task task;
    TaskSegment segment;
    std::set<std::string> ever_assigned;
    std::set<std::string> pending;
    std::set<std::string> submitted;
  };
  struct WorkerRecord {
    std::optional<std::string> pending_task;
  };

  void open_log(bool replay_existing);
  void append_and_apply(const std::string& kind, nlohmann::json payload);
  void apply(const std::string& kind, const nlohmann::json& payload);
  bool has_capacity(const TaskRecord& record) const;
  nlohmann::json snapshot_locked() const;

  StoreConfig config_;
  mutable std::shared_mutex mutex_;
  std::FILE* log_ = nullptr;
  std::size_t events_ = 0;
  std::map<std::string, TaskRecord> tasks_;
  std::map<std::string, std::string> task_by_segment_;
  std::map<std::string, WorkerRecord> workers_;
  std::vector<WorkerSubmission> submissions_;
};

}  // namespace lungcrowd
