#include "lungcrowd/task_store.hpp"

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

#include "lungcrowd/error.hpp"
#include "lungcrowd/hash.hpp"
#include "lungcrowd/log.hpp"
#include "lungcrowd/manifest.hpp"
#include "lungcrowd/qc_marker.hpp"

namespace lungcrowd {

using nlohmann::json;

namespace {

std::string numbered_id(char prefix, std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, n);
  return buf;
}

json task_segment_json(const TaskSegment& s) {
  return json{{"segment_id", s.segment_id},
              {"width", s.width},
              {"height", s.height},
              {"frame_count", s.frame_count},
              {"marker", s.marker}};
}

TaskSegment task_segment_from_json(const json& j) {
  return TaskSegment{j.at("segment_id").get<std::string>(), j.at("width").get<int>(), j.at("height").get<int>(),
                     j.at("frame_count").get<int>(), j.at("marker").get<QcMarker>()};
}

json task_json(const Task& t) {
  return json{{"task_id", t.task_id},
              {"segment_id", t.segment_id},
              {"assignments_target", t.assignments_target},
              {"state", std::string(to_string(t.state))},
              {"accepted", t.accepted},
              {"failed", t.failed}};
}

Task task_from_json(const json& j) {
  Task t;
  t.task_id = j.at("task_id").get<std::string>();
  t.segment_id = j.at("segment_id").get<std::string>();
  t.assignments_target = j.at("assignments_target").get<int>();
  t.state = j.at("state").get<std::string>() == "complete" ? TaskState::complete : TaskState::open;
  t.accepted = j.value("accepted", 0);
  t.failed = j.value("failed", 0);
  return t;
}

std::int64_t system_millis() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

TaskSegment task_segment_from(const VideoSegment& segment) {
  if (!segment.marker) fail(ErrorKind::invalid_argument, "segment " + segment.layout.segment_id + " has no marker");
  return TaskSegment{segment.layout.segment_id, segment.layout.width(), segment.layout.height(),
                     segment.layout.frame_count(), *segment.marker};
}

std::string_view to_string(TaskState state) { return state == TaskState::complete ? "complete" : "open"; }

std::vector<Task> create_tasks(const std::vector<TaskSegment>& segments, int target, int first_number) {
  if (target < 1) fail(ErrorKind::invalid_argument, "assignments target must be >= 1");
  std::set<std::string> seen;
  std::vector<Task> tasks;
  for (const auto& s : segments) {
    if (!seen.insert(s.segment_id).second) fail(ErrorKind::invalid_argument, "duplicate segment id " + s.segment_id);
    Task t;
    t.task_id = numbered_id('t', static_cast<std::size_t>(first_number) + tasks.size(), 4);
    t.segment_id = s.segment_id;
    t.assignments_target = target;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

TaskStore::TaskStore(StoreConfig config) : config_(std::move(config)) {
  if (config_.workers_per_video < 1) fail(ErrorKind::invalid_argument, "workers_per_video must be >= 1");
  if (!config_.clock) config_.clock = system_millis;
  if (!config_.log_path.empty()) open_log(true);
}

TaskStore::~TaskStore() {
  if (log_) std::fclose(log_);
}

std::unique_ptr<TaskStore> TaskStore::replay_prefix(const std::filesystem::path& log_path, std::size_t max_events,
                                                    StoreConfig config) {
  config.log_path.clear();
  auto store = std::make_unique<TaskStore>(std::move(config));
  std::ifstream in(log_path);
  if (!in) fail(ErrorKind::io, "cannot open " + log_path.string());
  std::string line;
  while (store->events_ < max_events && std::getline(in, line)) {
    if (line.empty()) continue;
    json event;
    try {
      event = json::parse(line);
    } catch (const json::exception&) {
      break;  // torn tail
    }
    store->apply(event.at("kind").get<std::string>(), event.at("payload"));
    ++store->events_;
  }
  return store;
}

void TaskStore::open_log(bool replay_existing) {
  const auto& path = config_.log_path;
  if (replay_existing && std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::uintmax_t good_bytes = 0;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const bool complete = !in.eof();
      if (line.empty()) {
        good_bytes += 1;
        continue;
      }
      json event;
      try {
        event = json::parse(line);
      } catch (const json::exception& e) {
        if (!complete) {
          log::warn(path.string() + ": dropping torn final event at line " + std::to_string(line_no));
          break;
        }
        fail(ErrorKind::format, path.string() + ":" + std::to_string(line_no) + ": corrupt event: " + e.what());
      }
      if (!complete) {
        // parsed but unterminated: keep it and terminate the line
        good_bytes += line.size();
        apply(event.at("kind").get<std::string>(), event.at("payload"));
        ++events_;
        in.close();
        std::filesystem::resize_file(path, good_bytes);
        std::ofstream fix(path, std::ios::app | std::ios::binary);
        fix << '\n';
        good_bytes += 1;
        break;
      }
      apply(event.at("kind").get<std::string>(), event.at("payload"));
      ++events_;
      good_bytes += line.size() + 1;
    }
    in.close();
    if (std::filesystem::file_size(path) != good_bytes) std::filesystem::resize_file(path, good_bytes);
  } else if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  log_ = std::fopen(path.c_str(), "ab");
  if (!log_) fail(ErrorKind::io, "cannot open event log " + path.string());
}

void TaskStore::append_and_apply(const std::string& kind, json payload) {
  // caller holds the unique lock
  if (log_) {
    const json event{{"ts", config_.clock()}, {"kind", kind}, {"payload", payload}};
    const auto line = event.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0)
      fail(ErrorKind::io, "event log write failed");
    if (config_.fsync_each_event) ::fsync(::fileno(log_));
  }
  apply(kind, payload);
  ++events_;
}

void TaskStore::apply(const std::string& kind, const json& payload) {
  if (kind == "tasks_created") {
    for (const auto& entry : payload.at("tasks")) {
      TaskRecord record{task_from_json(entry.at("task")), task_segment_from_json(entry.at("segment")), {}, {}, {}};
      task_by_segment_[record.segment.segment_id] = record.task.task_id;
      tasks_[record.task.task_id] = std::move(record);
    }
  } else if (kind == "worker_registered") {
    workers_[payload.at("worker_id").get<std::string>()] = WorkerRecord{};
  } else if (kind == "assigned") {
    const auto worker = payload.at("worker_id").get<std::string>();
    const auto task_id = payload.at("task_id").get<std::string>();
    auto& record = tasks_.at(task_id);
    record.ever_assigned.insert(worker);
    record.pending.insert(worker);
    workers_.at(worker).pending_task = task_id;
  } else if (kind == "submission") {
    auto s = payload.get<WorkerSubmission>();
    auto& record = tasks_.at(s.task_id);
    record.pending.erase(s.worker_id);
    record.ever_assigned.insert(s.worker_id);
    record.submitted.insert(s.worker_id);
    auto& worker = workers_.at(s.worker_id);
    if (worker.pending_task == s.task_id) worker.pending_task.reset();
    if (s.qc_status == QcStatus::passed) ++record.task.accepted;
    else ++record.task.failed;
    const int counted = config_.reissue_on_qc_fail ? record.task.accepted : record.task.accepted + record.task.failed;
    if (counted >= record.task.assignments_target) record.task.state = TaskState::complete;
    submissions_.push_back(std::move(s));
  } else {
    fail(ErrorKind::format, "unknown event kind '" + kind + "'");
  }
}

bool TaskStore::has_capacity(const TaskRecord& record) const {
  const int used = record.task.accepted + static_cast<int>(record.pending.size()) +
                   (config_.reissue_on_qc_fail ? 0 : record.task.failed);
  return record.task.state == TaskState::open && used < record.task.assignments_target;
}

std::vector<Task> TaskStore::add_tasks(const std::vector<TaskSegment>& segments) {
  std::unique_lock lock(mutex_);
  for (const auto& s : segments)
    if (task_by_segment_.count(s.segment_id))
      fail(ErrorKind::invalid_argument, "duplicate segment id " + s.segment_id);
  auto created = create_tasks(segments, config_.workers_per_video, static_cast<int>(tasks_.size()) + 1);
  if (created.empty()) return created;
  json entries = json::array();
  for (std::size_t i = 0; i < created.size(); ++i)
    entries.push_back(json{{"task", task_json(created[i])}, {"segment", task_segment_json(segments[i])}});
  append_and_apply("tasks_created", json{{"tasks", std::move(entries)}});
  return created;
}

std::string TaskStore::register_worker() {
  std::unique_lock lock(mutex_);
  const auto id = numbered_id('w', workers_.size() + 1, 4);
  append_and_apply("worker_registered", json{{"worker_id", id}});
  return id;
}

std::optional<Task> TaskStore::assign_next(const std::string& worker_id) {
  std::unique_lock lock(mutex_);
  auto wit = workers_.find(worker_id);
  if (wit == workers_.end()) fail(ErrorKind::invalid_argument, "unknown worker " + worker_id);
  if (wit->second.pending_task) return tasks_.at(*wit->second.pending_task).task;

  const TaskRecord* best = nullptr;
  int best_load = 0;
  for (const auto& [id, record] : tasks_) {
    if (!has_capacity(record) || record.ever_assigned.count(worker_id)) continue;
    const int load = record.task.accepted + static_cast<int>(record.pending.size());
    if (!best || load < best_load) {
      best = &record;
      best_load = load;
    }
  }
  if (!best) return std::nullopt;
  const auto task_id = best->task.task_id;
  append_and_apply("assigned", json{{"worker_id", worker_id}, {"task_id", task_id}});
  return tasks_.at(task_id).task;
}

WorkerSubmission TaskStore::submit(WorkerSubmission submission) {
  std::unique_lock lock(mutex_);
  auto wit = workers_.find(submission.worker_id);
  if (wit == workers_.end()) fail(ErrorKind::invalid_argument, "unknown worker " + submission.worker_id);
  auto tit = tasks_.find(submission.task_id);
  if (tit == tasks_.end()) fail(ErrorKind::invalid_argument, "unknown task " + submission.task_id);
  const auto& record = tit->second;
  if (record.submitted.count(submission.worker_id))
    fail(ErrorKind::service, "duplicate submission: worker " + submission.worker_id + " already submitted " +
                                 submission.task_id);
  const bool holds_assignment = record.pending.count(submission.worker_id) > 0;
  if (!holds_assignment && !has_capacity(record))
    fail(ErrorKind::service, "task " + submission.task_id + " is not open for worker " + submission.worker_id);
  if (!holds_assignment && wit->second.pending_task)
    fail(ErrorKind::service, "worker " + submission.worker_id + " holds another assignment");

  const auto& seg = record.segment;
  const Box bounds{0, 0, seg.width, seg.height};
  for (const auto& a : submission.annotations) {
    if (a.frame_index < 0 || a.frame_index >= seg.frame_count)
      fail(ErrorKind::invalid_argument, "malformed annotation: frame " + std::to_string(a.frame_index) +
                                            " outside segment");
    if (a.box.empty() || !contains(bounds, a.box))
      fail(ErrorKind::invalid_argument, "malformed annotation: box outside frame bounds");
  }

  submission.submission_id = numbered_id('s', submissions_.size() + 1, 5);
  submission.segment_id = seg.segment_id;
  submission.qc_status = qc_status_for(seg.marker, submission.annotations, config_.qc_hit_overlap);
  submission.payable = submission.qc_status == QcStatus::passed;
  if (!holds_assignment) {
    // implicit assignment so replay sees the same sequence of facts
    append_and_apply("assigned", json{{"worker_id", submission.worker_id}, {"task_id", submission.task_id}});
  }
  append_and_apply("submission", json(submission));
  return submission;
}

std::vector<Task> TaskStore::tasks() const {
  std::shared_lock lock(mutex_);
  std::vector<Task> out;
  for (const auto& [id, record] : tasks_) out.push_back(record.task);
  return out;
}

std::optional<Task> TaskStore::task(const std::string& task_id) const {
  std::shared_lock lock(mutex_);
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) return std::nullopt;
  return it->second.task;
}

std::optional<TaskSegment> TaskStore::segment_for_task(const std::string& task_id) const {
  std::shared_lock lock(mutex_);
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) return std::nullopt;
  return it->second.segment;
}

std::vector<WorkerSubmission> TaskStore::submissions() const {
  std::shared_lock lock(mutex_);
  return submissions_;
}

std::vector<std::string> TaskStore::workers() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, w] : workers_) out.push_back(id);
  return out;
}

bool TaskStore::has_worker(const std::string& worker_id) const {
  std::shared_lock lock(mutex_);
  return workers_.count(worker_id) > 0;
}

std::size_t TaskStore::event_count() const {
  std::shared_lock lock(mutex_);
  return events_;
}

json TaskStore::snapshot_locked() const {
  json tasks = json::array();
  for (const auto& [id, record] : tasks_) {
    tasks.push_back(json{{"task", task_json(record.task)},
                         {"segment", task_segment_json(record.segment)},
                         {"ever_assigned", record.ever_assigned},
                         {"pending", record.pending},
                         {"submitted", record.submitted}});
  }
  json workers = json::object();
  for (const auto& [id, w] : workers_) workers[id] = w.pending_task ? json(*w.pending_task) : json(nullptr);
  return json{{"tasks", std::move(tasks)}, {"workers", std::move(workers)}, {"submissions", submissions_}};
}

json TaskStore::snapshot() const {
  std::shared_lock lock(mutex_);
  return snapshot_locked();
}

std::string TaskStore::state_hash() const {
  std::shared_lock lock(mutex_);
  return sha256_hex(snapshot_locked().dump());
}

}  // namespace lungcrowd
