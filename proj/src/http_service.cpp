#include "lungcrowd/http_service.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "lungcrowd/error.hpp"
#include "lungcrowd/log.hpp"
#include "lungcrowd/manifest.hpp"

namespace lungcrowd {

using nlohmann::json;

struct TaskService::Impl {
  TaskStore& store;
  ServiceOptions options;
  httplib::Server server;
  std::thread thread;
  int port = -1;
  std::map<std::string, json> manifests;  // worker-safe manifest per segment

  Impl(TaskStore& s, ServiceOptions o) : store(s), options(std::move(o)) {}
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, json{{"error", message}});
}

int status_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::service: return 409;
    case ErrorKind::invalid_argument:
      return std::string_view(e.what()).substr(0, 7) == "unknown" ? 404 : 400;
    default: return 500;
  }
}

std::string frame_name(int n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "f%05d.png", n);
  return buf;
}

}  // namespace

TaskService::TaskService(TaskStore& store, ServiceOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {
  auto& d = *impl_;

  for (const auto& task : store.tasks()) {
    const auto seg = store.segment_for_task(task.task_id);
    json manifest;
    const auto path = d.options.segments_dir / task.segment_id / "segment.json";
    if (!d.options.segments_dir.empty() && std::filesystem::exists(path)) {
      std::ifstream in(path);
      manifest = worker_manifest(json::parse(in));
    } else {
      manifest = json{{"segment_id", seg->segment_id},
                      {"width", seg->width},
                      {"height", seg->height},
                      {"frame_count", seg->frame_count}};
    }
    d.manifests[task.segment_id] = std::move(manifest);
  }

  const int threads = std::max(1, d.options.threads);
  d.server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };

  d.server.Post("/workers", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 201, json{{"worker_id", impl_->store.register_worker()}});
  });

  d.server.Get("/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("worker")) return send_error(res, 400, "missing worker parameter");
    try {
      const auto task = impl_->store.assign_next(req.get_param_value("worker"));
      if (!task) {
        res.status = 204;
        return;
      }
      send_json(res, 200, task_payload(*task));
    } catch (const Error& e) {
      send_error(res, status_for(e), e.what());
    }
  });

  d.server.Get(R"(/segments/([A-Za-z0-9_.\-]+)/frames/(\d+))", [this](const httplib::Request& req,
                                                                      httplib::Response& res) {
    const std::string id = req.matches[1];
    auto it = impl_->manifests.find(id);
    if (it == impl_->manifests.end() || impl_->options.segments_dir.empty())
      return send_error(res, 404, "unknown segment " + id);
    int n = -1;
    try {
      n = std::stoi(std::string(req.matches[2]));
    } catch (const std::exception&) {
    }
    if (n < 0 || n >= it->second.value("frame_count", 0)) return send_error(res, 404, "frame out of range");
    std::ifstream in(impl_->options.segments_dir / id / frame_name(n), std::ios::binary);
    if (!in) return send_error(res, 404, "frame not found");
    std::ostringstream bytes;
    bytes << in.rdbuf();
    res.set_content(bytes.str(), "image/png");
  });

  d.server.Post("/submissions", [this](const httplib::Request& req, httplib::Response& res) {
    WorkerSubmission s;
    try {
      const auto body = json::parse(req.body);
      s.task_id = body.at("task_id").get<std::string>();
      s.worker_id = body.at("worker_id").get<std::string>();
      s.annotations = body.value("annotations", std::vector<Annotation>{});
      s.wall_time_ms = body.value("wall_time_ms", std::int64_t{0});
    } catch (const json::exception& e) {
      return send_error(res, 400, std::string("malformed submission: ") + e.what());
    } catch (const Error& e) {
      return send_error(res, 400, std::string("malformed submission: ") + e.what());
    }
    try {
      const auto stored = impl_->store.submit(std::move(s));
      send_json(res, 201, json{{"submission_id", stored.submission_id},
                               {"qc_status", std::string(to_string(stored.qc_status))},
                               {"payable", stored.payable}});
    } catch (const Error& e) {
      send_error(res, status_for(e), e.what());
    }
  });

  d.server.Get("/admin/report", [this](const httplib::Request& req, httplib::Response& res) {
    const auto& token = impl_->options.admin_token;
    if (token.empty() || !impl_->options.report) return send_error(res, 404, "admin report disabled");
    if (req.get_header_value("X-Admin-Token") != token) return send_error(res, 401, "bad admin token");
    try {
      send_json(res, 200, impl_->options.report());
    } catch (const Error& e) {
      send_error(res, 500, e.what());
    }
  });

  if (!d.options.static_dir.empty()) {
    if (!d.server.set_mount_point("/", d.options.static_dir.string()))
      log::warn("static directory " + d.options.static_dir.string() + " not mounted");
  }
}

TaskService::~TaskService() { stop(); }

json TaskService::task_payload(const Task& task) const {
  const auto& manifest = impl_->manifests.at(task.segment_id);
  double fps = 3.0;
  if (manifest.contains("fps")) fps = manifest.at("fps").get<double>();
  return json{{"task_id", task.task_id},
              {"segment", manifest},
              {"frame_url_template", "/segments/" + task.segment_id + "/frames/{n}"},
              {"fps", fps}};
}

int TaskService::bind() {
  auto& d = *impl_;
  if (d.options.port == 0) {
    d.port = d.server.bind_to_any_port(d.options.host);
  } else if (d.server.bind_to_port(d.options.host, d.options.port)) {
    d.port = d.options.port;
  }
  if (d.port <= 0)
    fail(ErrorKind::service, "cannot bind " + d.options.host + ":" + std::to_string(d.options.port));
  return d.port;
}

void TaskService::listen() {
  if (impl_->port <= 0) fail(ErrorKind::service, "listen() before bind()");
  impl_->server.listen_after_bind();
}

int TaskService::start() {
  const int port = bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void TaskService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace lungcrowd
