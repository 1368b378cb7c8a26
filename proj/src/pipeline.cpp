#include "lungcrowd/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <thread>

#include "lungcrowd/error.hpp"
#include "lungcrowd/hash.hpp"
#include "lungcrowd/log.hpp"
#include "lungcrowd/manifest.hpp"
#include "lungcrowd/mip.hpp"
#include "lungcrowd/qc_marker.hpp"
#include "lungcrowd/replay.hpp"
#include "lungcrowd/task_store.hpp"
#include "lungcrowd/volume.hpp"

namespace lungcrowd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "lungcrowd 0.1.0";

// Runs fn(i) for i in [0, n) on a small pool. The first failure by index is rethrown.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "missing input " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, path.string() + ": " + e.what());
  }
}

fs::path fresh_dir(const fs::path& dir) {
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void require_dir(const fs::path& dir, std::string_view stage) {
  if (!fs::is_directory(dir))
    fail(ErrorKind::io, "missing input " + dir.string() + " (run '" + std::string(stage) + "' first)");
}

std::vector<fs::path> sorted_subdirs(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void write_run_record(const fs::path& dir, std::string_view stage, const PipelineConfig& config, json inputs,
                      json extra = json::object()) {
  json record{{"stage", stage},
              {"tool", kToolVersion},
              {"config_hash", config_hash(config)},
              {"seed", config.seed},
              {"inputs", std::move(inputs)}};
  for (auto& [k, v] : extra.items()) record[k] = v;
  write_json(dir / "run.json", record);
}

const char* split_axis_name(SplitAxis a) {
  return a == SplitAxis::anterior_posterior ? "anterior_posterior" : "superior_inferior";
}

std::string volume_key(const fs::path& p) { return p.filename().string(); }

MatchConfig match_config_for(const PipelineConfig& c) {
  MatchConfig m;
  m.threshold = c.overlap_threshold;
  m.mode = c.overlap_mode;
  m.min_workers = c.min_workers;
  return m;
}

Scenario scenario_for(const PipelineConfig& c) {
  if (c.scenario) return load_scenario(*c.scenario);
  Scenario s;
  s.name = "ideal";
  s.groups.push_back(ProfileGroup{"ideal", WorkerProfile{}, c.workers_per_video});
  return s;
}

std::function<std::int64_t()> logical_clock() {
  auto tick = std::make_shared<std::int64_t>(0);
  return [tick] { return ++*tick; };
}

}  // namespace

void PipelineConfig::validate() const {
  if (volumes.empty()) fail(ErrorKind::invalid_argument, "config lists no volumes");
  std::map<std::string, fs::path> ids;
  for (const auto& v : volumes) {
    if (!fs::is_regular_file(v)) fail(ErrorKind::io, "missing input volume " + v.string());
    if (!ids.emplace(patient_id_for(v), v).second)
      fail(ErrorKind::invalid_argument, "two volumes map to patient " + patient_id_for(v));
  }
  if (!fs::is_regular_file(ground_truth)) fail(ErrorKind::io, "missing ground truth " + ground_truth.string());
  if (qc_sprite && !fs::is_regular_file(*qc_sprite)) fail(ErrorKind::io, "missing QC sprite " + qc_sprite->string());
  if (scenario && !fs::is_regular_file(*scenario)) fail(ErrorKind::io, "missing scenario " + scenario->string());
  render.validate();
  if (sprite_size < 4) fail(ErrorKind::invalid_argument, "sprite_size must be >= 4");
  if (workers_per_video < 1) fail(ErrorKind::invalid_argument, "workers_per_video must be >= 1");
  if (!(overlap_threshold >= 0.0 && overlap_threshold <= 1.0))
    fail(ErrorKind::invalid_argument, "overlap_threshold must lie in [0, 1]");
  if (min_workers < 1) fail(ErrorKind::invalid_argument, "min_workers must be >= 1");
}

json pipeline_config_to_json(const PipelineConfig& c) {
  json volumes = json::array();
  for (const auto& v : c.volumes) volumes.push_back(v.generic_string());
  json seg{{"closing_radius_mm", c.segmentation.closing_radius_mm},
           {"bbox_padding", c.segmentation.bbox_padding},
           {"component_fraction", c.segmentation.component_fraction},
           {"split_axis", split_axis_name(c.segmentation.split_axis)}};
  if (c.segmentation.threshold_override) seg["threshold_override"] = *c.segmentation.threshold_override;
  return json{{"volumes", volumes},
              {"ground_truth", c.ground_truth.generic_string()},
              {"render", c.render},
              {"segmentation", seg},
              {"qc_sprite", c.qc_sprite ? json(c.qc_sprite->generic_string()) : json(nullptr)},
              {"sprite_size", c.sprite_size},
              {"workers_per_video", c.workers_per_video},
              {"reissue_on_qc_fail", c.reissue_on_qc_fail},
              {"overlap_threshold", c.overlap_threshold},
              {"overlap_mode", std::string(to_string(c.overlap_mode))},
              {"min_workers", c.min_workers},
              {"scenario", c.scenario ? json(c.scenario->generic_string()) : json(nullptr)},
              {"out", c.out.generic_string()},
              {"seed", c.seed},
              {"threads", c.threads}};
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  PipelineConfig c;
  try {
    for (const auto& v : j.at("volumes")) c.volumes.push_back(resolve(v.get<std::string>()));
    c.ground_truth = resolve(j.at("ground_truth").get<std::string>());
    if (j.contains("render")) c.render = j.at("render").get<RenderConfig>();
    if (j.contains("segmentation")) {
      const auto& s = j.at("segmentation");
      c.segmentation.closing_radius_mm = s.value("closing_radius_mm", c.segmentation.closing_radius_mm);
      c.segmentation.bbox_padding = s.value("bbox_padding", c.segmentation.bbox_padding);
      c.segmentation.component_fraction = s.value("component_fraction", c.segmentation.component_fraction);
      const auto axis = s.value("split_axis", std::string("superior_inferior"));
      if (axis == "anterior_posterior") c.segmentation.split_axis = SplitAxis::anterior_posterior;
      else if (axis != "superior_inferior") fail(ErrorKind::format, "unknown split_axis '" + axis + "'");
      if (s.contains("threshold_override") && !s.at("threshold_override").is_null())
        c.segmentation.threshold_override = s.at("threshold_override").get<double>();
    }
    if (j.contains("qc_sprite") && !j.at("qc_sprite").is_null()) c.qc_sprite = resolve(j.at("qc_sprite").get<std::string>());
    c.sprite_size = j.value("sprite_size", c.sprite_size);
    c.workers_per_video = j.value("workers_per_video", c.workers_per_video);
    c.reissue_on_qc_fail = j.value("reissue_on_qc_fail", c.reissue_on_qc_fail);
    c.overlap_threshold = j.value("overlap_threshold", c.overlap_threshold);
    c.overlap_mode = overlap_mode_from_string(j.value("overlap_mode", std::string("reference")));
    c.min_workers = j.value("min_workers", c.min_workers);
    if (j.contains("scenario") && !j.at("scenario").is_null()) c.scenario = resolve(j.at("scenario").get<std::string>());
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("pipeline config: ") + e.what());
  }
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return pipeline_config_from_json(read_json(path), path.parent_path());
}

std::string config_hash(const PipelineConfig& config) {
  auto j = pipeline_config_to_json(config);
  j.erase("out");
  j.erase("threads");
  return sha256_hex(j.dump());
}

std::string patient_id_for(const fs::path& volume_path) { return volume_path.stem().string(); }

void cmd_segment(const PipelineConfig& config) {
  config.validate();
  const auto root = fresh_dir(config.out / stage_dir::segmentation);
  parallel_for(config.volumes.size(), config.threads, [&](std::size_t i) {
    const auto& path = config.volumes[i];
    const auto pid = patient_id_for(path);
    const auto volume = load_volume(path);
    SegmentationResult result;
    try {
      result = segment_lungs(volume, config.segmentation);
    } catch (const Error& e) {
      fail(e.kind(), path.string() + ": " + e.what());
    }
    const auto dir = root / pid;
    fs::create_directories(dir);
    json quadrants = json::array();
    for (const auto& q : result.quadrants) {
      const auto name = std::string(to_string(q.id));
      save_mask(MaskFile{q.mask.dims, q.mask.spacing, q.mask.bits}, dir / (name + ".mask"));
      quadrants.push_back(json{{"id", name},
                               {"slice_range", q.slice_range},
                               {"bbox2d", q.bbox2d},
                               {"empty", q.empty},
                               {"voxels", q.mask.count()}});
    }
    const auto& d = volume.dims();
    write_json(dir / "quadrants.json", json{{"patient_id", pid},
                                            {"threshold", result.threshold},
                                            {"dims", {d.nx, d.ny, d.nz}},
                                            {"left_voxels", result.left.count()},
                                            {"right_voxels", result.right.count()},
                                            {"quadrants", quadrants}});
  });
  json inputs = json::object();
  for (const auto& v : config.volumes) inputs[volume_key(v)] = sha256_file(v);
  write_run_record(root, "segment", config, inputs);
}

void cmd_render(const PipelineConfig& config) {
  config.validate();
  const auto seg_root = config.out / stage_dir::segmentation;
  require_dir(seg_root, "segment");
  const auto root = fresh_dir(config.out / stage_dir::rendered);
  parallel_for(config.volumes.size(), config.threads, [&](std::size_t i) {
    const auto pid = patient_id_for(config.volumes[i]);
    const auto dir = seg_root / pid;
    const auto doc = read_json(dir / "quadrants.json");
    const auto volume = load_volume(config.volumes[i]);
    for (const auto& qj : doc.at("quadrants")) {
      const auto id = quadrant_from_string(qj.at("id").get<std::string>());
      if (qj.at("empty").get<bool>()) {
        log::warn(pid + ": quadrant " + std::string(to_string(id)) + " is empty, no video rendered");
        continue;
      }
      auto mask = load_mask(dir / (std::string(to_string(id)) + ".mask"));
      if (!(mask.dims == volume.dims()))
        fail(ErrorKind::format, dir.string() + ": quadrant mask does not match the volume");
      Quadrant q;
      q.id = id;
      q.mask = LungMask{mask.dims, mask.spacing, LungLabel::combined, std::move(mask.bits)};
      q.slice_range = qj.at("slice_range").get<SliceRange>();
      q.bbox2d = qj.at("bbox2d").get<Box>();
      q.empty = false;
      const auto seg = render_segment(volume, q, config.render, pid);
      export_frames(seg, root / seg.layout.segment_id);
    }
  });
  json inputs = json::object();
  for (const auto& v : config.volumes) inputs[volume_key(v)] = sha256_file(v);
  inputs["segmentation"] = sha256_tree(seg_root);
  write_run_record(root, "render", config, inputs);
}

void cmd_inject(const PipelineConfig& config) {
  config.validate();
  const auto rendered = config.out / stage_dir::rendered;
  require_dir(rendered, "render");
  const auto gt = load_ground_truth_csv(config.ground_truth);
  // A crowded or narrow quadrant may have no room for the full-size sprite;
  // those segments fall back to successively smaller copies.
  std::vector<Sprite> sprites;
  for (int size : {config.sprite_size, config.sprite_size * 3 / 4, config.sprite_size / 2,
                   config.sprite_size * 3 / 8, config.sprite_size / 4}) {
    if (size < 4 || (!sprites.empty() && sprites.back().pixels.width == size)) continue;
    sprites.push_back(config.qc_sprite ? load_sprite(*config.qc_sprite, size) : default_sprite(size));
  }
  const auto root = fresh_dir(config.out / stage_dir::segments);
  const auto dirs = sorted_subdirs(rendered);
  std::vector<int> sizes(dirs.size(), 0);
  parallel_for(dirs.size(), config.threads, [&](std::size_t i) {
    auto seg = load_segment(dirs[i], true);
    const auto seed = derive_seed(config.seed, seg.layout.segment_id);
    for (std::size_t k = 0; k < sprites.size(); ++k) {
      const auto& sprite = sprites[k];
      QcMarker marker;
      try {
        marker = place_marker(seg, gt, sprite, seed);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::algorithm || k + 1 == sprites.size()) throw;
        continue;
      }
      if (k > 0)
        log::warn(seg.layout.segment_id + ": no room for a " + std::to_string(config.sprite_size) +
                  " px marker, using " + std::to_string(sprite.pixels.width) + " px");
      seg = composite_marker(std::move(seg), marker, sprite);
      sizes[i] = sprite.pixels.width;
      break;
    }
    seg.seed = seed;
    export_frames(seg, root / seg.layout.segment_id);
  });
  json reduced = json::object();
  for (std::size_t i = 0; i < dirs.size(); ++i)
    if (sizes[i] != sprites.front().pixels.width) reduced[dirs[i].filename().string()] = sizes[i];
  json inputs{{"rendered", sha256_tree(rendered)}, {"ground_truth", sha256_file(config.ground_truth)}};
  if (config.qc_sprite) inputs["qc_sprite"] = sha256_file(*config.qc_sprite);
  write_run_record(root, "inject", config, inputs,
                   json{{"sprite", sprites.front().id}, {"segments", dirs.size()}, {"reduced_markers", reduced}});
}

CrowdRunStats cmd_simulate(const PipelineConfig& config) {
  config.validate();
  const auto seg_root = config.out / stage_dir::segments;
  require_dir(seg_root, "inject");
  const auto catalog = load_catalog(seg_root, true);
  const auto gt = load_ground_truth_csv(config.ground_truth);
  const auto scenario = scenario_for(config);

  const auto service = fresh_dir(config.out / stage_dir::service);
  StoreConfig sc;
  sc.workers_per_video = config.workers_per_video;
  sc.reissue_on_qc_fail = config.reissue_on_qc_fail;
  sc.log_path = service / "events.jsonl";
  sc.clock = logical_clock();
  CrowdRunStats stats;
  std::vector<WorkerSubmission> submissions;
  {
    TaskStore store(sc);
    std::vector<TaskSegment> segments;
    for (const auto& [id, seg] : catalog) segments.push_back(task_segment_from(seg));
    store.add_tasks(segments);
    stats = run_crowd(store, scenario, catalog, gt, config.seed);
    submissions = store.submissions();
  }
  const auto root = fresh_dir(config.out / stage_dir::simulation);
  save_submissions(submissions, root / "submissions.jsonl");
  json inputs{{"segments", sha256_tree(seg_root)}, {"ground_truth", sha256_file(config.ground_truth)}};
  if (config.scenario) inputs["scenario"] = sha256_file(*config.scenario);
  write_run_record(root, "simulate", config, inputs,
                   json{{"scenario", scenario_to_json(scenario)},
                        {"workers", stats.workers},
                        {"submissions", stats.submissions},
                        {"passed", stats.passed},
                        {"failed", stats.failed}});
  return stats;
}

MatchResult cmd_evaluate(const PipelineConfig& config) {
  config.validate();
  const auto seg_root = config.out / stage_dir::segments;
  const auto subs_path = config.out / stage_dir::simulation / "submissions.jsonl";
  require_dir(seg_root, "inject");
  if (!fs::exists(subs_path)) fail(ErrorKind::io, "missing input " + subs_path.string() + " (run 'simulate' first)");
  const auto catalog = load_catalog(seg_root, false);
  const auto gt = load_ground_truth_csv(config.ground_truth);
  const auto submissions = load_submissions(subs_path);
  const auto result = match(submissions, catalog, gt, match_config_for(config));
  const auto metrics = compute_metrics(result, gt);
  const auto root = fresh_dir(config.out / stage_dir::evaluation);
  write_json(root / "match.json", match_to_json(result));
  write_json(root / "metrics.json", json(metrics));
  write_run_record(root, "evaluate", config,
                   json{{"segments", sha256_tree(seg_root)},
                        {"submissions", sha256_file(subs_path)},
                        {"ground_truth", sha256_file(config.ground_truth)}});
  return result;
}

MetricsReport cmd_report(const PipelineConfig& config) {
  const auto eval = config.out / stage_dir::evaluation;
  require_dir(eval, "evaluate");
  auto metrics = read_json(eval / "metrics.json").get<MetricsReport>();
  json chain = json::array();
  for (const char* stage : {stage_dir::segmentation, stage_dir::rendered, stage_dir::segments, stage_dir::simulation,
                            stage_dir::evaluation}) {
    const auto run = config.out / stage / "run.json";
    if (fs::exists(run)) chain.push_back(read_json(run));
  }
  metrics.provenance = json{{"config_hash", config_hash(config)}, {"seed", config.seed}, {"stages", chain}};
  const auto root = fresh_dir(config.out / stage_dir::report);
  write_text(root / "report.json", render_report(metrics, ReportFormat::json));
  write_text(root / "report.txt", render_report(metrics, ReportFormat::text));
  write_text(root / "report.csv", render_report(metrics, ReportFormat::csv));
  write_run_record(root, "report", config, json{{"metrics", sha256_file(eval / "metrics.json")}});
  return metrics;
}

MetricsReport cmd_all(const PipelineConfig& config) {
  cmd_segment(config);
  cmd_render(config);
  cmd_inject(config);
  cmd_simulate(config);
  cmd_evaluate(config);
  return cmd_report(config);
}

void cmd_serve(const PipelineConfig& config, ServiceOptions options) {
  config.validate();
  const auto seg_root = config.out / stage_dir::segments;
  require_dir(seg_root, "inject");
  const auto catalog = load_catalog(seg_root, false);
  const auto gt = load_ground_truth_csv(config.ground_truth);
  StoreConfig sc;
  sc.workers_per_video = config.workers_per_video;
  sc.reissue_on_qc_fail = config.reissue_on_qc_fail;
  sc.log_path = config.out / stage_dir::service / "events.jsonl";
  sc.fsync_each_event = true;
  TaskStore store(sc);
  if (store.tasks().empty()) {
    std::vector<TaskSegment> segments;
    for (const auto& [id, seg] : catalog) segments.push_back(task_segment_from(seg));
    store.add_tasks(segments);
  }
  if (options.segments_dir.empty()) options.segments_dir = seg_root;
  const auto mc = match_config_for(config);
  options.report = [&store, &catalog, &gt, mc] {
    return json(compute_metrics(match(store.submissions(), catalog, gt, mc), gt));
  };
  TaskService service(store, options);
  const int port = service.bind();
  log::info("serving " + std::to_string(store.tasks().size()) + " tasks on http://" + options.host + ":" +
            std::to_string(port));
  service.listen();
}

SegmentCatalog load_catalog(const fs::path& segments_root, bool with_pixels) {
  SegmentCatalog catalog;
  for (const auto& dir : sorted_subdirs(segments_root)) {
    if (!fs::exists(dir / "segment.json")) continue;
    auto seg = load_segment(dir, with_pixels);
    auto id = seg.layout.segment_id;
    catalog.emplace(std::move(id), std::move(seg));
  }
  return catalog;
}

std::vector<WorkerSubmission> load_submissions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::vector<WorkerSubmission> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<WorkerSubmission>());
    } catch (const json::exception& e) {
      fail(ErrorKind::format, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_submissions(const std::vector<WorkerSubmission>& submissions, const fs::path& path) {
  std::string text;
  for (const auto& s : submissions) text += json(s).dump() + "\n";
  write_text(path, text);
}

PipelineConfig write_phantom_dataset(const fs::path& dir, const PhantomDatasetOptions& options) {
  if (options.count < 1) fail(ErrorKind::invalid_argument, "phantom count must be >= 1");
  fs::create_directories(dir / "volumes");
  fs::create_directories(dir / "truth");
  std::vector<std::string> ids;
  for (int i = 0; i < options.count; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "P%02d", i + 1);
    ids.emplace_back(buf);
  }
  std::vector<std::vector<GroundTruthNodule>> nodules(ids.size());
  parallel_for(ids.size(), 0, [&](std::size_t i) {
    PhantomConfig pc = options.phantom;
    pc.seed = derive_seed(options.seed, ids[i]);
    if (options.alternate_bridge) pc.bridge = i % 2 == 1;
    const auto ph = make_phantom(pc, ids[i]);
    save_volume(ph.volume, dir / "volumes" / (ids[i] + ".ctvol"));
    save_mask(MaskFile{ph.left_truth.dims, ph.left_truth.spacing, ph.left_truth.bits},
              dir / "truth" / (ids[i] + "_left.mask"));
    save_mask(MaskFile{ph.right_truth.dims, ph.right_truth.spacing, ph.right_truth.bits},
              dir / "truth" / (ids[i] + "_right.mask"));
    nodules[i] = ph.nodules;
  });
  std::vector<GroundTruthNodule> gt;
  for (auto& n : nodules) gt.insert(gt.end(), n.begin(), n.end());
  save_ground_truth_csv(gt, dir / "ground_truth.csv");

  json cfg{{"volumes", json::array()}, {"ground_truth", "ground_truth.csv"}, {"seed", options.seed}, {"out", "out"}};
  for (const auto& id : ids) cfg["volumes"].push_back("volumes/" + id + ".ctvol");
  write_json(dir / "pipeline.json", cfg);
  return pipeline_config_from_json(cfg, dir);
}

MetricsReport cmd_replay(const fs::path& recorded, const fs::path& out, const MatchConfig& match_config) {
  const auto fixture = build_replay_fixture(load_recorded_outcomes(recorded));
  const auto service = fresh_dir(out / stage_dir::service);
  StoreConfig sc;
  sc.workers_per_video = fixture.workers_per_video;
  sc.reissue_on_qc_fail = true;
  sc.log_path = service / "events.jsonl";
  sc.clock = logical_clock();
  std::vector<WorkerSubmission> stored;
  {
    TaskStore store(sc);
    stored = replay_into(store, fixture);
  }
  const auto result = match(stored, fixture.segments, fixture.gt, match_config);
  auto metrics = compute_metrics(result, fixture.gt);
  metrics.provenance = json{{"recorded_outcomes", sha256_file(recorded)}, {"tool", kToolVersion}};

  save_submissions(stored, fresh_dir(out / stage_dir::simulation) / "submissions.jsonl");
  save_ground_truth_csv(fixture.gt, out / stage_dir::simulation / "ground_truth.csv");
  const auto eval = fresh_dir(out / stage_dir::evaluation);
  write_json(eval / "match.json", match_to_json(result));
  write_json(eval / "metrics.json", json(metrics));
  const auto report = fresh_dir(out / stage_dir::report);
  write_text(report / "report.json", render_report(metrics, ReportFormat::json));
  write_text(report / "report.txt", render_report(metrics, ReportFormat::text));
  write_text(report / "report.csv", render_report(metrics, ReportFormat::csv));
  return metrics;
}

}  // namespace lungcrowd
