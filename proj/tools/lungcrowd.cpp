// lungcrowd: command-line front end for the crowd nodule-detection pipeline.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lungcrowd/error.hpp"
#include "lungcrowd/log.hpp"
#include "lungcrowd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lungcrowd;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = -1;
};

struct Overrides {
  std::optional<int> slab_thickness, slab_stride, interp_frames;
  std::optional<double> fps;
  std::string qc_sprite;
  std::string scenario;
  std::optional<int> workers_per_video;
  std::string overlap_mode;
  std::optional<double> overlap_threshold;
  std::optional<int> min_workers;
  std::string submissions;  // extra copy of simulate's output
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "Override the config seed");
  cmd->add_option("--out", args.out, "Override the output root");
  cmd->add_option("--threads", args.threads, "Worker threads (0: all cores)");
}

PipelineConfig resolve(const CommonArgs& args, const Overrides& o) {
  auto c = load_pipeline_config(args.config);
  if (args.seed) c.seed = *args.seed;
  if (!args.out.empty()) c.out = args.out;
  if (args.threads >= 0) c.threads = args.threads;
  if (o.slab_thickness) c.render.slab_thickness = *o.slab_thickness;
  if (o.slab_stride) c.render.slab_stride = *o.slab_stride;
  if (o.interp_frames) c.render.interp_frames = *o.interp_frames;
  if (o.fps) c.render.fps = *o.fps;
  if (!o.qc_sprite.empty()) c.qc_sprite = fs::path(o.qc_sprite);
  if (!o.scenario.empty()) c.scenario = fs::path(o.scenario);
  if (o.workers_per_video) c.workers_per_video = *o.workers_per_video;
  if (!o.overlap_mode.empty()) c.overlap_mode = overlap_mode_from_string(o.overlap_mode);
  if (o.overlap_threshold) c.overlap_threshold = *o.overlap_threshold;
  if (o.min_workers) c.min_workers = *o.min_workers;
  return c;
}

void print_summary(const MetricsReport& r) { std::cout << render_report(r, ReportFormat::text); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd-sourced lung nodule detection pipeline"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress and warnings");

  CommonArgs common;
  Overrides over;

  auto* phantom = app.add_subcommand("phantom", "Generate synthetic thorax phantoms with ground truth");
  std::string phantom_out;
  PhantomDatasetOptions phantom_opts;
  bool no_bridge = false;
  phantom->add_option("--out", phantom_out, "Dataset directory")->required();
  phantom->add_option("--count", phantom_opts.count, "Number of patients")->check(CLI::PositiveNumber);
  phantom->add_option("--seed", phantom_opts.seed, "Generator seed");
  phantom->add_option("--nodules", phantom_opts.phantom.nodules, "Nodules per patient")->check(CLI::NonNegativeNumber);
  phantom->add_flag("--no-bridge", no_bridge, "Never join the lungs with a parenchymal bridge");

  auto* segment = app.add_subcommand("segment", "Segment lungs and split them into quadrants");
  add_common(segment, common);

  auto* render = app.add_subcommand("render", "Render thin-slab MIP videos per quadrant");
  add_common(render, common);
  render->add_option("--slab-thickness", over.slab_thickness, "Slices per slab");
  render->add_option("--slab-stride", over.slab_stride, "Slices between keyframes");
  render->add_option("--interp-frames", over.interp_frames, "Blended frames between keyframes");
  render->add_option("--fps", over.fps, "Playback rate");

  auto* inject = app.add_subcommand("inject", "Place the QC marker into every video");
  add_common(inject, common);
  inject->add_option("--qc-sprite", over.qc_sprite, "RGBA PNG used as the QC marker")->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "Serve tasks to workers over HTTP");
  add_common(serve, common);
  ServiceOptions service;
  std::string static_dir;
  serve->add_option("--host", service.host, "Listen address");
  serve->add_option("--port", service.port, "Listen port (0 picks one)");
  serve->add_option("--static", static_dir, "Annotator bundle to mount at /");
  serve->add_option("--admin-token", service.admin_token, "Token for /admin/report")
      ->envname("LUNGCROWD_ADMIN_TOKEN");

  auto* simulate = app.add_subcommand("simulate", "Run a simulated crowd against the task store");
  add_common(simulate, common);
  simulate->add_option("--scenario", over.scenario, "Scenario JSON (ideal crowd when omitted)")
      ->check(CLI::ExistingFile);
  simulate->add_option("--workers-per-video", over.workers_per_video, "Accepted submissions per task");
  simulate->add_option("--submissions", over.submissions, "Also write the submissions JSON-lines here");

  auto* evaluate = app.add_subcommand("evaluate", "Match accepted annotations against ground truth");
  add_common(evaluate, common);
  evaluate->add_option("--overlap-mode", over.overlap_mode, "reference or iou");
  evaluate->add_option("--overlap-threshold", over.overlap_threshold, "Detection needs overlap above this");
  evaluate->add_option("--min-workers", over.min_workers, "Distinct workers needed for a detection");

  auto* report = app.add_subcommand("report", "Write report.{json,txt,csv}");
  add_common(report, common);

  auto* all = app.add_subcommand("all", "segment, render, inject, simulate, evaluate and report");
  add_common(all, common);
  all->add_option("--scenario", over.scenario, "Scenario JSON (ideal crowd when omitted)")->check(CLI::ExistingFile);
  all->add_option("--qc-sprite", over.qc_sprite, "RGBA PNG used as the QC marker")->check(CLI::ExistingFile);
  all->add_option("--overlap-mode", over.overlap_mode, "reference or iou");

  auto* replay = app.add_subcommand("replay", "Evaluate the recorded study outcome fixture");
  std::string recorded = LUNGCROWD_DATA_DIR "/recorded_outcomes.json";
  std::string replay_out = "out/replay";
  std::string replay_mode = "reference";
  replay->add_option("--recorded", recorded, "Recorded outcomes JSON")->check(CLI::ExistingFile);
  replay->add_option("--out", replay_out, "Output directory");
  replay->add_option("--overlap-mode", replay_mode, "reference or iou");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::usage);
  }
  log::set_quiet(quiet);

  try {
    if (phantom->parsed()) {
      if (no_bridge) phantom_opts.alternate_bridge = false;
      const auto cfg = write_phantom_dataset(phantom_out, phantom_opts);
      std::cout << "wrote " << cfg.volumes.size() << " phantom(s) and " << (fs::path(phantom_out) / "pipeline.json").string()
                << '\n';
    } else if (segment->parsed()) {
      cmd_segment(resolve(common, over));
    } else if (render->parsed()) {
      cmd_render(resolve(common, over));
    } else if (inject->parsed()) {
      cmd_inject(resolve(common, over));
    } else if (simulate->parsed()) {
      // `--out file.jsonl` names the submissions file rather than the output root
      if (fs::path(common.out).extension() == ".jsonl") {
        over.submissions = common.out;
        common.out.clear();
      }
      const auto cfg = resolve(common, over);
      const auto stats = cmd_simulate(cfg);
      if (!over.submissions.empty())
        save_submissions(load_submissions(cfg.out / stage_dir::simulation / "submissions.jsonl"), over.submissions);
      std::cout << stats.workers << " workers, " << stats.submissions << " submissions, " << stats.passed
                << " passed QC, " << stats.failed << " failed\n";
    } else if (evaluate->parsed()) {
      const auto result = cmd_evaluate(resolve(common, over));
      int detected = 0;
      for (const auto& n : result.nodules) detected += n.detected ? 1 : 0;
      std::cout << detected << " of " << result.nodules.size() << " nodules detected\n";
    } else if (report->parsed()) {
      print_summary(cmd_report(resolve(common, over)));
    } else if (all->parsed()) {
      print_summary(cmd_all(resolve(common, over)));
    } else if (serve->parsed()) {
      if (!static_dir.empty()) service.static_dir = static_dir;
      cmd_serve(resolve(common, over), service);
    } else if (replay->parsed()) {
      MatchConfig mc;
      mc.mode = overlap_mode_from_string(replay_mode);
      print_summary(cmd_replay(recorded, replay_out, mc));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
