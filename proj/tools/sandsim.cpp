#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/signal_set.hpp>
#include <json.hpp>

#include "sandsim/config.hpp"
#include "sandsim/error.hpp"
#include "sandsim/fitting.hpp"
#include "sandsim/metrics.hpp"
#include "sandsim/planner.hpp"
#include "sandsim/rasterizer.hpp"
#include "sandsim/scene.hpp"
#include "sandsim/sequencer.hpp"
#include "sandsim/service.hpp"

namespace fs = std::filesystem;
using namespace sandsim;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void report_error(std::string_view kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << std::endl;
}

AppConfig load_config(const std::vector<std::string>& args) {
  AppConfig config;
  for (const auto& a : args) {
    try {
      apply_config_arg(config, a);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::IoError) throw;
      throw UsageError(std::string(to_string(e.kind())) + ": " + e.what());
    }
  }
  return config;
}

RegionPlan plan_for(const std::string& plan_path, int width, int height) {
  return plan_path.empty() ? fallback_plan(width, height) : load_plan(plan_path);
}

// Strokes keep a region they already carry when the plan knows it.
Painting classify_missing(Painting painting, const RegionPlan& plan) {
  const bool complete = std::all_of(painting.strokes.begin(), painting.strokes.end(),
                                    [&](const Stroke& s) { return s.region && plan.find(*s.region); });
  return complete ? painting : classify_strokes(std::move(painting), plan);
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

struct FitArgs {
  std::string target, plan, output, trace;
  std::vector<std::string> config;
  std::uint64_t seed = 0;
  int log_every = 100;
};

int run_fit(const FitArgs& a) {
  const AppConfig config = load_config(a.config);
  const Image target = read_png(a.target);
  const RegionPlan plan = plan_for(a.plan, target.width(), target.height());
  const FitResult result = fit(target, plan, config.fit, a.seed, [&](const LossReport& r, const Painting&) {
    if (a.log_every > 0 && (r.iteration % a.log_every == 0 || r.iteration == config.fit.iterations)) {
      std::printf("iter %6d  loss %.6e  rec %.6e  psnr %.2f dB  strokes %zu  kernels %zu\n", r.iteration, r.total,
                  r.rec, r.psnr, r.strokes, r.kernels);
      std::fflush(stdout);
    }
  });
  save_painting(a.output, result.painting);
  const fs::path trace = a.trace.empty() ? fs::path(a.output).replace_extension(".trace.csv") : fs::path(a.trace);
  write_trace_csv(trace, result.trace);
  if (result.status == FitStatus::AbortedNonFinite) {
    report_error(to_string(ErrorKind::NonFiniteLoss), result.message + " (last finite painting saved)");
    return kRuntimeError;
  }
  if (!result.trace.empty()) std::printf("final psnr %.3f dB\n", result.trace.back().psnr);
  return 0;
}

struct RenderArgs {
  std::string painting, output;
  bool deterministic = false;
};

int run_render(const RenderArgs& a) {
  const Painting p = load_painting(a.painting);
  RenderOptions opt;
  opt.deterministic = a.deterministic;
  write_png(a.output, render(p, opt).image);
  return 0;
}

struct AnimateArgs {
  std::string painting, plan, output;
  int kpf = 5;
  int fps = 24;
  int workers = 0;
  bool deterministic = false;
};

int run_animate(const AnimateArgs& a) {
  const Painting loaded = load_painting(a.painting);
  const RegionPlan plan = plan_for(a.plan, loaded.width, loaded.height);
  const Painting painting = classify_missing(loaded, plan);
  const ProcessScript script = build_script(painting, plan, a.fps, a.kpf);
  RenderOptions opt;
  opt.deterministic = a.deterministic;
  const FrameManifest m = emit_frames(painting, script, a.output, opt, a.workers);
  write_json(fs::path(a.output) / "process_script.json", to_json(script));
  std::printf("wrote %d frames to %s\n", m.frame_count, a.output.c_str());
  return 0;
}

struct SimulateArgs {
  std::string painting, plan, output;
  std::vector<std::string> config;
  bool progressive = false;
  bool all_at_once = false;
  int kpf = 5;
  int snapshot_every = 0;
};

int run_simulate(const SimulateArgs& a) {
  AppConfig config = load_config(a.config);
  if (a.progressive && a.all_at_once) throw UsageError("--progressive and --all-at-once are exclusive");
  if (a.progressive) config.process.progressive = true;
  if (a.all_at_once) config.process.progressive = false;
  const Painting loaded = load_painting(a.painting);
  const RegionPlan plan = plan_for(a.plan, loaded.width, loaded.height);
  const Painting painting = classify_missing(loaded, plan);
  const ProcessScript script = build_script(painting, plan, 24, a.kpf);

  SandScene scene = make_scene(painting, config.sim, config.lift);
  scene.render_options = config.render3d;
  const std::size_t progress_calls = config.process.progressive ? script.events.size() : 0;
  std::size_t calls = 0;
  int written = 0;
  simulate_process(scene, painting, script, config.process, [&](const ProcessSnapshot& snap) {
    // The last callback reports the final settle, which is written below.
    if (calls++ >= progress_calls || a.snapshot_every <= 0) return;
    if ((snap.event + 1) % a.snapshot_every != 0) return;
    char stem[32];
    std::snprintf(stem, sizeof stem, "snapshot_%06d", written++);
    write_snapshot(a.output, stem, *snap.scene);
  });
  write_snapshot(a.output, "final", scene);
  std::printf("simulated %zu particles for %lld steps\n", scene.state.particles.size(),
              static_cast<long long>(scene.state.step));
  return 0;
}

struct EvalArgs {
  std::string gen, ref, target, output, frame_dist = "l2", gen_csv, ref_csv;
  int levels = 32;
};

int run_eval(const EvalArgs& a) {
  EvalInputs in;
  try {
    in.mode = parse_frame_distance(a.frame_dist);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (in.mode == FrameDistance::ExternalFile && (a.gen_csv.empty() || a.ref_csv.empty())) {
    throw UsageError("external_file needs --gen-csv and --ref-csv");
  }
  in.generated = load_frame_sequence(a.gen);
  in.reference = load_frame_sequence(a.ref);
  in.target = a.target.empty() ? in.reference.back() : read_png(a.target);
  in.generated_csv = a.gen_csv;
  in.reference_csv = a.ref_csv;
  in.glcm_levels = a.levels;
  const nlohmann::json report = evaluate(in);
  write_json(a.output, report);
  std::printf("%s\n", report.dump().c_str());
  return 0;
}

struct ServeArgs {
  std::string painting;
  std::vector<std::string> config;
  int port = -1;
};

int run_serve(const ServeArgs& a) {
  AppConfig config = load_config(a.config);
  if (a.port >= 0) config.service.port = a.port;
  SandService service(load_painting(a.painting), config);
  service.start();
  std::printf("serving on http://%s:%u (GET /state, GET /frame, websocket on any path)\n",
              config.service.address.c_str(), service.port());
  std::fflush(stdout);
  boost::asio::io_context signals_ctx;
  boost::asio::signal_set signals(signals_ctx, SIGINT, SIGTERM);
  signals.async_wait([](const boost::system::error_code&, int) {});
  signals_ctx.run();
  service.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sand painting vectorization, process animation and granular simulation"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit Gaussian sand strokes to a target image");
  fit_cmd->add_option("target", fit_args.target, "Target PNG")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--plan", fit_args.plan, "Region plan manifest (JSON)")->check(CLI::ExistingFile);
  fit_cmd->add_option("--config", fit_args.config, "Config file or key=val override (repeatable)");
  fit_cmd->add_option("-o,--output", fit_args.output, "Output painting JSON")->required();
  fit_cmd->add_option("--trace", fit_args.trace, "Loss trace CSV (default: <output>.trace.csv)");
  fit_cmd->add_option("--seed", fit_args.seed, "Initialization seed");
  fit_cmd->add_option("--log-every", fit_args.log_every, "Progress line period in iterations (0 = quiet)");

  RenderArgs render_args;
  auto* render_cmd = app.add_subcommand("render", "Render a painting to PNG");
  render_cmd->add_option("painting", render_args.painting, "Painting JSON")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("-o,--output", render_args.output, "Output PNG")->required();
  render_cmd->add_flag("--deterministic", render_args.deterministic, "Fixed accumulation order");

  AnimateArgs anim_args;
  auto* anim_cmd = app.add_subcommand("animate", "Emit the drawing process as a PNG sequence");
  anim_cmd->add_option("painting", anim_args.painting, "Painting JSON")->required()->check(CLI::ExistingFile);
  anim_cmd->add_option("--plan", anim_args.plan, "Region plan manifest (JSON)")->check(CLI::ExistingFile);
  anim_cmd->add_option("--kpf", anim_args.kpf, "Kernels revealed per frame")->check(CLI::PositiveNumber);
  anim_cmd->add_option("--fps", anim_args.fps, "Frames per second recorded in the manifest")->check(CLI::PositiveNumber);
  anim_cmd->add_option("--workers", anim_args.workers, "Render threads (0 = hardware concurrency)");
  anim_cmd->add_flag("--deterministic", anim_args.deterministic, "Fixed accumulation order");
  anim_cmd->add_option("-o,--output", anim_args.output, "Output directory")->required();

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Lift strokes into sand particles and run the simulation");
  sim_cmd->add_option("painting", sim_args.painting, "Painting JSON")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--plan", sim_args.plan, "Region plan manifest (JSON)")->check(CLI::ExistingFile);
  sim_cmd->add_flag("--progressive", sim_args.progressive, "Deposit per script event (default)");
  sim_cmd->add_flag("--all-at-once", sim_args.all_at_once, "Deposit every stroke before stepping");
  sim_cmd->add_option("--kpf", sim_args.kpf, "Kernels per script event")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--snapshot-every", sim_args.snapshot_every, "Snapshot period in events (0 = final only)");
  sim_cmd->add_option("--config", sim_args.config, "Config file or key=val override (repeatable)");
  sim_cmd->add_option("-o,--output", sim_args.output, "Snapshot directory")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Compare a generated process against a reference");
  eval_cmd->add_option("--gen", eval_args.gen, "Generated frame directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--ref", eval_args.ref, "Reference frame directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--target", eval_args.target, "Target image (default: last reference frame)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--frame-dist", eval_args.frame_dist, "l2 | one_minus_ssim | external_file");
  eval_cmd->add_option("--gen-csv", eval_args.gen_csv, "Generated distances CSV (external_file)");
  eval_cmd->add_option("--ref-csv", eval_args.ref_csv, "Reference distances CSV (external_file)");
  eval_cmd->add_option("--levels", eval_args.levels, "GLCM gray levels")->check(CLI::Range(2, 256));
  eval_cmd->add_option("-o,--output", eval_args.output, "Report JSON")->required();

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the live simulation over HTTP and websocket");
  serve_cmd->add_option("--painting", serve_args.painting, "Painting JSON")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--port", serve_args.port, "TCP port (0 = any free port)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--config", serve_args.config, "Config file or key=val override (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("UsageError", e.what());
    return kUsageError;
  }

  try {
    if (*fit_cmd) return run_fit(fit_args);
    if (*render_cmd) return run_render(render_args);
    if (*anim_cmd) return run_animate(anim_args);
    if (*sim_cmd) return run_simulate(sim_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*serve_cmd) return run_serve(serve_args);
  } catch (const UsageError& e) {
    report_error("UsageError", e.what());
    return kUsageError;
  } catch (const Error& e) {
    report_error(to_string(e.kind()), e.what());
    return kRuntimeError;
  } catch (const std::exception& e) {
    report_error("Internal", e.what());
    return kRuntimeError;
  }
  return kUsageError;
}
