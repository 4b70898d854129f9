// Command-line front end: synth, extract, build, export, eval, run.

#include "odrgen/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace fs = std::filesystem;
using namespace odrgen;

int main(int argc, char** argv) {
  CLI::App app{"Offline OpenDRIVE road reconstruction from LiDAR lane-marking point clouds"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  bool quiet = false;
  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for every randomized stage");
  app.add_option("--threads", threads, "Worker thread cap (default: config value)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("-q,--quiet", quiet, "Suppress stage logging");

  std::string scene_path, recording, markings, planes, model, odr_a, odr_b;
  std::optional<std::uint64_t> perturb;
  bool binary = false;
  double step = 0;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic recording and ground-truth OpenDRIVE");
  synth->add_option("--scene", scene_path, "Scene description (INI)")->required()->check(CLI::ExistingFile);
  synth->add_option("--perturb", perturb, "Re-noise the recording with this seed");
  synth->add_flag("--binary", binary, "Write frames as packed float32");

  auto* extract = app.add_subcommand("extract", "Recording -> world-frame marking cloud");
  extract->add_option("recording", recording, "Recording directory")->required();

  auto* build = app.add_subcommand("build", "Marking cloud -> road model and relation graph");
  build->add_option("markings", markings, "markings.csv from extract")->required()->check(CLI::ExistingFile);
  build->add_option("--planes", planes, "planes.csv from extract");

  auto* exp = app.add_subcommand("export", "Road model -> OpenDRIVE");
  exp->add_option("model", model, "road_model.json from build")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Map distance between two OpenDRIVE files");
  eval->add_option("a", odr_a, "Evaluated OpenDRIVE file")->required()->check(CLI::ExistingFile);
  eval->add_option("b", odr_b, "Reference OpenDRIVE file")->required()->check(CLI::ExistingFile);
  eval->add_option("--step", step, "Sampling step in meters (default: config value)");

  auto* run = app.add_subcommand("run", "extract -> build -> export -> continuity check");
  run->add_option("recording", recording, "Recording directory")->required();

  for (auto* sub : {synth, extract, build, exp, eval, run}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ErrorKind::Config);
  }

  Logger log;
  if (quiet) log.os = nullptr;
  try {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : config::load(config_path);
    if (seed) cfg.apply_seed(*seed);
    if (threads > 0) cfg.threads = threads;
    cfg.validate();
    const fs::path out(out_dir);

    if (*synth) {
      SceneSpec spec = synth::load_scene_spec(scene_path);
      if (seed) spec.seed = *seed;
      const auto scene = pipeline::cmd_synth(spec, out, perturb, binary ? PointFormat::Binary : PointFormat::Csv);
      std::size_t pts = 0;
      for (const auto& f : scene.recording.frames) pts += f.cloud.size();
      log("synth", std::to_string(scene.recording.frames.size()) + " frames, " + std::to_string(pts) + " points, " +
                       format_double(scene.truth.doc.length()) + " m road");
    } else if (*extract) {
      pipeline::cmd_extract(recording, out, cfg, log);
    } else if (*build) {
      pipeline::cmd_build(markings, planes, out, cfg, log);
    } else if (*exp) {
      pipeline::cmd_export(model, out, cfg, log);
    } else if (*eval) {
      fs::create_directories(out);
      const auto r = pipeline::cmd_eval(odr_a, odr_b, step > 0 ? step : cfg.eval_step, out / "eval.json", cfg.threads);
      std::cout << evaluation::format_table(r);
    } else if (*run) {
      const auto rep = pipeline::cmd_run(recording, out, cfg, log);
      log("run", "done in " + format_double(std::round(rep.seconds * 100) / 100) + " s");
    }
  } catch (const TopologyError& e) {
    std::cerr << "error: " << e.what();
    if (!e.line_ids().empty()) {
      std::cerr << " [lines:";
      for (auto id : e.line_ids()) std::cerr << ' ' << id;
      std::cerr << ']';
    }
    std::cerr << '\n';
    return exit_code(e.kind());
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
