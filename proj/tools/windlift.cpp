// windlift command-line tool: training, simulation, winding rasters,
// evaluation and the interactive WebSocket service.

#include "png_writer.hpp"

#include <windlift/io.hpp>
#include <windlift/server.hpp>
#include <windlift/service.hpp>
#include <windlift/synthetic.hpp>
#include <windlift/training.hpp>

#include <CLI/CLI.hpp>
#include <boost/asio/signal_set.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

using namespace windlift;
using nlohmann::json;

enum ExitCode { kOk = 0, kInvalidConfig = 1, kRuntimeFailure = 2 };

/// Raised for user-facing configuration problems not covered by FormatError.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

int report(ExitCode code, const std::string& message) {
  const char* name = code == kInvalidConfig ? "invalid_config" : "runtime_failure";
  std::cerr << json{{"error", {{"code", name}, {"message", message}}}}.dump() << std::endl;
  return code;
}

TrainConfig load_train_config(const std::string& path) {
  return path.empty() ? TrainConfig{} : io::train_config_from_json(io::read_json_file(path));
}

TrainCallback progress(bool quiet, int steps) {
  if (quiet) return {};
  const int every = std::max(1, steps / 20);
  return [every, steps](int step, double loss) {
    if (step % every == 0 || step + 1 == steps) std::cerr << "step " << step << " loss " << loss << '\n';
  };
}

json training_summary(const TrainConfig& cfg, const TrainingResult& r) {
  return {{"config", io::to_json(cfg)}, {"final_loss", r.losses.empty() ? 0.0 : r.losses.back()}};
}

struct TrainFreeArgs {
  std::string scene, config, out;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int train_free(const TrainFreeArgs& a) {
  const Scene scene = io::build_scene(io::load_scene(a.scene));
  TrainConfig cfg = load_train_config(a.config);
  cfg.mode = TrainMode::data_free;
  if (a.steps) cfg.steps = *a.steps;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  const TrainingResult r = train_data_free(scene, cfg, progress(a.quiet, cfg.steps));
  io::save_checkpoint(a.out, r.basis, training_summary(cfg, r));
  return kOk;
}

struct TrainDataArgs {
  std::string dataset, config, out;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  bool unlifted = false;
  bool quiet = false;
};

int train_data(const TrainDataArgs& a) {
  const SnapshotDataset ds = io::load_dataset(a.dataset);
  TrainConfig cfg = load_train_config(a.config);
  cfg.mode = TrainMode::data_driven;
  if (a.steps) cfg.steps = *a.steps;
  if (a.seed) cfg.seed = *a.seed;
  if (a.unlifted) cfg.network.height_input = false;
  cfg.validate();
  const TrainingResult r = train_data_driven(ds, cfg, progress(a.quiet, cfg.steps));
  io::save_checkpoint(a.out, r.basis, training_summary(cfg, r));
  return kOk;
}

struct SimulateArgs {
  std::string scene, checkpoint, out, commands;
  int steps = 120;
  std::size_t stride = 1;
  std::optional<double> alpha;
};

// Log entries {"step": j, "msg": {...}} are applied before step j; step and
// query messages are ignored because the tool advances time itself.
std::multimap<std::uint64_t, json> load_commands(const std::string& path) {
  std::multimap<std::uint64_t, json> out;
  if (path.empty()) return out;
  std::ifstream in(path);
  if (!in) throw io::FormatError("cannot open " + path);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json e;
    try {
      e = json::parse(line);
    } catch (const json::parse_error& err) {
      throw io::FormatError(path + ":" + std::to_string(n) + ": " + err.what());
    }
    if (!e.is_object() || !e.contains("step") || !e["step"].is_number_unsigned() || !e.contains("msg")) {
      throw io::FormatError(path + ":" + std::to_string(n) + ": expected {\"step\": n, \"msg\": {...}}");
    }
    const std::string type = e["msg"].value("type", "");
    if (type == "step" || type == "query_state") continue;
    out.emplace(e["step"].get<std::uint64_t>(), e["msg"]);
  }
  return out;
}

int simulate(const SimulateArgs& a) {
  io::SceneSpec scene_spec = io::load_scene(a.scene);
  if (a.alpha) scene_spec.curve = scene_spec.curve.with_alpha(*a.alpha);
  auto basis = std::make_shared<const NeuralBasis>(io::load_checkpoint(a.checkpoint));
  const auto commands = load_commands(a.commands);
  if (a.steps < 0) throw ConfigError("--steps must be non-negative");
  SimulationService svc(basis, scene_spec, {.stride = a.stride, .reference_mode = true});

  json frames = json::array();
  auto record = [&](const json& f) {
    frames.push_back({{"step", f["step"]}, {"alpha", f["alpha"]}, {"z", f["z"]}, {"positions", f["positions"]}});
  };
  auto write = [&] {
    io::write_json_file(a.out, {{"format", 1},
                                {"h", svc.simulator().scene().sim.h},
                                {"k", basis->k()},
                                {"stride", a.stride},
                                {"frames", frames}});
  };
  record(svc.handle({{"type", "query_state"}}));
  for (int j = 0; j < a.steps; ++j) {
    const auto [lo, hi] = commands.equal_range(static_cast<std::uint64_t>(j));
    for (auto it = lo; it != hi; ++it) {
      const json r = svc.handle(it->second);
      if (r["type"] == "error") throw ConfigError("command at step " + std::to_string(j) + ": " + r["message"].get<std::string>());
    }
    const json f = svc.handle({{"type", "step"}, {"n", 1}});
    if (f["type"] == "error") {
      write();
      return report(kRuntimeFailure, "step " + std::to_string(j) + ": " + f["message"].get<std::string>());
    }
    record(f);
  }
  write();
  return kOk;
}

struct FieldArgs {
  std::string scene, out, png;
  std::optional<double> alpha;
  int grid = 64;
  std::vector<double> bounds;
};

int field(const FieldArgs& a) {
  const io::SceneSpec scene_spec = io::load_scene(a.scene);
  if (a.grid <= 0) throw ConfigError("--grid must be positive");
  Scene scene;
  scene.domain = scene_spec.domain;
  scene.tip_radius = scene_spec.tip_radius;
  const CutCurve curve = a.alpha ? scene_spec.curve.with_alpha(*a.alpha) : scene_spec.curve;
  auto [lo, hi] = scene_spec.domain.bounds();
  if (!a.bounds.empty()) {
    if (a.bounds.size() != 4 || !(a.bounds[1] > a.bounds[0]) || !(a.bounds[3] > a.bounds[2])) {
      throw ConfigError("--bounds expects xmin xmax ymin ymax with min < max");
    }
    lo = {a.bounds[0], a.bounds[2]};
    hi = {a.bounds[1], a.bounds[3]};
  }
  const WindingField f(curve, scene.effective_tip_radius());
  const io::FieldRaster r = io::rasterize_winding(f, lo, hi, a.grid);
  const std::string csv = io::raster_to_csv(r);
  if (a.out.empty() || a.out == "-") {
    std::cout << csv;
  } else {
    io::write_text_file(a.out, csv);
  }
  if (!a.png.empty()) tools::write_raster_png(a.png, r);
  return kOk;
}

struct ServeArgs {
  std::string scene, checkpoint, host = "127.0.0.1", log;
  unsigned short port = 8765;
  std::size_t stride = 4;
  double broadcast_hz = 30.0;
  bool paused = false;
  bool reference = false;
};

int serve(const ServeArgs& a) {
  auto basis = std::make_shared<const NeuralBasis>(io::load_checkpoint(a.checkpoint));
  SimulationService svc(basis, io::load_scene(a.scene), {.stride = a.stride, .reference_mode = a.reference});
  if (a.paused) svc.handle({{"type", "pause"}});
  WebSocketServer server(svc, {.address = a.host, .port = a.port, .autoplay = true, .broadcast_hz = a.broadcast_hz});
  boost::asio::signal_set signals(server.io_context(), SIGINT, SIGTERM);
  signals.async_wait([&](const boost::system::error_code& ec, int) {
    if (!ec) server.stop();
  });
  std::cerr << json{{"listening", {{"host", a.host}, {"port", server.port()}}}}.dump() << std::endl;
  server.run();
  if (!a.log.empty()) {
    std::string text;
    for (const json& e : svc.command_log()) text += e.dump() + "\n";
    io::write_text_file(a.log, text);
  }
  return kOk;
}

int eval(const std::string& checkpoint, const std::string& dataset) {
  const NeuralBasis net = io::load_checkpoint(checkpoint);
  const SnapshotDataset ds = io::load_dataset(dataset);
  const ReconstructionReport r = reconstruction_error(net, ds);
  std::size_t points = 0;
  for (const Snapshot& s : ds.snapshots) points += s.points.size();
  std::cout << json{{"mse", r.mse},
                    {"max_condition", std::isfinite(r.max_condition) ? json(r.max_condition) : json(nullptr)},
                    {"rank_deficient", r.rank_deficient},
                    {"snapshots", ds.snapshots.size()},
                    {"points", points}}
                   .dump()
            << std::endl;
  return kOk;
}

int synth_data(const std::string& out, const RigidSeparationParams& p) {
  if (p.snapshots <= 0 || p.points_per_snapshot <= 0) throw ConfigError("snapshot and point counts must be positive");
  io::save_dataset(out, make_rigid_separation_dataset(p));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cut-aware reduced simulation of thin sheets"};
  app.require_subcommand(1);

  TrainFreeArgs tf;
  auto* c_tf = app.add_subcommand("train-free", "Train a basis from elastic energy alone");
  c_tf->add_option("--scene", tf.scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  c_tf->add_option("--config", tf.config, "Training config JSON")->check(CLI::ExistingFile);
  c_tf->add_option("--out", tf.out, "Output checkpoint")->required();
  c_tf->add_option("--steps", tf.steps, "Override step count");
  c_tf->add_option("--seed", tf.seed, "Override seed");
  c_tf->add_flag("--quiet", tf.quiet, "No progress output");

  TrainDataArgs td;
  auto* c_td = app.add_subcommand("train-data", "Train a basis from displacement snapshots");
  c_td->add_option("--dataset", td.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_td->add_option("--config", td.config, "Training config JSON")->check(CLI::ExistingFile);
  c_td->add_option("--out", td.out, "Output checkpoint")->required();
  c_td->add_option("--steps", td.steps, "Override step count");
  c_td->add_option("--seed", td.seed, "Override seed");
  c_td->add_flag("--unlifted", td.unlifted, "Drop the height input (ablation)");
  c_td->add_flag("--quiet", td.quiet, "No progress output");

  SimulateArgs sa;
  auto* c_sim = app.add_subcommand("simulate", "Run the reduced simulation and write a trajectory");
  c_sim->add_option("--scene", sa.scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--checkpoint", sa.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--out", sa.out, "Trajectory JSON")->required();
  c_sim->add_option("--steps", sa.steps, "Number of steps")->capture_default_str();
  c_sim->add_option("--stride", sa.stride, "Keep every n-th cubature point")->capture_default_str()->check(CLI::PositiveNumber);
  c_sim->add_option("--alpha", sa.alpha, "Override the cut fraction")->check(CLI::Range(0.0, 1.0));
  c_sim->add_option("--commands", sa.commands, "Command log (JSON lines) to replay")->check(CLI::ExistingFile);

  FieldArgs fa;
  auto* c_field = app.add_subcommand("field", "Rasterize the smoothed winding number");
  c_field->add_option("--scene", fa.scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  c_field->add_option("--alpha", fa.alpha, "Override the cut fraction")->check(CLI::Range(0.0, 1.0));
  c_field->add_option("--grid", fa.grid, "Cells per side")->capture_default_str();
  c_field->add_option("--bounds", fa.bounds, "xmin xmax ymin ymax (default: domain bounds)")->expected(4);
  c_field->add_option("--out", fa.out, "CSV output (default: stdout)");
  c_field->add_option("--png", fa.png, "Grayscale PNG over [-0.5, 1.5]");

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "Serve an interactive session over WebSocket");
  c_serve->add_option("--scene", sv.scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  c_serve->add_option("--checkpoint", sv.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  c_serve->add_option("--host", sv.host, "Bind address")->capture_default_str();
  c_serve->add_option("--port", sv.port, "Port (0 picks one)")->capture_default_str();
  c_serve->add_option("--stride", sv.stride, "Default position stride")->capture_default_str()->check(CLI::PositiveNumber);
  c_serve->add_option("--broadcast-hz", sv.broadcast_hz, "Maximum broadcast rate")->capture_default_str();
  c_serve->add_option("--command-log", sv.log, "Write the command log here on shutdown");
  c_serve->add_flag("--paused", sv.paused, "Start paused");
  c_serve->add_flag("--reference", sv.reference, "Zero timing stats for reproducible frames");

  std::string ev_ckpt, ev_data;
  auto* c_eval = app.add_subcommand("eval", "Print the reconstruction error of a dataset as JSON");
  c_eval->add_option("--checkpoint", ev_ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--dataset", ev_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);

  std::string sd_out;
  RigidSeparationParams sd;
  auto* c_synth = app.add_subcommand("synth-data", "Write the synthetic rigid-separation dataset");
  c_synth->add_option("--out", sd_out, "Dataset directory")->required();
  c_synth->add_option("--snapshots", sd.snapshots, "Snapshot count")->capture_default_str();
  c_synth->add_option("--points", sd.points_per_snapshot, "Points per snapshot")->capture_default_str();
  c_synth->add_option("--seed", sd.seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report(kInvalidConfig, e.what());
  }

  try {
    if (*c_tf) return train_free(tf);
    if (*c_td) return train_data(td);
    if (*c_sim) return simulate(sa);
    if (*c_field) return field(fa);
    if (*c_serve) return serve(sv);
    if (*c_eval) return eval(ev_ckpt, ev_data);
    if (*c_synth) return synth_data(sd_out, sd);
  } catch (const std::invalid_argument& e) {
    return report(kInvalidConfig, e.what());
  } catch (const std::domain_error& e) {
    return report(kInvalidConfig, e.what());
  } catch (const std::exception& e) {
    return report(kRuntimeFailure, e.what());
  }
  return kOk;
}
