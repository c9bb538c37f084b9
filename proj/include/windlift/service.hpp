#pragma once

// Message-driven simulation session. Every client message is answered with
// either a state frame or an error; mutations are recorded in a command log
// that replays to the identical frame stream.

#include <windlift/io.hpp>
#include <windlift/simulation.hpp>

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace windlift {

struct ServiceOptions {
  std::size_t stride = 1;             // default subsampling of broadcast positions
  bool reference_mode = false;        // zero wall-clock stats so frames are reproducible
  int max_steps_per_message = 10000;
  std::size_t max_message_bytes = 1 << 20;
};

class SimulationService {
 public:
  using json = nlohmann::json;

  SimulationService(std::shared_ptr<const NeuralBasis> basis, io::SceneSpec scene_spec, ServiceOptions options = {})
      : basis_(std::move(basis)), options_(options) {
    if (options_.stride == 0) options_.stride = 1;
    reset(std::move(scene_spec));
  }

  /// Parse and dispatch a text message. Never throws.
  json handle_text(std::string_view text) {
    if (text.size() > options_.max_message_bytes) return error("message_too_large", "message exceeds size limit");
    json msg;
    try {
      msg = json::parse(text);
    } catch (const std::exception& e) {
      return error("parse_error", e.what());
    }
    return handle(msg);
  }

  /// Dispatch a parsed message. Never throws.
  json handle(const json& msg) {
    try {
      if (!msg.is_object()) return error("invalid_message", "message must be a JSON object");
      const auto it = msg.find("type");
      if (it == msg.end() || !it->is_string()) return error("invalid_message", "message needs a string \"type\"");
      const std::string type = it->get<std::string>();
      if (type == "init") return on_init(msg);
      if (type == "step") return on_step(msg);
      if (type == "set_alpha") return on_set_alpha(msg);
      if (type == "edit_cut") return on_edit_cut(msg);
      if (type == "append_cut_vertex") return on_append_vertex(msg);
      if (type == "poke") return on_poke(msg);
      if (type == "pause" || type == "resume") {
        io::detail::check_keys(msg, {"type"}, type);
        paused_ = type == "pause";
        log(msg);
        return frame(options_.stride, {});
      }
      if (type == "query_state") {
        io::detail::check_keys(msg, {"type", "stride"}, type);
        const auto stride = io::detail::integer_or(msg, "stride", static_cast<std::int64_t>(options_.stride), type);
        if (stride < 1) return error("invalid_message", "stride must be at least 1");
        return frame(static_cast<std::size_t>(stride), {});
      }
      return error("unknown_type", "unknown message type \"" + type + "\"");
    } catch (const io::FormatError& e) {
      return error("invalid_message", e.what());
    } catch (const std::exception& e) {
      return error("internal", e.what());
    }
  }

  /// One autonomous step of the simulation loop; null when paused.
  json tick() {
    if (paused_) return nullptr;
    return handle({{"type", "step"}, {"n", 1}});
  }

  bool paused() const { return paused_; }
  std::uint64_t frame_id() const { return frame_id_; }
  std::uint64_t step_count() const { return steps_; }
  const ReducedState& state() const { return state_; }
  const ReducedSimulator& simulator() const { return *sim_; }
  const std::vector<json>& command_log() const { return log_; }

 private:
  struct ActivePoke {
    PokeForce force;
    int remaining = 0;
  };

  struct Stats {
    double step_ms = 0.0;
    int solver_iters = 0;
  };

  void reset(io::SceneSpec scene_spec) {
    auto sim = std::make_unique<ReducedSimulator>(basis_, io::build_scene(scene_spec));
    spec_ = std::move(scene_spec);
    sim_ = std::move(sim);
    state_ = sim_->rest_state();
    pokes_.clear();
  }

  void log(const json& msg) { log_.push_back({{"step", steps_}, {"msg", msg}}); }

  json error(const std::string& code, const std::string& message) const {
    return {{"type", "error"}, {"code", code}, {"message", message}};
  }

  json frame(std::size_t stride, const Stats& stats) {
    json positions = json::array();
    for (const Eigen::Vector3d& p : sim_->cubature_positions(state_, stride)) {
      positions.push_back(p.x());
      positions.push_back(p.y());
      positions.push_back(p.z());
    }
    json cuts = json::array();
    for (const Polyline& line : sim_->scene().curve.polylines()) cuts.push_back(io::to_json(line));
    json z = json::array();
    for (Eigen::Index i = 0; i < state_.z.size(); ++i) z.push_back(state_.z[i]);
    return {{"type", "state"},
            {"frame_id", ++frame_id_},
            {"step", steps_},
            {"alpha", sim_->scene().curve.alpha()},
            {"stride", stride},
            {"positions", std::move(positions)},
            {"z", std::move(z)},
            {"cuts", std::move(cuts)},
            {"stats", {{"step_ms", options_.reference_mode ? 0.0 : stats.step_ms}, {"solver_iters", stats.solver_iters}}},
            {"paused", paused_}};
  }

  json on_init(const json& msg) {
    io::detail::check_keys(msg, {"type", "scene"}, "init");
    if (const auto it = msg.find("scene"); it != msg.end()) {
      io::SceneSpec scene_spec;
      try {
        scene_spec = io::scene_from_json(*it);
        reset(scene_spec);
      } catch (const std::invalid_argument& e) {
        return error("invalid_scene", e.what());
      }
    } else {
      state_ = sim_->rest_state();
      pokes_.clear();
    }
    log(msg);
    return frame(options_.stride, {});
  }

  json on_step(const json& msg) {
    io::detail::check_keys(msg, {"type", "n"}, "step");
    const auto n = io::detail::integer_or(msg, "n", 1, "step");
    if (n < 1 || n > options_.max_steps_per_message) {
      return error("invalid_message", "step n must lie in [1, " + std::to_string(options_.max_steps_per_message) + "]");
    }
    log(msg);
    Stats stats;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::int64_t s = 0; s < n; ++s) {
      std::vector<PokeForce> active;
      for (const ActivePoke& p : pokes_) active.push_back(p.force);
      const StepReport r = sim_->step(state_, active);
      if (!r.ok()) {
        paused_ = true;
        return error("solver_failure", r.failure + "; simulation paused");
      }
      state_ = r.state;
      ++steps_;
      stats.solver_iters += r.iterations;
      for (ActivePoke& p : pokes_) --p.remaining;
      std::erase_if(pokes_, [](const ActivePoke& p) { return p.remaining <= 0; });
    }
    stats.step_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / static_cast<double>(n);
    return frame(options_.stride, stats);
  }

  json on_set_alpha(const json& msg) {
    io::detail::check_keys(msg, {"type", "alpha"}, "set_alpha");
    const double a = io::detail::number(io::detail::member(msg, "alpha", "set_alpha"), "set_alpha.alpha");
    if (!(a >= 0.0 && a <= 1.0)) return error("invalid_message", "alpha must lie in [0, 1]");
    sim_->set_alpha(a);
    state_.alpha = a;
    log(msg);
    return frame(options_.stride, {});
  }

  json apply_cut(std::vector<Polyline> lines, const json& msg) {
    const CutCurve& old = sim_->scene().curve;
    CutCurve curve;
    try {
      curve = CutCurve(std::move(lines), old.alpha(), old.mode());
    } catch (const std::exception& e) {
      return error("invalid_cut", e.what());
    }
    sim_->set_cut(curve);
    log(msg);
    return frame(options_.stride, {});
  }

  std::size_t polyline_id(const json& msg, const std::string& where, std::size_t limit) const {
    const auto id = io::detail::integer(io::detail::member(msg, "polyline_id", where), where + ".polyline_id");
    if (id < 0 || static_cast<std::size_t>(id) > limit) {
      throw io::FormatError(where + ".polyline_id: out of range [0, " + std::to_string(limit) + "]");
    }
    return static_cast<std::size_t>(id);
  }

  // polyline_id == count appends a new polyline; an empty vertex list removes one.
  json on_edit_cut(const json& msg) {
    io::detail::check_keys(msg, {"type", "polyline_id", "vertices"}, "edit_cut");
    std::vector<Polyline> lines = sim_->scene().curve.polylines();
    const std::size_t id = polyline_id(msg, "edit_cut", lines.size());
    Polyline verts = io::polyline_from_json(io::detail::member(msg, "vertices", "edit_cut"), "edit_cut.vertices");
    if (verts.empty()) {
      if (id == lines.size()) return error("invalid_cut", "no polyline to remove");
      lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(id));
    } else if (id == lines.size()) {
      lines.push_back(std::move(verts));
    } else {
      lines[id] = std::move(verts);
    }
    return apply_cut(std::move(lines), msg);
  }

  json on_append_vertex(const json& msg) {
    io::detail::check_keys(msg, {"type", "polyline_id", "vertex"}, "append_cut_vertex");
    std::vector<Polyline> lines = sim_->scene().curve.polylines();
    if (lines.empty()) return error("invalid_cut", "no polyline to extend; use edit_cut to create one");
    const std::size_t id = polyline_id(msg, "append_cut_vertex", lines.size() - 1);
    lines[id].push_back(io::point_from_json(io::detail::member(msg, "vertex", "append_cut_vertex"), "append_cut_vertex.vertex"));
    return apply_cut(std::move(lines), msg);
  }

  json on_poke(const json& msg) {
    const std::string w = "poke";
    io::detail::check_keys(msg, {"type", "location", "force", "radius", "steps"}, w);
    ActivePoke p;
    p.force.location = io::point_from_json(io::detail::member(msg, "location", w), w + ".location");
    p.force.force = io::vec3_from_json(io::detail::member(msg, "force", w), w + ".force");
    p.force.radius = io::detail::number_or(msg, "radius", 0.1, w);
    const auto steps = io::detail::integer_or(msg, "steps", 1, w);
    if (!(p.force.radius > 0.0)) return error("invalid_message", "poke radius must be positive");
    if (steps < 1 || steps > options_.max_steps_per_message) return error("invalid_message", "poke steps out of range");
    p.remaining = static_cast<int>(steps);
    pokes_.push_back(p);
    log(msg);
    return frame(options_.stride, {});
  }

  std::shared_ptr<const NeuralBasis> basis_;
  ServiceOptions options_;
  io::SceneSpec spec_;
  std::unique_ptr<ReducedSimulator> sim_;
  ReducedState state_;
  std::vector<ActivePoke> pokes_;
  std::vector<json> log_;
  std::uint64_t frame_id_ = 0;
  std::uint64_t steps_ = 0;
  bool paused_ = false;
};

/// Feed the messages of a command log to a fresh service and collect replies.
inline std::vector<nlohmann::json> replay(SimulationService& service, const std::vector<nlohmann::json>& log) {
  std::vector<nlohmann::json> out;
  for (const auto& entry : log) out.push_back(service.handle(entry.at("msg")));
  return out;
}

}  // namespace windlift
