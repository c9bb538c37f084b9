#pragma once

// File formats: scene and training configs (JSON), checkpoints, snapshot
// datasets, winding rasters and trajectories.

#include <windlift/cubature.hpp>
#include <windlift/geometry.hpp>
#include <windlift/neural.hpp>
#include <windlift/scene.hpp>
#include <windlift/training.hpp>

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace windlift::io {

using json = nlohmann::json;

/// Malformed or semantically invalid input file.
class FormatError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kSceneFormat = 1;
inline constexpr int kCheckpointFormat = 1;
inline constexpr int kDatasetFormat = 1;
inline constexpr char kCheckpointMagic[4] = {'W', 'L', 'C', 'K'};

// ---------------------------------------------------------------------------
// Checked JSON access

namespace detail {

inline void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + ": expected an object");
}

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  require_object(j, where);
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (std::string_view a : allowed) ok = ok || key == a;
    if (!ok) throw FormatError(where + ": unknown key \"" + key + "\"");
  }
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw FormatError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw FormatError(where + ": expected a finite number");
  return v;
}

inline double number_or(const json& j, std::string_view key, double fallback, const std::string& where) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : number(*it, where + "." + std::string(key));
}

inline std::int64_t integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw FormatError(where + ": expected an integer");
  return j.get<std::int64_t>();
}

inline std::int64_t integer_or(const json& j, std::string_view key, std::int64_t fallback, const std::string& where) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : integer(*it, where + "." + std::string(key));
}

inline std::string string_or(const json& j, std::string_view key, std::string fallback, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_string()) throw FormatError(where + "." + std::string(key) + ": expected a string");
  return it->get<std::string>();
}

inline bool bool_or(const json& j, std::string_view key, bool fallback, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) throw FormatError(where + "." + std::string(key) + ": expected a boolean");
  return it->get<bool>();
}

inline const json& member(const json& j, std::string_view key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) throw FormatError(where + ": missing \"" + std::string(key) + "\"");
  return *it;
}

}  // namespace detail

inline Point2 point_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw FormatError(where + ": expected [x, y]");
  return {detail::number(j[0], where + "[0]"), detail::number(j[1], where + "[1]")};
}

inline Eigen::Vector3d vec3_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw FormatError(where + ": expected [x, y, z]");
  return {detail::number(j[0], where + "[0]"), detail::number(j[1], where + "[1]"), detail::number(j[2], where + "[2]")};
}

inline Polyline polyline_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw FormatError(where + ": expected an array of points");
  Polyline out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(point_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline json to_json(const Point2& p) { return json::array({p.x(), p.y()}); }
inline json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
inline json to_json(const Polyline& line) {
  json a = json::array();
  for (const Point2& p : line) a.push_back(to_json(p));
  return a;
}

// ---------------------------------------------------------------------------
// Cuts

inline std::string to_string(AlphaMode m) { return m == AlphaMode::sequential ? "sequential" : "per_polyline"; }

inline AlphaMode alpha_mode_from_string(const std::string& s, const std::string& where) {
  if (s == "sequential") return AlphaMode::sequential;
  if (s == "per_polyline") return AlphaMode::per_polyline;
  throw FormatError(where + ": unknown alpha mode \"" + s + "\"");
}

inline json to_json(const CutCurve& c) {
  json lines = json::array();
  for (const Polyline& l : c.polylines()) lines.push_back(to_json(l));
  return {{"polylines", lines}, {"alpha", c.alpha()}, {"mode", to_string(c.mode())}};
}

inline CutCurve cut_from_json(const json& j, const std::string& where, double default_alpha = 1.0) {
  detail::check_keys(j, {"polylines", "alpha", "mode", "tip_radius"}, where);
  const json& lines = detail::member(j, "polylines", where);
  if (!lines.is_array()) throw FormatError(where + ".polylines: expected an array");
  std::vector<Polyline> polylines;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    polylines.push_back(polyline_from_json(lines[i], where + ".polylines[" + std::to_string(i) + "]"));
  }
  const double alpha = detail::number_or(j, "alpha", default_alpha, where);
  const AlphaMode mode = alpha_mode_from_string(detail::string_or(j, "mode", "sequential", where), where + ".mode");
  try {
    return CutCurve(std::move(polylines), alpha, mode);
  } catch (const std::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Scene

struct PinRegion {
  enum class Kind { circle, rect, points };
  Kind kind = Kind::rect;
  Point2 center = Point2::Zero();
  double radius = 0.0;
  Point2 min = Point2::Zero();
  Point2 max = Point2::Zero();
  std::vector<Point2> points;
};

/// The scene document as written on disk; `build_scene` turns it into a Scene.
struct SceneSpec {
  Polygon domain;
  Material material;
  Eigen::Vector3d gravity = Eigen::Vector3d::Zero();
  std::vector<PinRegion> pinned;
  double pin_spacing = 0.0;  // <= 0: domain diameter / 100
  CutCurve curve;
  double tip_radius = 0.0;
  std::size_t cubature_n = 2000;
  std::uint64_t cubature_seed = 0;
  double pin_weight = 1e3;
  SimSettings sim;
  std::vector<CutCurve> training_cuts;
};

inline std::vector<Point2> pin_lattice(const PinRegion& r, const Polygon& domain, double spacing) {
  if (r.kind == PinRegion::Kind::points) return r.points;
  Point2 lo, hi;
  if (r.kind == PinRegion::Kind::circle) {
    lo = r.center - Point2::Constant(r.radius);
    hi = r.center + Point2::Constant(r.radius);
  } else {
    lo = r.min;
    hi = r.max;
  }
  const auto nx = static_cast<long>(std::ceil((hi.x() - lo.x()) / spacing));
  const auto ny = static_cast<long>(std::ceil((hi.y() - lo.y()) / spacing));
  std::vector<Point2> out;
  for (long j = 0; j < std::max(1L, ny); ++j) {
    for (long i = 0; i < std::max(1L, nx); ++i) {
      const Point2 p(std::min(hi.x(), lo.x() + (i + 0.5) * spacing), std::min(hi.y(), lo.y() + (j + 0.5) * spacing));
      const bool inside = r.kind == PinRegion::Kind::circle ? (p - r.center).norm() <= r.radius : true;
      if (inside && domain.contains(p)) out.push_back(p);
    }
  }
  return out;
}

inline double effective_pin_spacing(const SceneSpec& s) {
  return s.pin_spacing > 0.0 ? s.pin_spacing : s.domain.diameter() / 100.0;
}

inline Scene build_scene(const SceneSpec& scene_spec) {
  Scene s;
  s.domain = scene_spec.domain;
  s.material = scene_spec.material;
  s.gravity = scene_spec.gravity;
  s.curve = scene_spec.curve;
  s.tip_radius = scene_spec.tip_radius;
  s.pin_weight = scene_spec.pin_weight;
  s.sim = scene_spec.sim;
  s.training_cuts = scene_spec.training_cuts;
  const double spacing = effective_pin_spacing(scene_spec);
  for (std::size_t i = 0; i < scene_spec.pinned.size(); ++i) {
    const std::vector<Point2> pts = pin_lattice(scene_spec.pinned[i], scene_spec.domain, spacing);
    if (pts.empty()) {
      throw FormatError("scene.pinned[" + std::to_string(i) + "]: region contains no sample inside the domain");
    }
    s.pinned.insert(s.pinned.end(), pts.begin(), pts.end());
  }
  s.cubature = sample_cubature(s.domain, scene_spec.cubature_n, scene_spec.cubature_seed);
  return s;
}

inline std::string to_string(InnerSolver s) { return s == InnerSolver::newton ? "newton" : "gradient_descent"; }

inline SceneSpec scene_from_json(const json& j) {
  const std::string w = "scene";
  detail::check_keys(j, {"format", "domain", "material", "gravity", "pinned", "pin_spacing", "cuts", "cubature", "sim",
                         "training_cuts"},
                     w);
  if (detail::integer(detail::member(j, "format", w), w + ".format") != kSceneFormat) {
    throw FormatError(w + ".format: unsupported version (expected 1)");
  }
  SceneSpec s;

  const json& dom = detail::member(j, "domain", w);
  detail::check_keys(dom, {"outer", "holes"}, w + ".domain");
  s.domain.outer = polyline_from_json(detail::member(dom, "outer", w + ".domain"), w + ".domain.outer");
  if (s.domain.outer.size() < 3) throw FormatError(w + ".domain.outer: needs at least 3 vertices");
  if (const auto it = dom.find("holes"); it != dom.end()) {
    if (!it->is_array()) throw FormatError(w + ".domain.holes: expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      s.domain.holes.push_back(polyline_from_json((*it)[i], w + ".domain.holes[" + std::to_string(i) + "]"));
    }
  }
  if (!(s.domain.area() > 0.0)) throw FormatError(w + ".domain: polygon has zero area");

  if (const auto it = j.find("material"); it != j.end()) {
    const std::string mw = w + ".material";
    detail::check_keys(*it, {"mu", "lambda", "density", "thickness"}, mw);
    s.material = {detail::number_or(*it, "mu", 1.0, mw), detail::number_or(*it, "lambda", 1.0, mw),
                  detail::number_or(*it, "density", 1.0, mw), detail::number_or(*it, "thickness", 1.0, mw)};
    try {
      s.material.validate();
    } catch (const std::invalid_argument& e) {
      throw FormatError(mw + ": " + e.what());
    }
  }
  if (const auto it = j.find("gravity"); it != j.end()) s.gravity = vec3_from_json(*it, w + ".gravity");

  if (const auto it = j.find("pinned"); it != j.end()) {
    if (!it->is_array()) throw FormatError(w + ".pinned: expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& r = (*it)[i];
      const std::string rw = w + ".pinned[" + std::to_string(i) + "]";
      detail::require_object(r, rw);
      const std::string type = detail::string_or(r, "type", "", rw);
      PinRegion region;
      if (type == "circle") {
        detail::check_keys(r, {"type", "center", "radius"}, rw);
        region.kind = PinRegion::Kind::circle;
        region.center = point_from_json(detail::member(r, "center", rw), rw + ".center");
        region.radius = detail::number(detail::member(r, "radius", rw), rw + ".radius");
        if (!(region.radius > 0.0)) throw FormatError(rw + ".radius: must be positive");
      } else if (type == "rect") {
        detail::check_keys(r, {"type", "min", "max"}, rw);
        region.kind = PinRegion::Kind::rect;
        region.min = point_from_json(detail::member(r, "min", rw), rw + ".min");
        region.max = point_from_json(detail::member(r, "max", rw), rw + ".max");
        if (!(region.max.array() >= region.min.array()).all()) throw FormatError(rw + ": min must not exceed max");
      } else if (type == "points") {
        detail::check_keys(r, {"type", "points"}, rw);
        region.kind = PinRegion::Kind::points;
        region.points = polyline_from_json(detail::member(r, "points", rw), rw + ".points");
      } else {
        throw FormatError(rw + ".type: expected \"circle\", \"rect\" or \"points\"");
      }
      s.pinned.push_back(std::move(region));
    }
  }
  s.pin_spacing = detail::number_or(j, "pin_spacing", 0.0, w);

  if (const auto it = j.find("cuts"); it != j.end()) {
    s.curve = cut_from_json(*it, w + ".cuts");
    s.tip_radius = detail::number_or(*it, "tip_radius", 0.0, w + ".cuts");
  }
  if (const auto it = j.find("training_cuts"); it != j.end()) {
    if (!it->is_array()) throw FormatError(w + ".training_cuts: expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      s.training_cuts.push_back(cut_from_json((*it)[i], w + ".training_cuts[" + std::to_string(i) + "]"));
    }
  }

  if (const auto it = j.find("cubature"); it != j.end()) {
    const std::string cw = w + ".cubature";
    detail::check_keys(*it, {"n", "seed"}, cw);
    const std::int64_t n = detail::integer_or(*it, "n", 2000, cw);
    if (n <= 0) throw FormatError(cw + ".n: must be positive");
    const std::int64_t seed = detail::integer_or(*it, "seed", 0, cw);
    if (seed < 0) throw FormatError(cw + ".seed: must be non-negative");
    s.cubature_n = static_cast<std::size_t>(n);
    s.cubature_seed = static_cast<std::uint64_t>(seed);
  }

  if (const auto it = j.find("sim"); it != j.end()) {
    const std::string sw = w + ".sim";
    detail::check_keys(*it, {"h", "tol", "max_iters", "pin_weight", "stiffness_scale", "solver"}, sw);
    s.sim.h = detail::number_or(*it, "h", s.sim.h, sw);
    s.sim.tol = detail::number_or(*it, "tol", s.sim.tol, sw);
    s.sim.max_iters = static_cast<int>(detail::integer_or(*it, "max_iters", s.sim.max_iters, sw));
    s.sim.stiffness_scale = detail::number_or(*it, "stiffness_scale", s.sim.stiffness_scale, sw);
    s.pin_weight = detail::number_or(*it, "pin_weight", s.pin_weight, sw);
    const std::string solver = detail::string_or(*it, "solver", "gradient_descent", sw);
    if (solver == "newton") {
      s.sim.solver = InnerSolver::newton;
    } else if (solver != "gradient_descent") {
      throw FormatError(sw + ".solver: expected \"gradient_descent\" or \"newton\"");
    }
    if (!(s.sim.h > 0.0)) throw FormatError(sw + ".h: must be positive");
    if (s.sim.max_iters <= 0) throw FormatError(sw + ".max_iters: must be positive");
    if (!(s.sim.stiffness_scale > 0.0)) throw FormatError(sw + ".stiffness_scale: must be positive");
    if (!(s.pin_weight >= 0.0)) throw FormatError(sw + ".pin_weight: must be non-negative");
  }
  return s;
}

inline json to_json(const SceneSpec& s) {
  json holes = json::array();
  for (const Polyline& h : s.domain.holes) holes.push_back(to_json(h));
  json pinned = json::array();
  for (const PinRegion& r : s.pinned) {
    switch (r.kind) {
      case PinRegion::Kind::circle:
        pinned.push_back({{"type", "circle"}, {"center", to_json(r.center)}, {"radius", r.radius}});
        break;
      case PinRegion::Kind::rect:
        pinned.push_back({{"type", "rect"}, {"min", to_json(r.min)}, {"max", to_json(r.max)}});
        break;
      case PinRegion::Kind::points:
        pinned.push_back({{"type", "points"}, {"points", to_json(r.points)}});
        break;
    }
  }
  json cuts = to_json(s.curve);
  cuts["tip_radius"] = s.tip_radius;
  json training = json::array();
  for (const CutCurve& c : s.training_cuts) training.push_back(to_json(c));
  return {{"format", kSceneFormat},
          {"domain", {{"outer", to_json(s.domain.outer)}, {"holes", holes}}},
          {"material",
           {{"mu", s.material.mu},
            {"lambda", s.material.lambda},
            {"density", s.material.density},
            {"thickness", s.material.thickness}}},
          {"gravity", to_json(s.gravity)},
          {"pinned", pinned},
          {"pin_spacing", s.pin_spacing},
          {"cuts", cuts},
          {"training_cuts", training},
          {"cubature", {{"n", s.cubature_n}, {"seed", s.cubature_seed}}},
          {"sim",
           {{"h", s.sim.h},
            {"tol", s.sim.tol},
            {"max_iters", s.sim.max_iters},
            {"pin_weight", s.pin_weight},
            {"stiffness_scale", s.sim.stiffness_scale},
            {"solver", to_string(s.sim.solver)}}}};
}

// ---------------------------------------------------------------------------
// Files

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline SceneSpec load_scene(const std::filesystem::path& path) { return scene_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Training config

inline json to_json(const NetworkConfig& c) {
  return {{"hidden", c.hidden},
          {"activation", to_string(c.activation)},
          {"k", c.k},
          {"sine_omega", c.sine_omega},
          {"height_input", c.height_input}};
}

inline NetworkConfig network_from_json(const json& j, const std::string& where) {
  detail::check_keys(j, {"hidden", "activation", "k", "sine_omega", "height_input"}, where);
  NetworkConfig c;
  if (const auto it = j.find("hidden"); it != j.end()) {
    if (!it->is_array()) throw FormatError(where + ".hidden: expected an array of widths");
    c.hidden.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto w = detail::integer((*it)[i], where + ".hidden[" + std::to_string(i) + "]");
      if (w <= 0) throw FormatError(where + ".hidden: widths must be positive");
      c.hidden.push_back(static_cast<int>(w));
    }
  }
  try {
    c.activation = activation_from_string(detail::string_or(j, "activation", to_string(c.activation), where));
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ".activation: " + e.what());
  }
  c.k = static_cast<int>(detail::integer_or(j, "k", c.k, where));
  if (c.k <= 0) throw FormatError(where + ".k: must be positive");
  c.sine_omega = detail::number_or(j, "sine_omega", c.sine_omega, where);
  c.height_input = detail::bool_or(j, "height_input", c.height_input, where);
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"mode", c.mode == TrainMode::data_free ? "data_free" : "data_driven"},
          {"steps", c.steps},
          {"batch_points", c.batch_points},
          {"batch_z", c.batch_z},
          {"z_radius", c.z_radius},
          {"ortho_weight", c.ortho_weight},
          {"pin_weight", c.pin_weight},
          {"alpha_samples", c.alpha_samples},
          {"lr", {{"initial", c.lr.initial}, {"final", c.lr.final}}},
          {"seed", c.seed},
          {"network", to_json(c.network)},
          {"output_init_scale", c.output_init_scale},
          {"batch_snapshots", c.batch_snapshots},
          {"z_init_scale", c.z_init_scale}};
}

inline TrainConfig train_config_from_json(const json& j) {
  const std::string w = "train";
  detail::check_keys(j, {"mode", "steps", "batch_points", "batch_z", "z_radius", "ortho_weight", "pin_weight",
                         "alpha_samples", "lr", "seed", "network", "output_init_scale", "batch_snapshots",
                         "z_init_scale"},
                     w);
  TrainConfig c;
  const std::string mode = detail::string_or(j, "mode", "data_free", w);
  if (mode == "data_driven") {
    c.mode = TrainMode::data_driven;
  } else if (mode != "data_free") {
    throw FormatError(w + ".mode: expected \"data_free\" or \"data_driven\"");
  }
  c.steps = static_cast<int>(detail::integer_or(j, "steps", c.steps, w));
  c.batch_points = static_cast<int>(detail::integer_or(j, "batch_points", c.batch_points, w));
  c.batch_z = static_cast<int>(detail::integer_or(j, "batch_z", c.batch_z, w));
  c.z_radius = detail::number_or(j, "z_radius", c.z_radius, w);
  c.ortho_weight = detail::number_or(j, "ortho_weight", c.ortho_weight, w);
  c.pin_weight = detail::number_or(j, "pin_weight", c.pin_weight, w);
  if (const auto it = j.find("alpha_samples"); it != j.end()) {
    if (!it->is_array()) throw FormatError(w + ".alpha_samples: expected an array");
    c.alpha_samples.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      c.alpha_samples.push_back(detail::number((*it)[i], w + ".alpha_samples[" + std::to_string(i) + "]"));
    }
  }
  if (const auto it = j.find("lr"); it != j.end()) {
    detail::check_keys(*it, {"initial", "final"}, w + ".lr");
    c.lr.initial = detail::number_or(*it, "initial", c.lr.initial, w + ".lr");
    c.lr.final = detail::number_or(*it, "final", c.lr.final, w + ".lr");
  }
  const auto seed = detail::integer_or(j, "seed", 0, w);
  if (seed < 0) throw FormatError(w + ".seed: must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  if (const auto it = j.find("network"); it != j.end()) c.network = network_from_json(*it, w + ".network");
  c.output_init_scale = detail::number_or(j, "output_init_scale", c.output_init_scale, w);
  c.batch_snapshots = static_cast<int>(detail::integer_or(j, "batch_snapshots", c.batch_snapshots, w));
  c.z_init_scale = detail::number_or(j, "z_init_scale", c.z_init_scale, w);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(w + ": " + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Little-endian float64 blobs

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return v;
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(const char* p) { return std::bit_cast<double>(get_u64(p)); }

inline std::string read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Checkpoints: "WLCK", u64 header length, JSON header, float64 parameters.

inline std::string encode_checkpoint(const NeuralBasis& net, const json& training = json::object()) {
  const NetworkConfig& c = net.config();
  json header = {{"format_version", kCheckpointFormat},
                 {"layer_dims", net.layer_dims()},
                 {"activation", to_string(c.activation)},
                 {"k", c.k},
                 {"sine_omega", c.sine_omega},
                 {"height_input", c.height_input},
                 {"normalization",
                  {{"xmin", c.normalization.xmin},
                   {"xmax", c.normalization.xmax},
                   {"ymin", c.normalization.ymin},
                   {"ymax", c.normalization.ymax}}},
                 {"num_parameters", net.num_parameters()},
                 {"checksum", detail::hex64(net.checksum())},
                 {"training", training}};
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, 4);
  detail::put_u64(out, text.size());
  out += text;
  const Eigen::VectorXd& p = net.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) detail::put_f64(out, p[i]);
  return out;
}

inline NeuralBasis decode_checkpoint(const std::string& bytes, json* training = nullptr) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const std::uint64_t hlen = detail::get_u64(bytes.data() + 4);
  if (hlen > bytes.size() - 12) throw FormatError("checkpoint: truncated header");
  json h;
  try {
    h = json::parse(bytes.substr(12, hlen));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  const std::string w = "checkpoint";
  detail::require_object(h, w);
  if (detail::integer(detail::member(h, "format_version", w), w + ".format_version") != kCheckpointFormat) {
    throw FormatError(w + ": unsupported format_version");
  }
  const json& dims = detail::member(h, "layer_dims", w);
  if (!dims.is_array() || dims.size() < 2) throw FormatError(w + ".layer_dims: expected at least two entries");
  NetworkConfig c;
  c.k = static_cast<int>(detail::integer(detail::member(h, "k", w), w + ".k"));
  c.hidden.clear();
  for (std::size_t i = 1; i + 1 < dims.size(); ++i) c.hidden.push_back(static_cast<int>(detail::integer(dims[i], w)));
  if (detail::integer(dims.front(), w) != 4 || detail::integer(dims.back(), w) != 3 * c.k) {
    throw FormatError(w + ".layer_dims: inconsistent with 4 inputs and 3k outputs");
  }
  try {
    c.activation = activation_from_string(detail::string_or(h, "activation", "", w));
  } catch (const std::invalid_argument& e) {
    throw FormatError(w + ".activation: " + e.what());
  }
  c.sine_omega = detail::number(detail::member(h, "sine_omega", w), w + ".sine_omega");
  c.height_input = detail::bool_or(h, "height_input", true, w);
  const json& n = detail::member(h, "normalization", w);
  c.normalization = {detail::number(detail::member(n, "xmin", w), w), detail::number(detail::member(n, "xmax", w), w),
                     detail::number(detail::member(n, "ymin", w), w), detail::number(detail::member(n, "ymax", w), w)};
  NeuralBasis net(c);
  const std::size_t count = static_cast<std::size_t>(net.num_parameters());
  if (bytes.size() - 12 - hlen != 8 * count) throw FormatError(w + ": parameter blob size does not match layer_dims");
  const char* blob = bytes.data() + 12 + hlen;
  for (std::size_t i = 0; i < count; ++i) net.parameters()[static_cast<Eigen::Index>(i)] = detail::get_f64(blob + 8 * i);
  if (const auto it = h.find("checksum"); it != h.end() && it->is_string()) {
    if (it->get<std::string>() != detail::hex64(net.checksum())) throw FormatError(w + ": checksum mismatch");
  }
  if (training) *training = h.value("training", json::object());
  return net;
}

inline void save_checkpoint(const std::filesystem::path& path, const NeuralBasis& net,
                            const json& training = json::object()) {
  write_text_file(path, encode_checkpoint(net, training));
}

inline NeuralBasis load_checkpoint(const std::filesystem::path& path, json* training = nullptr) {
  return decode_checkpoint(detail::read_binary(path), training);
}

// ---------------------------------------------------------------------------
// Snapshot datasets: <dir>/manifest.json plus one .bin per snapshot holding
// N (x, y) pairs followed by N (ux, uy, uz) triples, float64 little-endian.

inline void save_dataset(const std::filesystem::path& dir, const SnapshotDataset& ds) {
  ds.validate();
  std::filesystem::create_directories(dir);
  json snaps = json::array();
  for (std::size_t j = 0; j < ds.snapshots.size(); ++j) {
    const Snapshot& s = ds.snapshots[j];
    std::ostringstream name;
    name << "snapshot_" << std::setw(5) << std::setfill('0') << j << ".bin";
    std::string blob;
    blob.reserve(40 * s.points.size());
    for (const Point2& p : s.points) {
      detail::put_f64(blob, p.x());
      detail::put_f64(blob, p.y());
    }
    for (const Eigen::Vector3d& u : s.displacements) {
      for (int c = 0; c < 3; ++c) detail::put_f64(blob, u[c]);
    }
    write_text_file(dir / name.str(), blob);
    snaps.push_back({{"file", name.str()}, {"alpha", s.alpha}, {"num_points", s.points.size()}});
  }
  json cut = to_json(ds.curve);
  cut.erase("alpha");
  write_json_file(dir / "manifest.json",
                  {{"format", kDatasetFormat}, {"cut", cut}, {"tip_radius", ds.tip_radius}, {"snapshots", snaps}});
}

inline SnapshotDataset load_dataset(const std::filesystem::path& dir) {
  const json m = read_json_file(dir / "manifest.json");
  const std::string w = "manifest";
  detail::check_keys(m, {"format", "cut", "tip_radius", "snapshots"}, w);
  if (detail::integer(detail::member(m, "format", w), w + ".format") != kDatasetFormat) {
    throw FormatError(w + ".format: unsupported version");
  }
  SnapshotDataset ds;
  ds.curve = cut_from_json(detail::member(m, "cut", w), w + ".cut");
  ds.tip_radius = detail::number_or(m, "tip_radius", 0.0, w);
  const json& snaps = detail::member(m, "snapshots", w);
  if (!snaps.is_array()) throw FormatError(w + ".snapshots: expected an array");
  for (std::size_t j = 0; j < snaps.size(); ++j) {
    const std::string sw = w + ".snapshots[" + std::to_string(j) + "]";
    detail::check_keys(snaps[j], {"file", "alpha", "num_points"}, sw);
    Snapshot s;
    s.alpha = detail::number(detail::member(snaps[j], "alpha", sw), sw + ".alpha");
    const auto n = detail::integer(detail::member(snaps[j], "num_points", sw), sw + ".num_points");
    const std::string file = detail::string_or(snaps[j], "file", "", sw);
    if (n <= 0 || file.empty()) throw FormatError(sw + ": needs a file and a positive num_points");
    const std::string blob = detail::read_binary(dir / file);
    if (blob.size() != 40 * static_cast<std::size_t>(n)) throw FormatError(sw + ": " + file + " has the wrong size");
    const char* p = blob.data();
    for (std::int64_t i = 0; i < n; ++i, p += 16) s.points.emplace_back(detail::get_f64(p), detail::get_f64(p + 8));
    for (std::int64_t i = 0; i < n; ++i, p += 24) {
      s.displacements.emplace_back(detail::get_f64(p), detail::get_f64(p + 8), detail::get_f64(p + 16));
    }
    ds.snapshots.push_back(std::move(s));
  }
  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(w + ": " + e.what());
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Winding raster

struct FieldRaster {
  int nx = 0;
  int ny = 0;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  std::vector<double> values;  // row-major, rows ordered by increasing y

  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }
  Point2 cell_center(int i, int j) const {
    return {xmin + (i + 0.5) * (xmax - xmin) / nx, ymin + (j + 0.5) * (ymax - ymin) / ny};
  }
};

/// Smoothed winding number sampled at cell centers of an n x n grid.
inline FieldRaster rasterize_winding(const WindingField& field, const Point2& lo, const Point2& hi, int n) {
  if (n <= 0) throw std::invalid_argument("raster size must be positive");
  FieldRaster r{n, n, lo.x(), hi.x(), lo.y(), hi.y(), {}};
  r.values.resize(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) r.values[static_cast<std::size_t>(j) * n + i] = field.evaluate(r.cell_center(i, j)).value;
  }
  return r;
}

inline std::string raster_to_csv(const FieldRaster& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "nx,ny,xmin,xmax,ymin,ymax\n";
  os << r.nx << ',' << r.ny << ',' << r.xmin << ',' << r.xmax << ',' << r.ymin << ',' << r.ymax << '\n';
  for (int j = 0; j < r.ny; ++j) {
    for (int i = 0; i < r.nx; ++i) os << (i ? "," : "") << r.at(i, j);
    os << '\n';
  }
  return os.str();
}

inline FieldRaster raster_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "nx,ny,xmin,xmax,ymin,ymax") throw FormatError("raster: bad header");
  FieldRaster r;
  char comma = 0;
  if (!std::getline(in, line)) throw FormatError("raster: missing size line");
  std::istringstream head(line);
  head >> r.nx >> comma >> r.ny >> comma >> r.xmin >> comma >> r.xmax >> comma >> r.ymin >> comma >> r.ymax;
  if (!head || r.nx <= 0 || r.ny <= 0) throw FormatError("raster: bad size line");
  for (int j = 0; j < r.ny; ++j) {
    if (!std::getline(in, line)) throw FormatError("raster: missing rows");
    std::istringstream row(line);
    for (int i = 0; i < r.nx; ++i) {
      double v = 0;
      if (i) row >> comma;
      row >> v;
      if (!row) throw FormatError("raster: bad value in row " + std::to_string(j));
      r.values.push_back(v);
    }
  }
  return r;
}

}  // namespace windlift::io
